#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lmnet/config.hpp"
#include "lmnet/map_io.hpp"
#include "lmnet/pipeline.hpp"
#include "lmnet/render.hpp"

using namespace lmnet;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("lmnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(LMNET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no lmnet::Error thrown";
  return ErrorKind::Usage;
}

// Small grid and network so CLI round trips stay quick.
constexpr const char* kSmallConfig = R"({
  "projection": {"width": 128, "height": 16, "azimuth_step": 0.0110447, "elevation_step": 0.0139626},
  "network": {"encoder_channels": 4, "context_channels": 8, "decoder_channels": 4},
  "train": {"epochs": 2, "batch_size": 1}
})";

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const PipelineConfig def;
  const std::string text = dump_config(def);
  const PipelineConfig back = parse_config(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.projection.width, 512);
  EXPECT_EQ(back.nms.min_score, 5);
}

TEST(Config, PartialOverridesAndUnknownKeys) {
  const auto c = parse_config(R"({"train": {"learning_rate": 0.5}, "nms": {"neighbor_radius": {"car": 2.0}}})");
  EXPECT_EQ(c.train.learning_rate, 0.5);
  EXPECT_EQ(c.nms.neighbor_radius[1], 2.0);
  EXPECT_EQ(c.nms.neighbor_radius[2], 0.6);
  EXPECT_EQ(kind_of([] { parse_config(R"({"train": {"lr": 1}})"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_config(R"({"train": )"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_config(R"({"train": {"epochs": "many"}})"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_config(R"({"network": {"encoder_channels": 0}})"); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/config.json"); }), ErrorKind::Io);
}

TEST(Config, SynthFollowsProjection) {
  const auto c = parse_config(kSmallConfig);
  EXPECT_EQ(c.synth.projection.width, 128);
}

TEST(ExitCodes, Table) {
  EXPECT_EQ(exit_code(ErrorKind::Usage), kExitUsage);
  EXPECT_EQ(exit_code(ErrorKind::Io), kExitIo);
  for (auto k : {ErrorKind::Format, ErrorKind::Version, ErrorKind::Truncated, ErrorKind::Parse, ErrorKind::Calib,
                 ErrorKind::ShapeMismatch, ErrorKind::Corruption})
    EXPECT_EQ(exit_code(k), kExitFormat) << to_string(k);
  EXPECT_EQ(exit_code(ErrorKind::Divergence), kExitDivergence);
  for (auto k : {ErrorKind::DegenerateScene, ErrorKind::Capacity, ErrorKind::UndefinedAngle, ErrorKind::InvalidArgument})
    EXPECT_EQ(exit_code(k), kExitData);
}

TEST(MapIo, RoundTripAndErrors) {
  std::vector<Point3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({10.0f + 0.05f * i, -3.0f + 0.02f * i, -1.0f + 0.005f * i, 0.001f * i});
  const auto map = encode_frontal_view(pts, ProjectionConfig{});
  const auto bytes = encode_map(map);
  EXPECT_EQ(bytes.size(), 16u + 5u * 4u * 64u * 512u + 64u * 512u);
  const auto back = decode_map(bytes);
  EXPECT_EQ(encode_map(back), bytes);
  EXPECT_EQ(back.valid, map.valid);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_map(bad); }), ErrorKind::Format);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(kind_of([&] { decode_map(bad); }), ErrorKind::Version);
  bad.assign(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(kind_of([&] { decode_map(bad); }), ErrorKind::Truncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_map(bad); }), ErrorKind::Format);
  bad = bytes;
  bad.back() = 7;
  EXPECT_NE(kind_of([&] { decode_map(bad); }), ErrorKind::Usage);
}

TEST(Render, ChannelsAndObjectness) {
  const auto map = encode_frontal_view(std::vector<Point3>{{10, 0, 0, 0.2f}, {20, 1, 0, 0.8f}}, ProjectionConfig{});
  const auto img = render_channel(map, 0);
  ASSERT_EQ(img.pixels.size(), 64u * 512u);
  int lit = 0, lo = 0, hi = 0;
  for (auto v : img.pixels) {
    lit += v != 0;
    lo += v == 0;
    hi += v == 255;
  }
  EXPECT_EQ(hi, 1);
  EXPECT_EQ(lit, 1);  // the dimmest valid cell maps to 0
  EXPECT_EQ(kind_of([&] { render_channel(map, 5); }), ErrorKind::InvalidArgument);

  Tensor obj({4, 64, 512});
  const auto cell = *project(Point3{10, 0, 0, 0.2f}, ProjectionConfig{});
  obj[2 * 64 * 512 + static_cast<std::size_t>(cell.row) * 512 + cell.col] = 1.0f;
  const auto rgb = render_objectness(obj, map.valid);
  const std::size_t p = 3 * (static_cast<std::size_t>(cell.row) * 512 + cell.col);
  EXPECT_EQ(rgb.pixels[p + 1], kClassColors[2][1]);

  TempDir dir;
  write_pgm(img, dir.path() / "a.pgm");
  EXPECT_EQ(slurp(dir.path() / "a.pgm").rfind("P5\n512 64\n255\n", 0), 0u);
  EXPECT_EQ(fs::file_size(dir.path() / "a.pgm"), 14u + 64u * 512u);
}

TEST(Pipeline, StageStats) {
  const auto s = stage_stats({0.004, 0.001, 0.002, 0.003, 0.010});
  EXPECT_NEAR(s.mean_ms, 4.0, 1e-9);
  EXPECT_NEAR(s.median_ms, 3.0, 1e-9);
  EXPECT_NEAR(s.p95_ms, 10.0, 1e-9);
}

TEST(Pipeline, BenchmarkReport) {
  PipelineConfig cfg = parse_config(kSmallConfig);
  cfg.synth.seed = 3;
  const auto params = build<float>(1, cfg.network);
  std::vector<std::vector<Point3>> clouds{synth_scene(cfg.synth).points, {}};
  const auto report = benchmark(params, clouds, cfg, 10, 1);
  EXPECT_EQ(report.frames, 10);
  EXPECT_EQ(report.warmup, 1);
  EXPECT_FALSE(report.machine.empty());
  const double stages = report.preprocess.mean_ms + report.forward.mean_ms + report.postprocess.mean_ms;
  EXPECT_LE(stages, report.total.mean_ms * 1.0001 + 1e-6);
  EXPECT_GE(stages, report.total.mean_ms * 0.9);
  EXPECT_GT(report.fps, 0.0);
  EXPECT_NE(timing_json(report).find("\"frames\": 10"), std::string::npos);
  EXPECT_FALSE(timing_table(report).empty());

  const auto frame = run_frame(params, std::vector<Point3>{}, cfg);
  EXPECT_TRUE(frame.detections.empty());
}

TEST(Cli, EndToEnd) {
  TempDir dir;
  const fs::path cfg = dir.path() / "small.json";
  std::ofstream(cfg) << kSmallConfig;
  const std::string c = "--config " + cfg.string() + " ";

  EXPECT_EQ(run(""), kExitUsage);
  EXPECT_EQ(run("frobnicate"), kExitUsage);
  EXPECT_EQ(run("dump-config --output " + (dir.path() / "dump.json").string()), kExitOk);
  EXPECT_EQ(parse_config(slurp(dir.path() / "dump.json")).projection.width, 512);

  const fs::path a = dir.path() / "a", b = dir.path() / "b";
  ASSERT_EQ(run(c + "synth --output " + a.string() + " --count 3 --seed 9"), kExitOk);
  ASSERT_EQ(run(c + "synth --output " + b.string() + " --count 3 --seed 9"), kExitOk);
  for (const auto& sub : {"velodyne/000001.bin", "label_2/000002.txt", "calib/000000.txt"})
    EXPECT_EQ(slurp(a / sub), slurp(b / sub)) << sub;
  EXPECT_EQ(run(c + "synth --output " + a.string() + " --count 3 --seed 9"), kExitUsage);
  EXPECT_EQ(run(c + "synth --output " + a.string() + " --count 3 --seed 10 --force"), kExitOk);
  EXPECT_NE(slurp(a / "velodyne/000001.bin"), slurp(b / "velodyne/000001.bin"));

  const fs::path map = dir.path() / "m.lmfv";
  EXPECT_EQ(run(c + "encode --input " + (b / "velodyne/000000.bin").string() + " --output " + map.string()), kExitOk);
  EXPECT_EQ(run(c + "render --map " + map.string() + " --output " + (dir.path() / "r").string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir.path() / "r" / "m_range.pgm"));
  EXPECT_EQ(run(c + "render --map " + (b / "velodyne/000000.bin").string() + " --output " + (dir.path() / "r").string()),
            kExitFormat);

  const fs::path w = dir.path() / "w.lmnw";
  ASSERT_EQ(run(c + "train --dataset " + b.string() + " --weights-out " + w.string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir.path() / "loss_history.csv"));
  EXPECT_NE(slurp(dir.path() / "train_summary.json").find("initial_loss"), std::string::npos);
  EXPECT_EQ(run(c + "train --dataset " + (dir.path() / "missing").string() + " --weights-out " + w.string()), kExitIo);

  const fs::path out = dir.path() / "det";
  EXPECT_EQ(run(c + "infer --input " + b.string() + " --weights " + w.string() + " --output " + out.string() + " --render"), kExitOk);
  EXPECT_TRUE(fs::exists(out / "000002.txt"));
  EXPECT_TRUE(fs::exists(out / "000002_objectness.ppm"));
  EXPECT_EQ(run(c + "infer --input " + b.string() + " --weights " + map.string() + " --output " + out.string()), kExitFormat);
  // widths come from the weight file, so the default grid works too
  EXPECT_EQ(run("infer --input " + b.string() + " --weights " + w.string() + " --output " + out.string()), kExitOk);

  // labels scored against themselves
  EXPECT_EQ(run("eval --detections " + (b / "label_2").string() + " --labels " + (b / "label_2").string() + " --output " +
                (dir.path() / "eval.json").string()),
            kExitOk);
  EXPECT_NE(slurp(dir.path() / "eval.json").find("\"recall\": 1.0"), std::string::npos);
  EXPECT_EQ(run(c + "bench --synthetic 1 --repetitions 2 --warmup 0 --json " + (dir.path() / "t.json").string()), kExitOk);
  EXPECT_NE(slurp(dir.path() / "t.json").find("\"frames\": 2"), std::string::npos);
}
