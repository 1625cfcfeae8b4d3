#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmnet/config.hpp"
#include "lmnet/map_io.hpp"
#include "lmnet/pipeline.hpp"
#include "lmnet/render.hpp"
#include "lmnet/weights_io.hpp"

namespace fs = std::filesystem;
using namespace lmnet;

namespace {

constexpr const char* kChannelNames[5] = {"reflection", "range", "forward", "side", "height"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

// Velodyne scans under `input`: a single file, a directory of .bin files, or
// a dataset root with a velodyne/ subdirectory. Sorted by file name.
std::vector<fs::path> list_scans(const fs::path& input) {
  if (!fs::exists(input)) fail(ErrorKind::Io, "no such file or directory: " + input.string());
  if (fs::is_regular_file(input)) return {input};
  const fs::path dir = fs::is_directory(input / "velodyne") ? input / "velodyne" : input;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return files;
}

Calibration calib_for(const fs::path& scan, const std::optional<fs::path>& calib_file) {
  if (calib_file) return read_kitti_calib(*calib_file);
  const fs::path sibling = scan.parent_path().parent_path() / "calib" / (scan.stem().string() + ".txt");
  if (scan.parent_path().filename() == "velodyne" && fs::exists(sibling)) return read_kitti_calib(sibling);
  return Calibration::canonical();
}

void render_map(const FrontalViewMap& map, const fs::path& dir, const std::string& stem) {
  ensure_dir(dir);
  for (int c = 0; c < 5; ++c) {
    write_pgm(render_channel(map, c), dir / (stem + "_" + kChannelNames[c] + ".pgm"));
  }
}

LMNetParams weights_or_fresh(const std::string& path, const PipelineConfig& config) {
  if (!path.empty()) return load_weights(path);
  return build<float>(config.train.seed, config.network);
}

std::string frame_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

struct Options {
  std::string config_path;
  int threads = 0;
};

// ---- encode ---------------------------------------------------------------

struct EncodeArgs {
  std::string input;
  std::string output;
  std::string render_dir;
};

void cmd_encode(const EncodeArgs& a, const PipelineConfig& config) {
  const auto points = read_kitti_bin(a.input);
  const auto map = encode_frontal_view(crop_range(points, config.crop), config.projection);
  save_map(map, a.output);
  std::cout << "encoded " << points.size() << " points, " << map.valid_count() << " valid cells -> " << a.output
            << "\n";
  if (!a.render_dir.empty()) render_map(map, a.render_dir, fs::path(a.output).stem().string());
}

// ---- render ---------------------------------------------------------------

struct RenderArgs {
  std::string map;
  std::string output_dir;
};

void cmd_render(const RenderArgs& a) {
  render_map(load_map(a.map), a.output_dir, fs::path(a.map).stem().string());
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string output;
  int count = 10;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& a, const PipelineConfig& config) {
  if (a.count < 1) fail(ErrorKind::Usage, "synth: --count must be >= 1");
  const fs::path root(a.output);
  if (fs::exists(root) && !fs::is_empty(root) && !a.force) {
    fail(ErrorKind::Usage, "synth: output directory " + root.string() + " is not empty (use --force)");
  }
  if (a.force && fs::exists(root)) {
    for (const char* sub : {"velodyne", "label_2", "calib"}) fs::remove_all(root / sub);
  }
  const DatasetPaths paths{root};
  SynthConfig sc = config.synth;
  sc.projection = config.projection;
  const std::uint64_t base = a.seed.value_or(config.synth.seed);
  for (int i = 0; i < a.count; ++i) {
    sc.seed = base ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
    save_scene(synth_scene(sc), paths, frame_id(i));
  }
  std::cout << "wrote " << a.count << " scenes to " << root.string() << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string weights_out;
  std::string init_weights;
  std::string history;
  std::string summary;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, PipelineConfig config) {
  if (a.epochs) config.train.epochs = *a.epochs;
  if (a.learning_rate) config.train.learning_rate = *a.learning_rate;
  if (a.batch_size) config.train.batch_size = *a.batch_size;
  if (a.seed) config.train.seed = *a.seed;
  validate(config.train);

  const DatasetPaths paths{a.dataset};
  const auto frames = list_frames(paths);
  if (frames.empty()) fail(ErrorKind::DegenerateScene, "train: no frames under " + paths.velodyne().string());
  std::vector<Scene> scenes;
  scenes.reserve(frames.size());
  for (const auto& id : frames) scenes.push_back(crop_scene(load_scene(paths, id), config.crop));

  const SceneSampleSource data(std::move(scenes), config.projection, config.augment);
  std::size_t object_pixels = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto targets = data.sample(i, 0).targets;
    object_pixels += targets.object_pixels();
    if (targets.background_pixels() == 0) {
      fail(ErrorKind::DegenerateScene, "train: frame " + frames[i] + " has no background pixels");
    }
  }
  if (object_pixels == 0) fail(ErrorKind::DegenerateScene, "train: no labelled object pixels in the dataset");

  const fs::path out_dir = fs::path(a.weights_out).parent_path();
  if (!out_dir.empty()) ensure_dir(out_dir);
  LMNetParams params = weights_or_fresh(a.init_weights, config);
  const double initial = evaluate_loss(params, data, config.train.background_balance);
  std::cout << "frames " << data.size() << ", initial loss " << initial << "\n";

  std::string csv = "epoch,loss\n";
  const auto result = train(params, data, config.train, [&](const EpochReport& r) {
    char line[64];
    std::snprintf(line, sizeof line, "%d,%.9g\n", r.epoch, r.mean_loss);
    csv += line;
    std::cout << "epoch " << r.epoch << " loss " << r.mean_loss << std::endl;
  });

  save_weights(params, a.weights_out);
  write_text(a.history.empty() ? out_dir / "loss_history.csv" : fs::path(a.history), csv);
  const nlohmann::json summary{
      {"frames", data.size()},
      {"epochs", config.train.epochs},
      {"initial_loss", initial},
      {"final_epoch_loss", result.history.empty() ? initial : result.history.back().mean_loss},
      {"final_loss", evaluate_loss(params, data, config.train.background_balance)},
  };
  write_text(a.summary.empty() ? out_dir / "train_summary.json" : fs::path(a.summary), summary.dump(2) + "\n");
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string input;
  std::string weights;
  std::string output;
  std::string calib;
  bool render = false;
};

void cmd_infer(const InferArgs& a, const PipelineConfig& config) {
  const LMNetParams params = load_weights(a.weights);
  const fs::path out_dir(a.output);
  ensure_dir(out_dir);
  const std::optional<fs::path> calib_file = a.calib.empty() ? std::nullopt : std::optional<fs::path>(a.calib);
  std::size_t total = 0;
  for (const fs::path& scan : list_scans(a.input)) {
    const auto points = read_kitti_bin(scan);
    const auto frame = run_frame(params, points, config);
    const std::string stem = scan.stem().string();
    write_text(out_dir / (stem + ".txt"), format_kitti_results(frame.detections, calib_for(scan, calib_file)));
    write_text(out_dir / (stem + ".jsonl"), format_json_lines(frame.detections));
    if (a.render) write_ppm(render_objectness(frame.objectness, frame.map.valid), out_dir / (stem + "_objectness.ppm"));
    std::cout << stem << ": " << frame.detections.size() << " detections\n";
    total += frame.detections.size();
  }
  std::cout << "total detections " << total << "\n";
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string input;
  std::string weights;
  std::string json;
  int repetitions = 10;
  int warmup = 3;
  int synthetic = 0;
  bool compare_direct = false;
};

void cmd_bench(const BenchArgs& a, const PipelineConfig& config) {
  std::vector<std::vector<Point3>> clouds;
  if (!a.input.empty()) {
    for (const fs::path& scan : list_scans(a.input)) clouds.push_back(read_kitti_bin(scan));
  }
  for (int i = 0; i < a.synthetic; ++i) {
    SynthConfig sc = config.synth;
    sc.projection = config.projection;
    sc.seed = config.synth.seed + static_cast<std::uint64_t>(i);
    clouds.push_back(synth_scene(sc).points);
  }
  if (clouds.empty()) fail(ErrorKind::Usage, "bench: give --input or --synthetic");

  const LMNetParams params = weights_or_fresh(a.weights, config);
  const TimingReport report = benchmark(params, clouds, config, a.repetitions, a.warmup);
  std::cout << timing_table(report);
  nlohmann::json doc = nlohmann::json::parse(timing_json(report));

  if (a.compare_direct) {
    const TimingReport direct = benchmark(params, clouds, config, a.repetitions, a.warmup, ConvPath::Direct);
    std::cout << "\n" << timing_table(direct);
    double divergence = 0.0;
    for (const auto& cloud : clouds) {
      const auto fast = run_frame(params, cloud, config, ConvPath::Im2col);
      const auto slow = run_frame(params, cloud, config, ConvPath::Direct);
      divergence = std::max({divergence, max_abs_diff(fast.objectness, slow.objectness),
                             max_abs_diff(fast.corners, slow.corners)});
    }
    const double speedup = direct.forward.mean_ms / report.forward.mean_ms;
    std::printf("\nim2col speedup over direct (forward): %.2fx, max output divergence %.3g\n", speedup, divergence);
    doc["direct"] = nlohmann::json::parse(timing_json(direct));
    doc["im2col_speedup"] = speedup;
    doc["max_divergence"] = divergence;
  }
  if (!a.json.empty()) write_text(a.json, doc.dump(2) + "\n");
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string detections;
  std::string labels;
  std::string calib_dir;
  std::string output;
  double iou = 0.5;
};

std::map<std::string, fs::path> text_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files[entry.path().stem().string()] = entry.path();
  }
  return files;
}

void cmd_eval(const EvalArgs& a) {
  const auto det_files = text_files(a.detections);
  const auto gt_files = text_files(a.labels);
  std::vector<std::string> ids;
  for (const auto& [id, path] : gt_files) ids.push_back(id);
  for (const auto& [id, path] : det_files) {
    if (!gt_files.count(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  std::vector<std::vector<Detection>> detections;
  std::vector<std::vector<Box3D>> ground_truth;
  for (const auto& id : ids) {
    Calibration calib = Calibration::canonical();
    if (!a.calib_dir.empty()) {
      const fs::path c = fs::path(a.calib_dir) / (id + ".txt");
      if (fs::exists(c)) calib = read_kitti_calib(c);
    }
    std::vector<Detection> dets;
    if (const auto it = det_files.find(id); it != det_files.end()) {
      for (const KittiObject& obj : parse_kitti_objects(read_text(it->second))) {
        const auto cls = class_from_kitti(obj.type);
        if (!cls) continue;
        dets.push_back({box_from_kitti(obj, *cls, calib), obj.score.value_or(1.0)});
      }
    }
    detections.push_back(std::move(dets));
    const auto gt = gt_files.find(id);
    ground_truth.push_back(gt == gt_files.end() ? std::vector<Box3D>{} : parse_kitti_label(read_text(gt->second), calib));
  }

  nlohmann::json doc{{"iou_threshold", a.iou}, {"frames", ids.size()}};
  std::printf("%-12s %9s %9s %9s %5s %5s %5s\n", "class", "precision", "recall", "AP", "TP", "FP", "GT");
  for (ObjectClass cls : kObjectClasses) {
    const EvalResult r = evaluate_class(detections, ground_truth, cls, a.iou);
    const std::string name(class_name(cls));
    std::printf("%-12s %9.4f %9.4f %9.4f %5d %5d %5d\n", name.c_str(), r.precision, r.recall, r.ap, r.true_positives,
                r.false_positives, r.ground_truth);
    doc["classes"][name] = {{"precision", r.precision}, {"recall", r.recall}, {"ap", r.ap},
                            {"true_positives", r.true_positives}, {"false_positives", r.false_positives},
                            {"ground_truth", r.ground_truth}};
  }
  if (!a.output.empty()) write_text(a.output, doc.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR frontal-view multi-class 3D object detector"};
  app.require_subcommand(1);
  Options opts;
  app.add_option("--config", opts.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--threads", opts.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  EncodeArgs encode;
  auto* encode_cmd = app.add_subcommand("encode", "point cloud to frontal-view map");
  encode_cmd->add_option("--input", encode.input, "KITTI .bin scan")->required();
  encode_cmd->add_option("--output", encode.output, "output .lmfv map")->required();
  encode_cmd->add_option("--render", encode.render_dir, "directory for one PGM per channel");

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "render a map file as grayscale images");
  render_cmd->add_option("--map", render.map, "input .lmfv map")->required();
  render_cmd->add_option("--output", render.output_dir, "output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic KITTI-layout dataset");
  synth_cmd->add_option("--output", synth.output, "dataset root")->required();
  synth_cmd->add_option("--count", synth.count, "number of scenes");
  synth_cmd->add_option("--seed", synth.seed, "base seed (default: config synth.seed)");
  synth_cmd->add_flag("--force", synth.force, "overwrite a nonempty output directory");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train from a KITTI-layout dataset");
  train_cmd->add_option("--dataset", train_args.dataset, "dataset root")->required();
  train_cmd->add_option("--weights-out", train_args.weights_out, "output .lmnw weights")->required();
  train_cmd->add_option("--init-weights", train_args.init_weights, "start from these weights");
  train_cmd->add_option("--history", train_args.history, "loss CSV (default: loss_history.csv next to weights)");
  train_cmd->add_option("--summary", train_args.summary, "summary JSON (default: train_summary.json next to weights)");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--lr", train_args.learning_rate);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--seed", train_args.seed);

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "detect objects in one scan or a directory of scans");
  infer_cmd->add_option("--input", infer.input, ".bin file, directory of .bin files, or dataset root")->required();
  infer_cmd->add_option("--weights", infer.weights, ".lmnw weights")->required();
  infer_cmd->add_option("--output", infer.output, "output directory")->required();
  infer_cmd->add_option("--calib", infer.calib, "calibration for KITTI result lines");
  infer_cmd->add_flag("--render", infer.render, "write a class-colored objectness PPM per scan");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "time the full single-frame pipeline");
  bench_cmd->add_option("--input", bench.input, ".bin file, directory or dataset root");
  bench_cmd->add_option("--synthetic", bench.synthetic, "also bench on N synthetic scenes");
  bench_cmd->add_option("--weights", bench.weights, "weights (default: freshly initialised)");
  bench_cmd->add_option("--repetitions", bench.repetitions, "measured frames")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bench.warmup, "unmeasured warm-up frames")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--json", bench.json, "write the report as JSON");
  bench_cmd->add_flag("--compare-direct", bench.compare_direct, "also time the direct convolution path");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "per-class precision, recall and AP");
  eval_cmd->add_option("--detections", eval.detections, "directory of KITTI result files")->required();
  eval_cmd->add_option("--labels", eval.labels, "directory of KITTI label files")->required();
  eval_cmd->add_option("--calib", eval.calib_dir, "calibration directory (default: canonical)");
  eval_cmd->add_option("--iou", eval.iou, "BEV IoU threshold");
  eval_cmd->add_option("--output", eval.output, "metrics JSON");

  std::string dump_path;
  auto* dump_cmd = app.add_subcommand("dump-config", "print the effective configuration");
  dump_cmd->add_option("--output", dump_path, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const PipelineConfig config = opts.config_path.empty() ? PipelineConfig{} : load_config(opts.config_path);
    if (opts.threads > 0) set_num_threads(opts.threads);

    if (*encode_cmd) cmd_encode(encode, config);
    else if (*render_cmd) cmd_render(render);
    else if (*synth_cmd) cmd_synth(synth, config);
    else if (*train_cmd) cmd_train(train_args, config);
    else if (*infer_cmd) cmd_infer(infer, config);
    else if (*bench_cmd) cmd_bench(bench, config);
    else if (*eval_cmd) cmd_eval(eval);
    else if (*dump_cmd) {
      if (dump_path.empty()) std::cout << dump_config(config);
      else write_text(dump_path, dump_config(config));
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
