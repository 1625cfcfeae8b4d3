#include "lmnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <thread>

namespace lmnet {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::json stats_json(const StageStats& s) {
  return {{"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
}

}  // namespace

FrameResult run_frame(const LMNetParams& params, std::span<const Point3> cloud, const PipelineConfig& config,
                      ConvPath path) {
  FrameResult out;
  const auto start = Clock::now();

  auto t = Clock::now();
  const auto cropped = crop_range(cloud, config.crop);
  out.map = encode_frontal_view(cropped, config.projection);
  out.times.preprocess = seconds_since(t);

  t = Clock::now();
  ForwardOptions options;
  options.path = path;
  options.record = false;
  auto trace = forward(params, out.map.channels, options);
  out.objectness = std::move(trace.objectness);
  out.corners = std::move(trace.corners);
  out.times.forward = seconds_since(t);

  t = Clock::now();
  auto candidates = extract_candidates(out.objectness, out.corners, out.map, config.nms);
  score_candidates(candidates, config.nms);
  out.detections = nms(std::move(candidates), config.nms);
  out.times.postprocess = seconds_since(t);

  out.times.total = seconds_since(start);
  return out;
}

StageStats stage_stats(std::vector<double> seconds) {
  StageStats s;
  if (seconds.empty()) return s;
  std::sort(seconds.begin(), seconds.end());
  const std::size_t n = seconds.size();
  s.mean_ms = 1e3 * std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(n);
  s.median_ms = 1e3 * (n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]));
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = 1e3 * seconds[std::clamp<std::size_t>(rank, 1, n) - 1];
  return s;
}

std::string machine_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return model + " (" + std::to_string(std::thread::hardware_concurrency()) + " logical cores)";
}

TimingReport benchmark(const LMNetParams& params, std::span<const std::vector<Point3>> clouds,
                       const PipelineConfig& config, int repetitions, int warmup, ConvPath path) {
  if (repetitions < 1) fail(ErrorKind::InvalidArgument, "bench: repetitions must be >= 1");
  if (warmup < 0) fail(ErrorKind::InvalidArgument, "bench: warm-up count must be >= 0");
  if (clouds.empty()) fail(ErrorKind::InvalidArgument, "bench: no input clouds");

  for (int i = 0; i < warmup; ++i) run_frame(params, clouds[static_cast<std::size_t>(i) % clouds.size()], config, path);

  std::vector<double> pre, fwd, post, total;
  for (int i = 0; i < repetitions; ++i) {
    const auto frame = run_frame(params, clouds[static_cast<std::size_t>(i) % clouds.size()], config, path);
    pre.push_back(frame.times.preprocess);
    fwd.push_back(frame.times.forward);
    post.push_back(frame.times.postprocess);
    total.push_back(frame.times.total);
  }

  TimingReport r;
  r.frames = repetitions;
  r.warmup = warmup;
  r.threads = num_threads();
  r.machine = machine_descriptor();
  r.conv_path = path == ConvPath::Direct ? "direct" : "im2col";
  r.preprocess = stage_stats(pre);
  r.forward = stage_stats(fwd);
  r.postprocess = stage_stats(post);
  r.total = stage_stats(total);
  r.fps = r.total.mean_ms > 0 ? 1e3 / r.total.mean_ms : 0.0;
  return r;
}

std::string timing_json(const TimingReport& r) {
  const nlohmann::json doc{
      {"frames", r.frames},
      {"warmup", r.warmup},
      {"threads", r.threads},
      {"machine", r.machine},
      {"conv_path", r.conv_path},
      {"stages",
       {{"preprocess", stats_json(r.preprocess)},
        {"forward", stats_json(r.forward)},
        {"postprocess", stats_json(r.postprocess)},
        {"total", stats_json(r.total)}}},
      {"fps", r.fps},
  };
  return doc.dump(2) + "\n";
}

std::string timing_table(const TimingReport& r) {
  std::string out = "machine: " + r.machine + "\nthreads: " + std::to_string(r.threads) +
                    "  frames: " + std::to_string(r.frames) + "  warm-up: " + std::to_string(r.warmup) +
                    "  conv: " + r.conv_path + "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s\n", "stage", "mean ms", "median ms", "p95 ms");
  out += line;
  const auto row = [&](const char* name, const StageStats& s) {
    std::snprintf(line, sizeof line, "%-12s %10.2f %10.2f %10.2f\n", name, s.mean_ms, s.median_ms, s.p95_ms);
    out += line;
  };
  row("preprocess", r.preprocess);
  row("forward", r.forward);
  row("postprocess", r.postprocess);
  row("total", r.total);
  std::snprintf(line, sizeof line, "fps: %.2f\n", r.fps);
  out += line;
  return out;
}

}  // namespace lmnet
