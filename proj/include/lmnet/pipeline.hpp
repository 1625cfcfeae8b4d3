#pragma once

#include <span>
#include <string>
#include <vector>

#include "lmnet/config.hpp"
#include "lmnet/network.hpp"
#include "lmnet/postproc.hpp"

namespace lmnet {

/// Wall-clock seconds per stage of one frame.
struct StageTimes {
  double preprocess = 0.0;  // crop + frontal-view encoding
  double forward = 0.0;
  double postprocess = 0.0;  // extraction, scoring and NMS
  double total = 0.0;
};

struct FrameResult {
  FrontalViewMap map;
  Tensor objectness;
  Tensor corners;
  std::vector<Candidate> detections;
  StageTimes times;
};

/// Raw cloud to final detections.
FrameResult run_frame(const LMNetParams& params, std::span<const Point3> cloud, const PipelineConfig& config,
                      ConvPath path = ConvPath::Im2col);

struct StageStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

StageStats stage_stats(std::vector<double> seconds);

struct TimingReport {
  int frames = 0;
  int warmup = 0;
  int threads = 1;
  std::string machine;
  std::string conv_path;
  StageStats preprocess;
  StageStats forward;
  StageStats postprocess;
  StageStats total;
  double fps = 0.0;  // from the mean total
};

/// CPU model from /proc/cpuinfo plus the logical core count.
std::string machine_descriptor();

/// Runs `warmup` unmeasured frames then exactly `repetitions` measured ones,
/// cycling through `clouds`.
TimingReport benchmark(const LMNetParams& params, std::span<const std::vector<Point3>> clouds,
                       const PipelineConfig& config, int repetitions, int warmup = 3,
                       ConvPath path = ConvPath::Im2col);

std::string timing_json(const TimingReport& report);
std::string timing_table(const TimingReport& report);

}  // namespace lmnet
