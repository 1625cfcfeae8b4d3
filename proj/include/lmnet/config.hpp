#pragma once

#include <filesystem>
#include <string>

#include "lmnet/dataset.hpp"
#include "lmnet/network.hpp"
#include "lmnet/postproc.hpp"
#include "lmnet/train.hpp"

namespace lmnet {

/// Everything a CLI run can be configured with. Serialised as JSON; every
/// key is optional and unknown keys are rejected.
struct PipelineConfig {
  ProjectionConfig projection;
  CropBounds crop;
  NetworkWidths network;
  TrainConfig train;
  AugmentConfig augment;
  NmsConfig nms;
  SynthConfig synth;
  std::string dataset_path;
  std::string weights_path;
  std::string output_path;
};

void validate(const PipelineConfig& config);

std::string dump_config(const PipelineConfig& config);
/// Parses a JSON document over the defaults. Throws Parse on malformed JSON
/// or unknown keys.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace lmnet
