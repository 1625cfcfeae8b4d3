#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lmnet/loss.hpp"
#include "lmnet/network.hpp"

namespace lmnet {

struct TrainConfig {
  double learning_rate = 1e-6;
  int epochs = 200;
  int batch_size = 4;
  double background_balance = 4.0;  // m
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

/// One supervised frame: the encoded [5, H, W] map and its targets.
struct TrainingSample {
  Tensor input;
  LossTargets targets;
};

/// Supplies samples to the trainer. `epoch` lets sources vary a sample
/// between epochs (augmentation); implementations must be deterministic.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainingSample sample(std::size_t index, int epoch) const = 0;
};

/// Fixed, pre-encoded samples.
class VectorSampleSource final : public SampleSource {
 public:
  explicit VectorSampleSource(std::vector<TrainingSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  TrainingSample sample(std::size_t index, int) const override { return samples_.at(index); }

 private:
  std::vector<TrainingSample> samples_;
};

/// p <- p - lr * g for every tensor. Throws Divergence naming the layer when
/// a gradient is not finite; parameters are left untouched in that case.
void sgd_step(LMNetParams& params, const Gradients& grads, double learning_rate);

struct SampleLoss {
  double total = 0.0;
  double objectness = 0.0;
  double corners = 0.0;
};

/// Loss of one frame together with its parameter gradients.
SampleLoss loss_and_gradients(const LMNetParams& params, const TrainingSample& sample, double background_balance,
                              const ForwardOptions& options, Gradients* grads);

/// Mean per-frame loss with the network in inference mode.
double evaluate_loss(const LMNetParams& params, const SampleSource& data, double background_balance);

struct EpochReport {
  int epoch = 0;            // 1-based
  double mean_loss = 0.0;   // mean per-frame loss, each measured before its batch's update
};

struct TrainResult {
  std::vector<EpochReport> history;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Mini-batch SGD. Batches average per-frame gradients; samples are
/// reshuffled every epoch from the seed.
TrainResult train(LMNetParams& params, const SampleSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace lmnet
