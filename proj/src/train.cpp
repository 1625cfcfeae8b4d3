#include "lmnet/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace lmnet {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    fail(ErrorKind::InvalidArgument, "learning rate must be finite and non-negative");
  }
  if (c.epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be positive");
  if (c.batch_size < 1) fail(ErrorKind::InvalidArgument, "batch size must be positive");
  if (!(c.background_balance > 0.0)) fail(ErrorKind::InvalidArgument, "background balance m must be positive");
  if (!(c.dropout_rate >= 0.0) || c.dropout_rate >= 1.0) {
    fail(ErrorKind::InvalidArgument, "dropout rate must lie in [0, 1)");
  }
}

void sgd_step(LMNetParams& params, const Gradients& grads, double learning_rate) {
  if (grads.weight.size() != params.layers.size() || grads.bias.size() != params.layers.size()) {
    fail(ErrorKind::ShapeMismatch, "gradient set does not match the parameter set");
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& layer = params.layers[i];
    if (grads.weight[i].shape() != layer.weight.shape() || grads.bias[i].shape() != layer.bias.shape()) {
      fail(ErrorKind::ShapeMismatch, std::string("gradient shape mismatch at layer ") + layer_name(static_cast<int>(i)));
    }
    if (!grads.weight[i].all_finite() || !grads.bias[i].all_finite()) {
      fail(ErrorKind::Divergence, std::string("non-finite gradient at layer ") + layer_name(static_cast<int>(i)));
    }
  }
  const auto lr = static_cast<float>(learning_rate);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& layer = params.layers[i];
    for (std::size_t k = 0; k < layer.weight.size(); ++k) layer.weight[k] -= lr * grads.weight[i][k];
    for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= lr * grads.bias[i][k];
  }
}

SampleLoss loss_and_gradients(const LMNetParams& params, const TrainingSample& sample, double background_balance,
                              const ForwardOptions& options, Gradients* grads) {
  const ForwardTrace trace = forward(params, sample.input, options);
  const PixelWeights weights = pointwise_weights(sample.targets, background_balance);
  const LossResult<float> loss = multitask_loss(trace.objectness_logits, trace.corners, sample.targets, weights);
  if (!std::isfinite(loss.total)) fail(ErrorKind::Divergence, "loss is not finite");
  if (grads) *grads = backward(params, trace, loss.grad_logits, loss.grad_corners);
  return {loss.total, loss.objectness_term, loss.corner_term};
}

double evaluate_loss(const LMNetParams& params, const SampleSource& data, double background_balance) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  ForwardOptions options;
  options.training = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += loss_and_gradients(params, data.sample(i, 0), background_balance, options, nullptr).total;
  }
  return total / static_cast<double>(data.size());
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fisher-Yates with raw engine output, so the order does not depend on the
// standard library's distribution implementations.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(LMNetParams& params, const SampleSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(config);
  validate_architecture(params);
  if (data.size() == 0) fail(ErrorKind::InvalidArgument, "training set is empty");

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled_order(data.size(), mix(config.seed, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      Gradients batch = zero_gradients(params);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t index = order[k];
        ForwardOptions options;
        options.training = true;
        options.dropout_rate = config.dropout_rate;
        options.seed = mix(mix(config.seed, static_cast<std::uint64_t>(epoch)), index);
        Gradients grads;
        const SampleLoss loss =
            loss_and_gradients(params, data.sample(index, epoch), config.background_balance, options, &grads);
        epoch_loss += loss.total;
        // Reduction in batch order keeps the sum deterministic.
        for (std::size_t l = 0; l < batch.weight.size(); ++l) {
          for (std::size_t i = 0; i < batch.weight[l].size(); ++i) batch.weight[l][i] += grads.weight[l][i];
          for (std::size_t i = 0; i < batch.bias[l].size(); ++i) batch.bias[l][i] += grads.bias[l][i];
        }
      }
      const float inv = 1.0f / static_cast<float>(stop - start);
      for (auto& t : batch.weight) for (float& v : t.values()) v *= inv;
      for (auto& t : batch.bias) for (float& v : t.values()) v *= inv;
      sgd_step(params, batch, config.learning_rate);
    }
    EpochReport report{epoch, epoch_loss / static_cast<double>(data.size())};
    result.history.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

}  // namespace lmnet
