#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lmnet/ops.hpp"

namespace lmnet {

inline constexpr int kInputChannels = 5;
inline constexpr int kCornerChannels = 24;

/// Fixed per-channel factors applied to the map before enc1 so every
/// channel is of order one: reflection, range, forward, side, height.
inline constexpr std::array<double, kInputChannels> kInputScale{1.0, 0.05, 0.05, 0.1, 0.5};

/// Channel widths of the network. The defaults are the full-size
/// architecture; reduced widths keep the same topology for fast tests.
struct NetworkWidths {
  int encoder = 64;   // encoder convs, context bottleneck and pooled features
  int context = 128;  // dilated stack
  int decoder = 64;   // first conv of each decoder branch

  friend bool operator==(const NetworkWidths&, const NetworkWidths&) = default;
};

/// Layer order. Weight files and gradient reports use these names.
enum LayerId : int {
  kEnc1 = 0,
  kEnc2,
  kDconv1,
  kDconv2,
  kDconv3,
  kDconv4,
  kDconv5,
  kDconv6,
  kDconv7,
  kContextOut,
  kObjDecode,
  kObjOut,
  kCorDecode,
  kCorOut,
  kNumLayers,
};

/// Dilations of dconv1..dconv7.
inline constexpr std::array<int, 7> kContextDilations{1, 1, 2, 4, 8, 16, 32};

const char* layer_name(int layer);

/// Architecture table for the given widths, indexed by LayerId.
std::vector<ConvSpec> layer_specs(const NetworkWidths& widths = {});

/// The eight context layers (dconv1..7 and the 1x1 bottleneck), in order.
std::vector<ConvSpec> context_schedule(const NetworkWidths& widths = {});

/// Dropout sits between the convolution and the ReLU of the context layers.
constexpr bool layer_has_dropout(int layer) noexcept { return layer >= kDconv1 && layer <= kContextOut; }

template <typename T>
struct BasicLayer {
  ConvSpec spec;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
struct BasicLMNetParams {
  NetworkWidths widths;
  std::vector<BasicLayer<T>> layers;  // indexed by LayerId

  template <typename U>
  BasicLMNetParams<U> cast() const {
    BasicLMNetParams<U> out;
    out.widths = widths;
    for (const auto& layer : layers) out.layers.push_back({layer.spec, layer.weight.template cast<U>(), layer.bias.template cast<U>()});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
  }
};

using LMNetParams = BasicLMNetParams<float>;

/// obj_out feeds a ReLU before the softmax. Starting its biases above zero
/// keeps the object-class logits from going dead on the first updates.
inline constexpr double kObjectnessBiasInit = 2.0;

/// Fan-in scaled uniform initialisation, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
/// zero biases except obj_out (kObjectnessBiasInit); deterministic per seed.
template <typename T = float>
BasicLMNetParams<T> build(std::uint64_t seed, const NetworkWidths& widths = {});

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
  double dropout_rate = 0.5;
  ConvPath path = ConvPath::Im2col;
  bool record = true;  // keep per-layer activations; backward and replay need them
};

/// Everything backward needs, plus the outputs.
template <typename T>
struct BasicForwardTrace {
  BasicTensor<T> input;
  std::array<BasicTensor<T>, kNumLayers> layer_input;
  std::array<BasicTensor<T>, kNumLayers> layer_output;  // post-activation where an activation exists
  std::array<BasicTensor<T>, kNumLayers> dropout_mask;  // empty outside the context stack
  double dropout_rate = 0.0;  // 0 outside training
  PoolIndices pool;
  BasicTensor<T> features;           // context output, pooled resolution
  BasicTensor<T> objectness_logits;  // softmax input
  BasicTensor<T> objectness;         // per-pixel class probabilities
  BasicTensor<T> corners;            // raw 24-channel corner offsets
};

using ForwardTrace = BasicForwardTrace<float>;

/// Runs the network on a [5, H, W] map; H and W must be even.
template <typename T>
BasicForwardTrace<T> forward(const BasicLMNetParams<T>& params, const BasicTensor<T>& input,
                             const ForwardOptions& options = {});

/// Recomputes a trace from its stored input and dropout masks.
template <typename T>
BasicForwardTrace<T> replay(const BasicLMNetParams<T>& params, const BasicForwardTrace<T>& trace,
                            ConvPath path = ConvPath::Im2col);

template <typename T>
struct BasicGradients {
  std::vector<BasicTensor<T>> weight;  // indexed by LayerId
  std::vector<BasicTensor<T>> bias;
};

using Gradients = BasicGradients<float>;

template <typename T>
BasicGradients<T> zero_gradients(const BasicLMNetParams<T>& params);

/// Back-propagates gradients given with respect to the objectness logits
/// and the corner outputs.
template <typename T>
BasicGradients<T> backward(const BasicLMNetParams<T>& params, const BasicForwardTrace<T>& trace,
                           const BasicTensor<T>& grad_logits, const BasicTensor<T>& grad_corners);

/// Checks that a parameter set matches the architecture for its widths.
/// Throws ShapeMismatch naming the first offending layer.
template <typename T>
void validate_architecture(const BasicLMNetParams<T>& params);

}  // namespace lmnet
