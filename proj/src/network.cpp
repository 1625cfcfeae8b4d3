#include "lmnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lmnet/classes.hpp"

namespace lmnet {

namespace {

constexpr std::array<const char*, kNumLayers> kLayerNames{
    "enc1",   "enc2",   "dconv1",      "dconv2",     "dconv3",  "dconv4",     "dconv5",
    "dconv6", "dconv7", "context_out", "obj_decode", "obj_out", "cor_decode", "cor_out",
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
BasicTensor<T> conv_layer(const BasicLMNetParams<T>& params, int layer, const BasicTensor<T>& input, ConvPath path) {
  const auto& l = params.layers[static_cast<std::size_t>(layer)];
  return conv2d(input, l.weight, l.bias, l.spec, path);
}

// Shared by forward and replay: `masks` is filled when `make_masks` is set,
// otherwise read.
template <typename T>
void run_forward(const BasicLMNetParams<T>& params, BasicForwardTrace<T>& trace, bool make_masks,
                 const ForwardOptions& options) {
  BasicTensor<T> x = trace.input;
  for (int c = 0; c < kInputChannels; ++c) {
    const T s = static_cast<T>(kInputScale[static_cast<std::size_t>(c)]);
    for (T& v : x.plane(c)) v *= s;
  }
  const bool record = options.record || !make_masks;
  const auto keep = [&](BasicTensor<T>& slot, const BasicTensor<T>& value) {
    if (record) slot = value;
  };
  for (int layer : {kEnc1, kEnc2}) {
    keep(trace.layer_input[layer], x);
    x = relu(conv_layer(params, layer, x, options.path));
    keep(trace.layer_output[layer], x);
  }
  auto pooled = maxpool2(x);
  trace.pool = std::move(pooled.indices);
  x = std::move(pooled.output);

  // Context module: conv -> dropout -> relu.
  for (int layer = kDconv1; layer <= kContextOut; ++layer) {
    keep(trace.layer_input[layer], x);
    BasicTensor<T> z = conv_layer(params, layer, x, options.path);
    if (make_masks) {
      if (record || options.training) {
        const std::uint64_t layer_seed = splitmix64(options.seed ^ splitmix64(static_cast<std::uint64_t>(layer)));
        auto dropped = dropout(z, trace.dropout_rate, layer_seed, options.training);
        if (record) trace.dropout_mask[layer] = std::move(dropped.mask);
        z = std::move(dropped.output);
      }
    } else {
      const T scale = static_cast<T>(1.0 / (1.0 - trace.dropout_rate));
      const auto& mask = trace.dropout_mask[layer];
      const bool identity = std::all_of(mask.values().begin(), mask.values().end(), [](T m) { return m == T{1}; });
      if (!identity) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = mask[i] == T{0} ? T{0} : z[i] * scale;
      }
    }
    x = relu(z);
    keep(trace.layer_output[layer], x);
  }
  trace.features = std::move(x);

  const BasicTensor<T> unpooled = maxunpool2(trace.features, trace.pool, trace.pool.input_shape);

  // Objectness decoder; the output conv also carries a ReLU.
  BasicTensor<T> hidden = relu(conv_layer(params, kObjDecode, unpooled, options.path));
  trace.objectness_logits = relu(conv_layer(params, kObjOut, hidden, options.path));
  trace.objectness = softmax_channels(trace.objectness_logits);
  keep(trace.layer_input[kObjDecode], unpooled);
  keep(trace.layer_output[kObjOut], trace.objectness_logits);
  if (record) trace.layer_output[kObjDecode] = trace.layer_input[kObjOut] = std::move(hidden);

  // Corner decoder; linear output.
  hidden = relu(conv_layer(params, kCorDecode, unpooled, options.path));
  trace.corners = conv_layer(params, kCorOut, hidden, options.path);
  keep(trace.layer_input[kCorDecode], unpooled);
  keep(trace.layer_output[kCorOut], trace.corners);
  if (record) trace.layer_output[kCorDecode] = trace.layer_input[kCorOut] = std::move(hidden);
}

}  // namespace

const char* layer_name(int layer) {
  if (layer < 0 || layer >= kNumLayers) return "unknown";
  return kLayerNames[static_cast<std::size_t>(layer)];
}

std::vector<ConvSpec> layer_specs(const NetworkWidths& w) {
  std::vector<ConvSpec> specs;
  specs.reserve(kNumLayers);
  specs.push_back(ConvSpec::same(kInputChannels, w.encoder, 3));
  specs.push_back(ConvSpec::same(w.encoder, w.encoder, 3));
  specs.push_back(ConvSpec::same(w.encoder, w.context, 3, kContextDilations[0]));
  for (std::size_t i = 1; i < kContextDilations.size(); ++i) {
    specs.push_back(ConvSpec::same(w.context, w.context, 3, kContextDilations[i]));
  }
  specs.push_back(ConvSpec::same(w.context, w.encoder, 1));
  specs.push_back(ConvSpec::same(w.encoder, w.decoder, 3));
  specs.push_back(ConvSpec::same(w.decoder, kNumClasses, 3));
  specs.push_back(ConvSpec::same(w.encoder, w.decoder, 3));
  specs.push_back(ConvSpec::same(w.decoder, kCornerChannels, 3));
  return specs;
}

std::vector<ConvSpec> context_schedule(const NetworkWidths& widths) {
  const auto specs = layer_specs(widths);
  return {specs.begin() + kDconv1, specs.begin() + kContextOut + 1};
}

template <typename T>
BasicLMNetParams<T> build(std::uint64_t seed, const NetworkWidths& widths) {
  if (widths.encoder < 1 || widths.context < 1 || widths.decoder < 1) {
    fail(ErrorKind::InvalidArgument, "network widths must be positive");
  }
  BasicLMNetParams<T> params;
  params.widths = widths;
  std::mt19937_64 rng(seed);
  for (const ConvSpec& spec : layer_specs(widths)) {
    BasicLayer<T> layer{spec, BasicTensor<T>(spec.weight_shape()), BasicTensor<T>({spec.out_channels})};
    const double fan_in = static_cast<double>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
    const double bound = std::sqrt(6.0 / fan_in);
    for (T& v : layer.weight.values()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<T>((2.0 * u - 1.0) * bound);
    }
    if (params.layers.size() == kObjOut) layer.bias.fill(static_cast<T>(kObjectnessBiasInit));
    params.layers.push_back(std::move(layer));
  }
  return params;
}

template <typename T>
void validate_architecture(const BasicLMNetParams<T>& params) {
  const auto specs = layer_specs(params.widths);
  if (params.layers.size() != specs.size()) {
    fail(ErrorKind::ShapeMismatch, "parameter set has " + std::to_string(params.layers.size()) + " layers, expected " +
                                       std::to_string(specs.size()));
  }
  for (int i = 0; i < kNumLayers; ++i) {
    const auto& layer = params.layers[static_cast<std::size_t>(i)];
    if (!(layer.spec == specs[static_cast<std::size_t>(i)]) ||
        layer.weight.shape() != specs[static_cast<std::size_t>(i)].weight_shape() ||
        layer.bias.shape() != Shape{specs[static_cast<std::size_t>(i)].out_channels}) {
      fail(ErrorKind::ShapeMismatch, std::string("layer ") + layer_name(i) + " has weight shape " +
                                         shape_string(layer.weight.shape()) + ", architecture expects " +
                                         shape_string(specs[static_cast<std::size_t>(i)].weight_shape()));
    }
  }
}

template <typename T>
BasicForwardTrace<T> forward(const BasicLMNetParams<T>& params, const BasicTensor<T>& input,
                             const ForwardOptions& options) {
  if (input.rank() != 3 || input.dim(0) != kInputChannels) {
    fail(ErrorKind::InvalidArgument, "forward: input must be [5, H, W], got " + shape_string(input.shape()));
  }
  if (input.dim(1) % 2 != 0 || input.dim(2) % 2 != 0) {
    fail(ErrorKind::InvalidArgument, "forward: input height and width must be even, got " + shape_string(input.shape()));
  }
  if (options.dropout_rate < 0.0 || options.dropout_rate >= 1.0) {
    fail(ErrorKind::InvalidArgument, "forward: dropout rate must lie in [0, 1)");
  }
  validate_architecture(params);
  BasicForwardTrace<T> trace;
  trace.input = input;
  trace.dropout_rate = options.training ? options.dropout_rate : 0.0;
  run_forward(params, trace, /*make_masks=*/true, options);
  return trace;
}

template <typename T>
BasicForwardTrace<T> replay(const BasicLMNetParams<T>& params, const BasicForwardTrace<T>& trace, ConvPath path) {
  BasicForwardTrace<T> out;
  out.input = trace.input;
  out.dropout_rate = trace.dropout_rate;
  out.dropout_mask = trace.dropout_mask;
  ForwardOptions options;
  options.path = path;
  run_forward(params, out, /*make_masks=*/false, options);
  return out;
}

template <typename T>
BasicGradients<T> zero_gradients(const BasicLMNetParams<T>& params) {
  BasicGradients<T> g;
  for (const auto& layer : params.layers) {
    g.weight.emplace_back(layer.weight.shape());
    g.bias.emplace_back(layer.bias.shape());
  }
  return g;
}

template <typename T>
BasicGradients<T> backward(const BasicLMNetParams<T>& params, const BasicForwardTrace<T>& trace,
                           const BasicTensor<T>& grad_logits, const BasicTensor<T>& grad_corners) {
  if (grad_logits.shape() != trace.objectness_logits.shape() || grad_corners.shape() != trace.corners.shape()) {
    fail(ErrorKind::InvalidArgument, "backward: gradient shapes do not match the forward outputs");
  }
  BasicGradients<T> grads = zero_gradients(params);
  auto conv_back = [&](int layer, const BasicTensor<T>& g, bool want_input) {
    const auto& l = params.layers[static_cast<std::size_t>(layer)];
    auto r = conv2d_backward(trace.layer_input[layer], l.weight, g, l.spec, want_input);
    grads.weight[static_cast<std::size_t>(layer)] = std::move(r.grad_weights);
    grads.bias[static_cast<std::size_t>(layer)] = std::move(r.grad_bias);
    return std::move(r.grad_input);
  };

  BasicTensor<T> g = relu_backward(trace.layer_output[kObjOut], grad_logits);
  g = conv_back(kObjOut, g, true);
  g = relu_backward(trace.layer_output[kObjDecode], g);
  BasicTensor<T> g_unpooled = conv_back(kObjDecode, g, true);

  g = conv_back(kCorOut, grad_corners, true);
  g = relu_backward(trace.layer_output[kCorDecode], g);
  const BasicTensor<T> g_cor = conv_back(kCorDecode, g, true);
  for (std::size_t i = 0; i < g_unpooled.size(); ++i) g_unpooled[i] += g_cor[i];

  g = maxunpool2_backward(g_unpooled, trace.pool);
  for (int layer = kContextOut; layer >= kDconv1; --layer) {
    g = relu_backward(trace.layer_output[layer], g);
    g = dropout_backward(g, trace.dropout_mask[layer], trace.dropout_rate);
    g = conv_back(layer, g, true);
  }
  g = maxpool2_backward(g, trace.pool);
  g = relu_backward(trace.layer_output[kEnc2], g);
  g = conv_back(kEnc2, g, true);
  g = relu_backward(trace.layer_output[kEnc1], g);
  conv_back(kEnc1, g, false);
  return grads;
}

#define LMNET_INSTANTIATE_NETWORK(T)                                                                         \
  template BasicLMNetParams<T> build<T>(std::uint64_t, const NetworkWidths&);                               \
  template void validate_architecture(const BasicLMNetParams<T>&);                                          \
  template BasicForwardTrace<T> forward(const BasicLMNetParams<T>&, const BasicTensor<T>&,                  \
                                        const ForwardOptions&);                                             \
  template BasicForwardTrace<T> replay(const BasicLMNetParams<T>&, const BasicForwardTrace<T>&, ConvPath);  \
  template BasicGradients<T> zero_gradients(const BasicLMNetParams<T>&);                                    \
  template BasicGradients<T> backward(const BasicLMNetParams<T>&, const BasicForwardTrace<T>&,              \
                                      const BasicTensor<T>&, const BasicTensor<T>&);

LMNET_INSTANTIATE_NETWORK(float)
LMNET_INSTANTIATE_NETWORK(double)

#undef LMNET_INSTANTIATE_NETWORK

}  // namespace lmnet
