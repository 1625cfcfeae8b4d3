#include "lmnet/weights_io.hpp"

#include <string_view>

#include "binary_io.hpp"

namespace lmnet {

namespace {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::string tensor_name(int layer, bool bias) { return std::string(layer_name(layer)) + (bias ? ".bias" : ".weight"); }

}  // namespace

std::vector<std::uint8_t> encode_weights(const LMNetParams& params) {
  validate_architecture(params);
  detail::ByteWriter out;
  out.bytes(std::string_view(kWeightMagic, 4));
  out.u32(kWeightVersion);
  out.u32(static_cast<std::uint32_t>(2 * params.layers.size()));
  for (int layer = 0; layer < kNumLayers; ++layer) {
    for (bool bias : {false, true}) {
      const auto& l = params.layers[static_cast<std::size_t>(layer)];
      const Tensor& t = bias ? l.bias : l.weight;
      const std::string name = tensor_name(layer, bias);
      out.u16(static_cast<std::uint16_t>(name.size()));
      out.bytes(name);
      out.u8(static_cast<std::uint8_t>(t.rank()));
      for (int d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
      for (float v : t.values()) out.f32(v);
    }
  }
  return out.buffer();
}

LMNetParams decode_weights(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes, "weight file");
  if (in.remaining() < 4 || in.bytes(4) != std::string_view(kWeightMagic, 4)) {
    fail(ErrorKind::Format, "weight file: bad magic, expected \"LMNW\"");
  }
  const std::uint32_t version = in.u32();
  if (version != kWeightVersion) {
    fail(ErrorKind::Version, "weight file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  if (count != 2 * kNumLayers) {
    fail(ErrorKind::Format, "weight file: holds " + std::to_string(count) + " tensors, expected " +
                                std::to_string(2 * kNumLayers));
  }
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = in.u16();
    std::string name = in.bytes(name_len);
    const int layer = static_cast<int>(i / 2);
    const std::string expected = tensor_name(layer, i % 2 == 1);
    if (name != expected) {
      fail(ErrorKind::Format, "weight file: tensor " + std::to_string(i) + " is named \"" + name + "\", expected \"" +
                                  expected + "\"");
    }
    const std::uint8_t rank = in.u8();
    if (rank == 0 || rank > 4) fail(ErrorKind::Format, "weight file: tensor " + name + " has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = in.u32();
      if (dim == 0 || dim > (1u << 20)) fail(ErrorKind::Format, "weight file: tensor " + name + " has bad dimension");
      shape.push_back(static_cast<int>(dim));
    }
    const std::size_t n = shape_volume(shape);
    in.need(n * 4);
    std::vector<float> data(n);
    for (float& v : data) v = in.f32();
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (in.remaining() != 0) fail(ErrorKind::Format, "weight file: trailing bytes after last tensor");

  auto weight_dim = [&](int layer, int axis) {
    const Shape& s = tensors[static_cast<std::size_t>(2 * layer)].tensor.shape();
    if (static_cast<int>(s.size()) <= axis) {
      fail(ErrorKind::ShapeMismatch, std::string("layer ") + layer_name(layer) + " weight has rank " +
                                         std::to_string(s.size()) + ", expected 4");
    }
    return s[static_cast<std::size_t>(axis)];
  };
  LMNetParams params;
  params.widths.encoder = weight_dim(kEnc1, 0);
  params.widths.context = weight_dim(kDconv1, 0);
  params.widths.decoder = weight_dim(kObjDecode, 0);
  const auto specs = layer_specs(params.widths);
  for (int layer = 0; layer < kNumLayers; ++layer) {
    params.layers.push_back({specs[static_cast<std::size_t>(layer)],
                             std::move(tensors[static_cast<std::size_t>(2 * layer)].tensor),
                             std::move(tensors[static_cast<std::size_t>(2 * layer + 1)].tensor)});
  }
  validate_architecture(params);
  return params;
}

void save_weights(const LMNetParams& params, const std::filesystem::path& path) {
  detail::write_file(path, encode_weights(params));
}

LMNetParams load_weights(const std::filesystem::path& path) { return decode_weights(detail::read_file(path)); }

}  // namespace lmnet
