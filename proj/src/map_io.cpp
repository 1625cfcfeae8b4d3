#include "lmnet/map_io.hpp"

#include <string_view>

#include "binary_io.hpp"

namespace lmnet {

std::vector<std::uint8_t> encode_map(const FrontalViewMap& map) {
  detail::ByteWriter out;
  out.bytes(std::string_view(kMapMagic, 4));
  out.u32(kMapVersion);
  out.u32(static_cast<std::uint32_t>(map.height()));
  out.u32(static_cast<std::uint32_t>(map.width()));
  for (float v : map.channels.values()) out.f32(v);
  for (std::uint8_t v : map.valid) out.u8(v ? 1 : 0);
  return out.buffer();
}

FrontalViewMap decode_map(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes, "map file");
  if (in.remaining() < 4 || in.bytes(4) != std::string_view(kMapMagic, 4)) {
    fail(ErrorKind::Format, "map file: bad magic, expected \"LMFV\"");
  }
  const std::uint32_t version = in.u32();
  if (version != kMapVersion) fail(ErrorKind::Version, "map file: unsupported version " + std::to_string(version));
  const std::uint32_t h = in.u32();
  const std::uint32_t w = in.u32();
  if (h == 0 || w == 0 || h > 65536 || w > 65536) fail(ErrorKind::Format, "map file: bad dimensions");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  in.need(plane * 5 * 4 + plane);
  FrontalViewMap map;
  map.channels = Tensor({5, static_cast<int>(h), static_cast<int>(w)});
  for (float& v : map.channels.values()) v = in.f32();
  map.valid.resize(plane);
  for (auto& v : map.valid) {
    v = in.u8();
    if (v > 1) fail(ErrorKind::Format, "map file: validity byte must be 0 or 1");
  }
  if (in.remaining() != 0) fail(ErrorKind::Format, "map file: trailing bytes");
  map.source.assign(plane, kNoSource);
  return map;
}

void save_map(const FrontalViewMap& map, const std::filesystem::path& path) {
  detail::write_file(path, encode_map(map));
}

FrontalViewMap load_map(const std::filesystem::path& path) { return decode_map(detail::read_file(path)); }

}  // namespace lmnet
