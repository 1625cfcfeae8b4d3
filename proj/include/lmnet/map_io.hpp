#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lmnet/geom.hpp"

namespace lmnet {

/// LMFV map file, little-endian:
///   "LMFV"  u32 version (=1)  u32 H  u32 W  f32 channels[5][H][W]  u8 valid[H][W]
/// Source indices are not stored; decoded maps carry kNoSource everywhere.
inline constexpr char kMapMagic[4] = {'L', 'M', 'F', 'V'};
inline constexpr std::uint32_t kMapVersion = 1;

std::vector<std::uint8_t> encode_map(const FrontalViewMap& map);
FrontalViewMap decode_map(const std::vector<std::uint8_t>& bytes);

void save_map(const FrontalViewMap& map, const std::filesystem::path& path);
FrontalViewMap load_map(const std::filesystem::path& path);

}  // namespace lmnet
