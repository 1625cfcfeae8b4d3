#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmnet/network.hpp"

namespace lmnet {

/// LMNW weight file, little-endian:
///
///   "LMNW"  u32 version (=1)  u32 tensor_count
///   per tensor: u16 name_len, name (UTF-8), u8 rank, u32 dims[rank], f32 data
///
/// Tensors appear in layer order as "<layer>.weight" then "<layer>.bias",
/// with layer names from layer_name(): enc1, enc2, dconv1..dconv7,
/// context_out, obj_decode, obj_out, cor_decode, cor_out. Channel widths
/// are recovered from the enc1, dconv1 and obj_decode shapes.
inline constexpr char kWeightMagic[4] = {'L', 'M', 'N', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

std::vector<std::uint8_t> encode_weights(const LMNetParams& params);
LMNetParams decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const LMNetParams& params, const std::filesystem::path& path);
LMNetParams load_weights(const std::filesystem::path& path);

}  // namespace lmnet
