#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lmnet/geom.hpp"

namespace lmnet {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

/// One map channel, min-max normalised over valid cells; invalid cells are black.
GrayImage render_channel(const FrontalViewMap& map, int channel);

/// Argmax class per valid pixel: background black, car red, pedestrian
/// green, cyclist blue.
RgbImage render_objectness(const Tensor& objectness, const std::vector<std::uint8_t>& valid);

inline constexpr std::array<std::array<std::uint8_t, 3>, 4> kClassColors{{
    {0, 0, 0},
    {230, 40, 40},
    {40, 210, 60},
    {50, 110, 255},
}};

void write_pgm(const GrayImage& image, const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

}  // namespace lmnet
