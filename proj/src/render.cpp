#include "lmnet/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "lmnet/classes.hpp"

namespace lmnet {

GrayImage render_channel(const FrontalViewMap& map, int channel) {
  if (channel < 0 || channel >= 5) fail(ErrorKind::InvalidArgument, "render: channel must be 0..4");
  const std::size_t plane = map.valid.size();
  const auto values = map.channels.plane(channel);
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (std::size_t p = 0; p < plane; ++p) {
    if (!map.valid[p]) continue;
    lo = std::min(lo, values[p]);
    hi = std::max(hi, values[p]);
  }
  GrayImage img{map.width(), map.height(), std::vector<std::uint8_t>(plane, 0)};
  const float span = hi - lo;
  for (std::size_t p = 0; p < plane; ++p) {
    if (!map.valid[p]) continue;
    // A constant channel renders mid-gray so valid cells stay visible.
    const float t = span > 0 ? (values[p] - lo) / span : 0.5f;
    img.pixels[p] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0f, 1.0f) * 255.0f));
  }
  return img;
}

RgbImage render_objectness(const Tensor& objectness, const std::vector<std::uint8_t>& valid) {
  if (objectness.rank() != 3 || objectness.dim(0) != kNumClasses) {
    fail(ErrorKind::InvalidArgument, "render: objectness must be [4, H, W]");
  }
  const int h = objectness.dim(1);
  const int w = objectness.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (valid.size() != plane) fail(ErrorKind::InvalidArgument, "render: validity mask size mismatch");
  RgbImage img{w, h, std::vector<std::uint8_t>(plane * 3, 0)};
  for (std::size_t p = 0; p < plane; ++p) {
    if (!valid[p]) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      if (objectness[c * plane + p] > objectness[best * plane + p]) best = c;
    }
    std::copy(kClassColors[best].begin(), kClassColors[best].end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  return img;
}

namespace {

void write_netpbm(const char* magic, int width, int height, const std::vector<std::uint8_t>& pixels,
                  const std::filesystem::path& path) {
  const std::string header = std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  detail::write_file(path, bytes);
}

}  // namespace

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_netpbm("P5", image.width, image.height, image.pixels, path);
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_netpbm("P6", image.width, image.height, image.pixels, path);
}

}  // namespace lmnet
