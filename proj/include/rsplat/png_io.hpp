#pragma once

#include "rsplat/common.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>

namespace rsplat {

/// 8-bit PNG with 1 (gray) or 3 (rgb) channels. Values are stored as round(clamp(v, 0, 1) * 255).
void write_png(const std::filesystem::path& path, const Image& img);
/// Reads gray/rgb(a) 8-bit PNGs (alpha dropped); values scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
/// Rounds every value to the nearest multiple of 1/255, as a PNG round trip would.
Image quantize8(const Image& img);

}  // namespace rsplat
