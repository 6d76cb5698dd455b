#ifndef RELIGHT_IMAGEIO_HPP
#define RELIGHT_IMAGEIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relight/types.hpp"

namespace relight {

/// Decoded pixels before normalization: row-major, interleaved channels,
/// values in [0, 2^bit_depth - 1].
struct RawImage {
  int width = 0, height = 0, channels = 0;  // channels: 1 or 3
  int bit_depth = 8;                        // 8 or 16
  std::vector<std::uint16_t> data;
};

/// Decodes PNG (8/16-bit) or JPEG by sniffing the signature.
/// Throws InputError on unreadable or unsupported files.
RawImage read_raw_image(const std::filesystem::path& path);

/// 8-bit RGB PNG.
void write_png8(const std::filesystem::path& path, int width, int height,
                const std::vector<std::uint8_t>& rgb_interleaved);

template <typename S>
Planes<S> to_planes(const RawImage& raw) {
  Planes<S> img(raw.height, raw.width, 3);
  const S scale = S(1) / S((1 << raw.bit_depth) - 1);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x) {
      const std::size_t base =
          (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
      for (int c = 0; c < 3; ++c) {
        const std::uint16_t v = raw.data[base + (raw.channels == 1 ? 0 : c)];
        img.at(y, x, c) = S(v) * scale;
      }
    }
  return img;
}

template <typename S>
Planes<S> read_image(const std::filesystem::path& path) {
  return to_planes<S>(read_raw_image(path));
}

/// Loader that maps decode failures to nullopt (for directory scans).
template <typename S>
std::optional<Planes<S>> try_read_image(const std::filesystem::path& path) {
  try {
    return read_image<S>(path);
  } catch (const InputError&) {
    return std::nullopt;
  }
}

template <typename S>
void write_image_png(const std::filesystem::path& path, const Planes<S>& img) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.pixels()) * 3);
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x)
      for (Index c = 0; c < 3; ++c) {
        const double v = std::round(static_cast<double>(img.at(y, x, c)) * 255.0);
        rgb[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  write_png8(path, static_cast<int>(img.width()), static_cast<int>(img.height()),
             rgb);
}

}  // namespace relight

#endif  // RELIGHT_IMAGEIO_HPP
