#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sparn::app {

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pixels() const { return rows * cols; }
  explicit operator bool() const { return rows > 0 && cols > 0; }
};

/// Parses "RxC", e.g. "28x28".
ImageShape parse_shape(std::string_view text);

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kOnlyInTrain{0, 0, 255};
inline constexpr Rgb kOnlyInSample{255, 165, 0};
inline constexpr Rgb kAgree{255, 255, 255};

/// Binary portable graymap (P5), 8-bit.
void write_pgm(const std::filesystem::path& path, ImageShape shape, std::span<const std::uint8_t> gray);
/// Binary portable pixmap (P6), 8-bit RGB.
void write_ppm(const std::filesystem::path& path, ImageShape shape, std::span<const Rgb> rgb);

/// Raw pixel values to 0..255: binary {0,1} maps to {0,255}; continuous
/// values are rounded and clamped.
std::vector<std::uint8_t> to_gray(std::span<const double> raw, bool binary);

/// Per-pixel symmetric difference of two {0,1} vectors.
std::vector<Rgb> symmetric_difference(std::span<const double> sample, std::span<const double> train);

}  // namespace sparn::app
