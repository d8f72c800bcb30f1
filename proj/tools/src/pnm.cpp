#include "pnm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "sparn/error.hpp"

namespace sparn::app {

ImageShape parse_shape(std::string_view text) {
  const auto x = text.find('x');
  ImageShape s;
  const auto parse = [&](std::string_view part, std::size_t& v) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    return ec == std::errc() && p == part.data() + part.size() && v > 0;
  };
  if (x == std::string_view::npos || !parse(text.substr(0, x), s.rows) || !parse(text.substr(x + 1), s.cols))
    throw InvalidArgument("image shape must look like RxC, got '" + std::string(text) + "'");
  return s;
}

namespace {

template <class T>
void write_pnm(const std::filesystem::path& path, std::string_view magic, ImageShape shape, std::span<const T> px,
               std::size_t channels) {
  if (px.size() != shape.pixels()) throw DimensionError("image size does not match its shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << magic << '\n' << shape.cols << ' ' << shape.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size() * channels));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

void write_pgm(const std::filesystem::path& path, ImageShape shape, std::span<const std::uint8_t> gray) {
  write_pnm(path, "P5", shape, gray, 1);
}

void write_ppm(const std::filesystem::path& path, ImageShape shape, std::span<const Rgb> rgb) {
  write_pnm(path, "P6", shape, rgb, 3);
}

std::vector<std::uint8_t> to_gray(std::span<const double> raw, bool binary) {
  std::vector<std::uint8_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = binary ? (raw[i] > 0.5 ? 255.0 : 0.0) : std::clamp(std::round(raw[i]), 0.0, 255.0);
    out[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

std::vector<Rgb> symmetric_difference(std::span<const double> sample, std::span<const double> train) {
  if (sample.size() != train.size()) throw DimensionError("vectors differ in length");
  std::vector<Rgb> out(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const bool s = sample[i] > 0.5, t = train[i] > 0.5;
    out[i] = s == t ? kAgree : (t ? kOnlyInTrain : kOnlyInSample);
  }
  return out;
}

}  // namespace sparn::app
