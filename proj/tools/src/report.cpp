#include "report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "sparn/error.hpp"

namespace sparn::app {

Summary summarize(const Eigen::VectorXd& values) {
  Summary s;
  s.n = static_cast<std::size_t>(values.size());
  if (s.n == 0) return s;
  s.mean = values.mean();
  if (s.n > 1) {
    const double var = (values.array() - s.mean).square().sum() / static_cast<double>(s.n - 1);
    s.stderr_of_mean = std::sqrt(var / static_cast<double>(s.n));
  }
  return s;
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

void KeyValueReport::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
}

void KeyValueReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write(out);
}

void save_values(const std::filesystem::path& path, const Eigen::VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  for (Eigen::Index i = 0; i < values.size(); ++i) out << format_double(values[i]) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace sparn::app
