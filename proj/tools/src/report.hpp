#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace sparn::app {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  /// Sample standard deviation / sqrt(n); 0 when n < 2.
  double stderr_of_mean = 0.0;
};

Summary summarize(const Eigen::VectorXd& values);

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// Ordered key=value lines. Keys may repeat.
class KeyValueReport {
 public:
  void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, double value) { add(std::move(key), format_double(value)); }
  void add(std::string key, std::size_t value) { add(std::move(key), std::to_string(value)); }
  void add(std::string key, int value) { add(std::move(key), std::to_string(value)); }

  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// One value per line.
void save_values(const std::filesystem::path& path, const Eigen::VectorXd& values);

}  // namespace sparn::app
