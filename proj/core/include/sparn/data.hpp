#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace sparn {

/// Samples are rows, dimensions are columns. Column-major storage keeps each
/// dimension contiguous, which is what the per-dimension solvers iterate over.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Kind { binary, continuous };
enum class Role { train, valid, test };
enum class MatrixFormat { dense_text, dense_binary };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view text);

/// Per-column training statistics used to standardize continuous data.
struct EncodingMeta {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  std::size_t dims() const { return mean.size(); }
  bool empty() const { return mean.empty(); }
  /// Σ log std over non-constant columns. Raw-space log-density equals the
  /// standardized-space value minus this.
  double log_jacobian() const;
  bool operator==(const EncodingMeta&) const = default;
};

/// An encoded sample matrix. Immutable after construction.
class Dataset {
 public:
  Dataset(Matrix values, Kind kind, EncodingMeta meta, Role role);

  const Matrix& values() const { return values_; }
  Kind kind() const { return kind_; }
  const EncodingMeta& meta() const { return meta_; }
  Role role() const { return role_; }
  Eigen::Index samples() const { return values_.rows(); }
  Eigen::Index dims() const { return values_.cols(); }

 private:
  Matrix values_;
  Kind kind_;
  EncodingMeta meta_;
  Role role_;
};

/// Reads a matrix. Dense-binary files start with the bytes "SPRN".
Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
/// Picks the format from the file's leading magic bytes.
Matrix load_matrix(const std::filesystem::path& path);
Matrix parse_text_matrix(std::string_view text);

void save_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format);

/// {0,1} -> {-1,+1}.
Dataset encode_binary(const Matrix& raw, Role role = Role::train);
/// {-1,+1} -> {0,1}.
Matrix decode_binary(const Matrix& encoded);

/// Without `meta`, statistics are computed from `raw` (the training split).
/// Uses the population standard deviation; zero-variance columns map to 0.
Dataset standardize(const Matrix& raw, const std::optional<EncodingMeta>& meta = std::nullopt,
                    Role role = Role::train);
Matrix destandardize(const Matrix& encoded, const EncodingMeta& meta);

/// Encodes raw data with the statistics of an existing model / training split.
Dataset encode(const Matrix& raw, Kind kind, const EncodingMeta& meta, Role role);

}  // namespace sparn
