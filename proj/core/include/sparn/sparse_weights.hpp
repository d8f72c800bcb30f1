#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace sparn {

/// Intercept plus sparse dependency weights of one regression.
/// Entries are sorted by strictly increasing index and never hold zeros.
struct SparseWeights {
  struct Entry {
    std::uint32_t index;
    double value;
    bool operator==(const Entry&) const = default;
  };

  double intercept = 0.0;
  std::vector<Entry> entries;

  static SparseWeights from_dense(double intercept, std::span<const double> dense);
  static SparseWeights from_dense(double intercept, const Eigen::VectorXd& dense);

  std::size_t nnz() const { return entries.size(); }
  bool is_zero() const { return intercept == 0.0 && entries.empty(); }
  double l1_norm() const;
  /// Largest referenced predictor index + 1, or 0 when there are no entries.
  std::size_t span_required() const { return entries.empty() ? 0 : entries.back().index + 1u; }

  /// intercept + Σ value·x[index]. Accumulates in entry order.
  double score(std::span<const double> x) const {
    double s = intercept;
    for (const auto& e : entries) s += e.value * x[e.index];
    return s;
  }

  /// Adds the linear score of every row of `X` into `out`.
  void accumulate_scores(const Eigen::Ref<const Eigen::MatrixXd>& X, Eigen::Ref<Eigen::VectorXd> out) const;

  Eigen::VectorXd to_dense(std::size_t predictors) const;

  /// Throws InvalidArgument unless the entry invariants hold and every index < predictors.
  void validate(std::size_t predictors) const;

  bool operator==(const SparseWeights&) const = default;
};

/// Parameter-wise sum (used to assemble shared + component parameters).
SparseWeights operator+(const SparseWeights& a, const SparseWeights& b);

}  // namespace sparn
