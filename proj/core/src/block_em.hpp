#pragma once

// EM for one gated or mixing-weighted block of conditionals. Plain mixtures
// are a single block starting at dimension 0; each sequence-of-mixtures block
// is one call with its gate reading the dimensions before the block.

#include <optional>

#include "sparn/mixture.hpp"

namespace sparn::detail {

struct BlockProblem {
  const Matrix* data = nullptr;  // N x D encoded, model column order
  Kind kind = Kind::binary;
  std::size_t first = 0;
  std::size_t count = 0;
  std::size_t components = 1;
  SharingMode mode = SharingMode::untied;
  /// False: prior is an unpenalized mixing vector. True: multiclass gate on
  /// the `first` preceding dimensions, refit every iteration.
  bool gated = false;
};

struct BlockResult {
  ComponentNetworks nets;
  std::vector<double> mixing;  // K, when not gated
  std::vector<SparseWeights> gate;  // K classes, last is the reference
  EmTrace trace;
};

BlockResult run_block_em(const BlockProblem& problem, const SolverConfig& cfg, const Eigen::MatrixXd& init,
                         const EmOptions& opts);

/// Σ over non-reference classes of λ₀|intercept| + λ‖weights‖₁.
double gate_penalty(const std::vector<SparseWeights>& gate, const SolverConfig& cfg);

/// Row-wise log-sum-exp of `scores` + `prior`, writing normalized floored
/// responsibilities into `resp` when given.
Eigen::VectorXd posterior_rows(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& log_prior,
                               Eigen::MatrixXd* resp);

}  // namespace sparn::detail
