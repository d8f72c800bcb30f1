#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "sparn/sparse_weights.hpp"

namespace sparn {

/// Read-only view of a predictor matrix (N samples x P predictors). A
/// leftCols() block of a column-major dataset binds without copying.
using Design = Eigen::Ref<const Eigen::MatrixXd>;

enum class Family { linear, logistic };

struct SolverConfig {
  /// L1 strength on dependency weights.
  double lambda = 0.0;
  /// lambda / lambda_0; intercepts are penalized this many times more weakly.
  double intercept_scale = 10.0;
  /// Max scaled coordinate change per sweep at convergence.
  double tol = 1e-6;
  int max_sweeps = 1000;
  int max_outer_newton = 50;

  double intercept_lambda() const { return lambda / intercept_scale; }
  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

enum class SolveStatus { converged, max_iterations };

struct FitResult {
  SparseWeights weights;
  SolveStatus status = SolveStatus::converged;
  int sweeps = 0;
};

/// Global parameters plus one deviation block per mixture component.
/// Tied fits leave the deviation dependency weights empty and the global
/// intercept at zero.
struct SharedFit {
  SparseWeights global;
  std::vector<SparseWeights> deviations;
  SolveStatus status = SolveStatus::converged;
  int sweeps = 0;

  /// Effective parameters of component k.
  SparseWeights component(std::size_t k) const { return global + deviations[k]; }
};

/// Gate weights for K classes; the last class is the reference and stays zero.
struct GateFit {
  std::vector<SparseWeights> classes;
  SolveStatus status = SolveStatus::converged;
  int sweeps = 0;
};

/// sign(z)·max(|z| - gamma, 0).
inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Weighted lasso: ½Σ w (y - b - Xα)² + λ‖α‖₁ (+ λ₀|b| when `fit_intercept`).
/// Without an intercept b is fixed at 0.
FitResult fit_linear_l1(const Design& X, std::span<const double> y, std::span<const double> w,
                        const SolverConfig& cfg, const SparseWeights* warm = nullptr,
                        bool fit_intercept = false);

/// Σ w log(1 + exp(-y (b + Xα))) + λ₀|b| + λ‖α‖₁ for labels y in {-1,+1}.
/// Requires λ > 0 (hence λ₀ > 0): the intercept must be shrunk.
FitResult fit_logistic_l1(const Design& X, std::span<const double> y, std::span<const double> w,
                          const SolverConfig& cfg, const SparseWeights* warm = nullptr);

/// Shared dependency weights across components, one intercept per component.
/// `responsibilities` is N x K; the target y is shared by all components.
SharedFit fit_tied(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                   Family family, const SolverConfig& cfg, const SharedFit* warm = nullptr);

/// Global parameters plus L1-penalized per-component deviations. Component k
/// uses (α₀ + β₀ₖ) + (α + βₖ)ᵀx; penalty λ₀(|α₀| + Σ|β₀ₖ|) + λ(‖α‖₁ + Σ‖βₖ‖₁).
/// Block order: global first, then components by index.
SharedFit fit_auto_shared(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                          Family family, const SolverConfig& cfg, const SharedFit* warm = nullptr);

/// Softmax regression on soft targets (N x K, rows sum to 1) with per-sample
/// weights. Class K-1 is the reference class with all-zero parameters.
GateFit fit_multiclass_gate(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                            const SolverConfig& cfg, const GateFit* warm = nullptr);

/// Log class probabilities of every row of X under a gate (N x K).
Eigen::MatrixXd gate_log_probs(const Design& X, const std::vector<SparseWeights>& classes);

enum class ProblemFamily { linear, logistic, multiclass };

/// Smallest λ for which every dependency weight is zero, with the intercept(s)
/// at their penalized null-model fit. For `multiclass`, `targets` is N x K soft
/// targets; otherwise a single column. `fit_intercept` only affects `linear`.
double lambda_max(const Design& X, const Eigen::MatrixXd& targets, std::span<const double> w,
                  ProblemFamily family, double intercept_scale = 10.0, bool fit_intercept = false);

/// Log-spaced decreasing grid from `top` to top·ratio (inclusive).
std::vector<double> lambda_grid(double top, std::size_t count = 30, double ratio = 1e-3);

// ---------------------------------------------------------------------------
// Objective values and optimality certificates.

/// max(1, max_j |Σₙ wₙ xₙⱼ yₙ|), including the all-ones column when relevant.
double kkt_scale(const Design& X, std::span<const double> y, std::span<const double> w);

/// Largest KKT violation (unscaled) of a single-task fit.
double kkt_violation(const Design& X, std::span<const double> y, std::span<const double> w, Family family,
                     const SolverConfig& cfg, const SparseWeights& fit, bool penalize_intercept = true);

double penalized_objective(const Design& X, std::span<const double> y, std::span<const double> w,
                           Family family, const SolverConfig& cfg, const SparseWeights& fit);

/// Responsibility-weighted loss of a shared fit plus its penalty.
double shared_objective(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                        Family family, const SolverConfig& cfg, const SharedFit& fit);

/// Largest blockwise KKT violation of a shared fit. `tied` restricts the check
/// to the blocks a tied fit optimizes over.
double shared_kkt_violation(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                            Family family, const SolverConfig& cfg, const SharedFit& fit, bool tied = false);

double gate_objective(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                      const SolverConfig& cfg, const std::vector<SparseWeights>& classes);

double gate_kkt_violation(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                          const SolverConfig& cfg, const std::vector<SparseWeights>& classes);

}  // namespace sparn
