#pragma once

// Coordinate-descent engine shared by every L1 solver.
//
// Parameters are a global block (intercept g0, weights g) and K task blocks
// (intercepts t0, weights t). Task k sees the linear predictor
//   eta_k = g0 + X g + t0_k + X t_k.
// The loss is a convex function of the N x K matrix eta. Smooth losses are
// handled by proximal Newton steps (quadratic surrogate + inner cyclic CD +
// backtracking on the true objective); quadratic losses need one surrogate.
// A working set of predictors grows from KKT violators until a full-gradient
// check certifies the solution.

#include <Eigen/Dense>

#include "sparn/solvers.hpp"

namespace sparn::detail {

struct Layout {
  bool global_intercept = false;
  bool global_weights = false;
  bool task_intercepts = false;
  bool task_weights = false;
};

struct Params {
  double g0 = 0.0;
  Eigen::VectorXd g;   // P, or empty without global weights
  Eigen::VectorXd t0;  // K, or empty without task intercepts
  Eigen::MatrixXd t;   // P x K, or empty without task weights
};

class Loss {
 public:
  virtual ~Loss() = default;
  virtual double value(const Eigen::MatrixXd& eta) const = 0;
  /// neg_grad = -dLoss/deta; curvature = positive diagonal Hessian bound
  /// (zero only where the sample weight is zero).
  virtual void derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad,
                           Eigen::MatrixXd& curvature) const = 0;
  virtual bool quadratic() const { return false; }
};

class LinearLoss final : public Loss {
 public:
  LinearLoss(std::span<const double> y, const Eigen::MatrixXd& weights) : y_(y), w_(weights) {}
  double value(const Eigen::MatrixXd& eta) const override;
  void derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad, Eigen::MatrixXd& curvature) const override;
  bool quadratic() const override { return true; }

 private:
  std::span<const double> y_;
  const Eigen::MatrixXd& w_;
};

class LogisticLoss final : public Loss {
 public:
  LogisticLoss(std::span<const double> y, const Eigen::MatrixXd& weights) : y_(y), w_(weights) {}
  double value(const Eigen::MatrixXd& eta) const override;
  void derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad, Eigen::MatrixXd& curvature) const override;

 private:
  std::span<const double> y_;
  const Eigen::MatrixXd& w_;
};

constexpr double kMinCurvature = 1e-4;

struct Penalty {
  double intercept = 0.0;  // lambda_0
  double weights = 0.0;    // lambda
};

struct EngineResult {
  Params params;
  SolveStatus status = SolveStatus::converged;
  int sweeps = 0;
};

/// Minimizes loss(eta) + penalty starting from `start`. `kkt_tolerance` is the
/// absolute subgradient slack the returned point must meet.
EngineResult solve(const Design& X, const Loss& loss, Eigen::Index tasks, const Layout& layout,
                   const Penalty& penalty, const SolverConfig& cfg, Params start, double kkt_tolerance);

/// Linear predictor matrix (N x tasks) of a parameter set.
Eigen::MatrixXd linear_predictor(const Design& X, Eigen::Index tasks, const Layout& layout, const Params& p);

double penalty_value(const Layout& layout, const Penalty& penalty, const Params& p);

/// Largest subgradient violation over every enabled coordinate.
double max_kkt_violation(const Design& X, const Loss& loss, Eigen::Index tasks, const Layout& layout,
                         const Penalty& penalty, const Params& p);

/// Resizes and zero-fills the blocks `layout` enables.
Params zero_params(Eigen::Index predictors, Eigen::Index tasks, const Layout& layout);

}  // namespace sparn::detail
