// Multiclass logistic gate: block coordinate descent over the non-reference
// classes, each block solved by the proximal-Newton engine with the other
// class scores held fixed.

#include <cmath>
#include <limits>

#include "cd_engine.hpp"
#include "sparn/error.hpp"
#include "sparn/math.hpp"
#include "sparn/solvers.hpp"

namespace sparn {

namespace {

constexpr detail::Layout kClassLayout{.global_intercept = true, .global_weights = true};

// Soft-label cross-entropy as a function of one class score, the log-sum-exp
// of the remaining scores (`rest`) held fixed. Terms constant in the class
// score are dropped.
class SoftmaxClassLoss final : public detail::Loss {
 public:
  SoftmaxClassLoss(const Eigen::VectorXd& target, const Eigen::VectorXd& target_sum, const Eigen::VectorXd& w,
                   const Eigen::VectorXd& rest)
      : t_(target), tsum_(target_sum), w_(w), rest_(rest) {}

  double value(const Eigen::MatrixXd& eta) const override {
    double v = 0.0;
    for (Eigen::Index n = 0; n < eta.rows(); ++n) {
      if (w_[n] == 0.0) continue;
      v += w_[n] * (tsum_[n] * (rest_[n] + softplus(eta(n, 0) - rest_[n])) - t_[n] * eta(n, 0));
    }
    return v;
  }

  void derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad, Eigen::MatrixXd& curvature) const override {
    neg_grad.resize(eta.rows(), 1);
    curvature.resize(eta.rows(), 1);
    for (Eigen::Index n = 0; n < eta.rows(); ++n) {
      const double p = sigmoid(eta(n, 0) - rest_[n]);
      neg_grad(n, 0) = w_[n] * (t_[n] - tsum_[n] * p);
      curvature(n, 0) = w_[n] * tsum_[n] * std::max(p * (1.0 - p), detail::kMinCurvature);
    }
  }

 private:
  const Eigen::VectorXd& t_;
  const Eigen::VectorXd& tsum_;
  const Eigen::VectorXd& w_;
  const Eigen::VectorXd& rest_;
};

Eigen::MatrixXd class_scores(const Design& X, const std::vector<SparseWeights>& classes) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(classes.size()));
  for (std::size_t h = 0; h < classes.size(); ++h) classes[h].accumulate_scores(X, s.col(static_cast<Eigen::Index>(h)));
  return s;
}

Eigen::VectorXd rest_lse(const Eigen::MatrixXd& scores, Eigen::Index skip) {
  Eigen::VectorXd rest(scores.rows());
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (j != skip) m = std::max(m, scores(n, j));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (j != skip) acc += std::exp(scores(n, j) - m);
    rest[n] = m + std::log(acc);
  }
  return rest;
}

void check_gate_inputs(const Design& X, const Eigen::MatrixXd& T, std::span<const double> w) {
  if (T.rows() != X.rows()) throw DimensionError("soft targets and predictors disagree on N");
  if (static_cast<Eigen::Index>(w.size()) != X.rows()) throw DimensionError("sample weights length does not match N");
  if (!(T.array() >= 0.0).all() || !T.allFinite()) throw InvalidArgument("soft targets must be nonnegative");
  for (double v : w)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("sample weights must be finite and nonnegative");
}

}  // namespace

Eigen::MatrixXd gate_log_probs(const Design& X, const std::vector<SparseWeights>& classes) {
  Eigen::MatrixXd s = class_scores(X, classes);
  for (Eigen::Index n = 0; n < s.rows(); ++n) {
    const double m = s.row(n).maxCoeff();
    const double lse = m + std::log((s.row(n).array() - m).exp().sum());
    s.row(n).array() -= lse;
  }
  return s;
}

GateFit fit_multiclass_gate(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                            const SolverConfig& cfg, const GateFit* warm) {
  cfg.validate();
  check_gate_inputs(X, soft_targets, w);
  const Eigen::Index K = soft_targets.cols();
  const Eigen::Index P = X.cols();
  GateFit fit;
  if (K < 2) {
    fit.classes.assign(1, SparseWeights{});
    return fit;
  }
  fit.classes.assign(static_cast<std::size_t>(K), SparseWeights{});
  if (warm) {
    if (static_cast<Eigen::Index>(warm->classes.size()) != K) throw InvalidArgument("gate warm start has wrong K");
    fit.classes = warm->classes;
    fit.classes.back() = SparseWeights{};
    for (const auto& c : fit.classes) c.validate(static_cast<std::size_t>(P));
  }

  const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), X.rows());
  const Eigen::VectorXd tsum = soft_targets.rowwise().sum();
  const detail::Penalty pen{cfg.intercept_lambda(), cfg.lambda};

  // Scale for KKT slack and for the cycle convergence test.
  double scale = 1.0;
  for (Eigen::Index h = 0; h + 1 < K; ++h) {
    const Eigen::VectorXd wt = wv.cwiseProduct(soft_targets.col(h));
    scale = std::max(scale, std::abs(wt.sum()));
    if (P > 0) scale = std::max(scale, (X.transpose() * wt).cwiseAbs().maxCoeff());
  }
  const double wsum = wv.sum();
  Eigen::VectorXd rms = Eigen::VectorXd::Ones(P);
  for (Eigen::Index j = 0; j < P && wsum > 0; ++j) rms[j] = std::sqrt(X.col(j).cwiseAbs2().dot(wv) / wsum);

  Eigen::MatrixXd scores = class_scores(X, fit.classes);
  for (int cycle = 0; cycle < cfg.max_sweeps; ++cycle) {
    double change = 0.0;
    for (Eigen::Index h = 0; h + 1 < K; ++h) {
      auto& cls = fit.classes[static_cast<std::size_t>(h)];
      const Eigen::VectorXd target = soft_targets.col(h);
      const Eigen::VectorXd rest = rest_lse(scores, h);
      const SoftmaxClassLoss loss(target, tsum, wv, rest);
      detail::Params start = detail::zero_params(P, 1, kClassLayout);
      start.g0 = cls.intercept;
      start.g = cls.to_dense(static_cast<std::size_t>(P));
      const Eigen::VectorXd before = start.g;
      const double before0 = start.g0;
      auto r = detail::solve(X, loss, 1, kClassLayout, pen, cfg, std::move(start), 0.5 * cfg.tol * scale);
      fit.sweeps += r.sweeps;
      if (r.status != SolveStatus::converged) fit.status = SolveStatus::max_iterations;
      change = std::max(change, std::abs(r.params.g0 - before0));
      for (Eigen::Index j = 0; j < P; ++j) change = std::max(change, std::abs(r.params.g[j] - before[j]) * rms[j]);
      cls = SparseWeights::from_dense(r.params.g0, r.params.g);
      scores.col(h).setZero();
      cls.accumulate_scores(X, scores.col(h));
    }
    if (change < cfg.tol) return fit;
  }
  fit.status = SolveStatus::max_iterations;
  return fit;
}

double gate_objective(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                      const SolverConfig& cfg, const std::vector<SparseWeights>& classes) {
  const Eigen::MatrixXd logp = gate_log_probs(X, classes);
  double v = 0.0;
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    for (Eigen::Index h = 0; h < soft_targets.cols(); ++h)
      if (soft_targets(n, h) != 0.0) v -= w[static_cast<std::size_t>(n)] * soft_targets(n, h) * logp(n, h);
  for (const auto& c : classes) v += cfg.intercept_lambda() * std::abs(c.intercept) + cfg.lambda * c.l1_norm();
  return v;
}

double gate_kkt_violation(const Design& X, const Eigen::MatrixXd& soft_targets, std::span<const double> w,
                          const SolverConfig& cfg, const std::vector<SparseWeights>& classes) {
  const Eigen::Index K = soft_targets.cols();
  if (K < 2) return 0.0;
  const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), X.rows());
  const Eigen::VectorXd tsum = soft_targets.rowwise().sum();
  const Eigen::MatrixXd scores = class_scores(X, classes);
  const detail::Penalty pen{cfg.intercept_lambda(), cfg.lambda};
  double worst = 0.0;
  for (Eigen::Index h = 0; h + 1 < K; ++h) {
    const Eigen::VectorXd target = soft_targets.col(h);
    const Eigen::VectorXd rest = rest_lse(scores, h);
    const SoftmaxClassLoss loss(target, tsum, wv, rest);
    detail::Params p = detail::zero_params(X.cols(), 1, kClassLayout);
    p.g0 = classes[static_cast<std::size_t>(h)].intercept;
    p.g = classes[static_cast<std::size_t>(h)].to_dense(static_cast<std::size_t>(X.cols()));
    worst = std::max(worst, detail::max_kkt_violation(X, loss, 1, kClassLayout, pen, p));
  }
  return worst;
}

}  // namespace sparn
