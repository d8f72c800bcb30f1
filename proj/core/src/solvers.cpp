#include "sparn/solvers.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "cd_engine.hpp"
#include "sparn/error.hpp"
#include "sparn/math.hpp"

namespace sparn {

using detail::Layout;
using detail::Params;
using detail::Penalty;

namespace {

constexpr Layout kSingle{.global_intercept = true, .global_weights = true};
constexpr Layout kSingleNoIntercept{.global_weights = true};
constexpr Layout kTied{.global_weights = true, .task_intercepts = true};
constexpr Layout kAuto{.global_intercept = true, .global_weights = true, .task_intercepts = true, .task_weights = true};

void check_weights(std::span<const double> w, Eigen::Index n) {
  if (static_cast<Eigen::Index>(w.size()) != n) throw DimensionError("sample weights length does not match N");
  bool positive = false;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("sample weights must be finite and nonnegative");
    positive = positive || v > 0.0;
  }
  if (!positive) throw InvalidArgument("at least one sample weight must be positive");
}

void check_targets(std::span<const double> y, Eigen::Index n, Family family) {
  if (static_cast<Eigen::Index>(y.size()) != n) throw DimensionError("target length does not match N");
  for (double v : y) {
    if (family == Family::logistic && v != 1.0 && v != -1.0)
      throw InvalidArgument("logistic labels must be -1 or +1");
    if (!std::isfinite(v)) throw InvalidArgument("targets must be finite");
  }
}

void check_responsibilities(const Eigen::MatrixXd& r, Eigen::Index n) {
  if (r.rows() != n || r.cols() < 1) throw DimensionError("responsibilities must be N x K with K >= 1");
  if (!(r.array() >= 0.0).all() || !r.allFinite()) throw InvalidArgument("responsibilities must be nonnegative");
  if (!(r.sum() > 0.0)) throw InvalidArgument("responsibilities are all zero");
}

Eigen::MatrixXd weight_column(std::span<const double> w) {
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

Params single_start(const SparseWeights* warm, Eigen::Index P, const Layout& layout) {
  Params p = detail::zero_params(P, 1, layout);
  if (warm) {
    warm->validate(static_cast<std::size_t>(P));
    if (layout.global_intercept) p.g0 = warm->intercept;
    p.g = warm->to_dense(static_cast<std::size_t>(P));
  }
  return p;
}

Params shared_start(const SharedFit* warm, Eigen::Index P, Eigen::Index K, const Layout& layout) {
  Params p = detail::zero_params(P, K, layout);
  if (!warm) return p;
  if (static_cast<Eigen::Index>(warm->deviations.size()) != K)
    throw InvalidArgument("warm start has the wrong number of components");
  warm->global.validate(static_cast<std::size_t>(P));
  if (layout.global_intercept) p.g0 = warm->global.intercept;
  p.g = warm->global.to_dense(static_cast<std::size_t>(P));
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& dev = warm->deviations[static_cast<std::size_t>(k)];
    dev.validate(static_cast<std::size_t>(P));
    p.t0[k] = dev.intercept;
    if (layout.task_weights) p.t.col(k) = dev.to_dense(static_cast<std::size_t>(P));
  }
  return p;
}

SharedFit shared_result(const detail::EngineResult& r, Eigen::Index K, const Layout& layout) {
  SharedFit fit;
  fit.global = SparseWeights::from_dense(layout.global_intercept ? r.params.g0 : 0.0, r.params.g);
  for (Eigen::Index k = 0; k < K; ++k) {
    SparseWeights dev;
    if (layout.task_weights) dev = SparseWeights::from_dense(0.0, Eigen::VectorXd(r.params.t.col(k)));
    dev.intercept = r.params.t0[k];
    fit.deviations.push_back(std::move(dev));
  }
  fit.status = r.status;
  fit.sweeps = r.sweeps;
  return fit;
}

Params shared_params(const SharedFit& fit, Eigen::Index P, Eigen::Index K, const Layout& layout) {
  return shared_start(&fit, P, K, layout);
}

std::unique_ptr<detail::Loss> make_loss(Family family, std::span<const double> y, const Eigen::MatrixXd& w) {
  if (family == Family::linear) return std::make_unique<detail::LinearLoss>(y, w);
  return std::make_unique<detail::LogisticLoss>(y, w);
}

double shared_scale(const Design& X, std::span<const double> y, const Eigen::MatrixXd& r) {
  const Eigen::VectorXd total = r.rowwise().sum();
  double scale = kkt_scale(X, y, std::span<const double>(total.data(), static_cast<std::size_t>(total.size())));
  for (Eigen::Index k = 0; k < r.cols(); ++k) {
    const Eigen::VectorXd col = r.col(k);
    scale = std::max(scale, kkt_scale(X, y, std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
  }
  return scale;
}

SharedFit fit_shared(const Design& X, std::span<const double> y, const Eigen::MatrixXd& r, Family family,
                     const SolverConfig& cfg, const SharedFit* warm, const Layout& layout) {
  cfg.validate();
  check_targets(y, X.rows(), family);
  check_responsibilities(r, X.rows());
  if (family == Family::logistic && !(cfg.intercept_lambda() > 0.0))
    throw InvalidArgument("logistic fits require lambda_0 > 0");
  const Eigen::Index K = r.cols();
  const auto loss = make_loss(family, y, r);
  auto result = detail::solve(X, *loss, K, layout, {cfg.intercept_lambda(), cfg.lambda}, cfg,
                              shared_start(warm, X.cols(), K, layout), 0.5 * cfg.tol * shared_scale(X, y, r));
  return shared_result(result, K, layout);
}

}  // namespace

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be finite and >= 0");
  if (!(intercept_scale >= 1.0) || !std::isfinite(intercept_scale))
    throw InvalidArgument("intercept_scale must be finite and >= 1");
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (max_sweeps < 1 || max_outer_newton < 1) throw InvalidArgument("iteration limits must be positive");
}

double kkt_scale(const Design& X, std::span<const double> y, std::span<const double> w) {
  Eigen::VectorXd wy(X.rows());
  for (Eigen::Index n = 0; n < X.rows(); ++n) wy[n] = w[static_cast<std::size_t>(n)] * y[static_cast<std::size_t>(n)];
  double scale = std::max(1.0, std::abs(wy.sum()));
  if (X.cols() > 0) scale = std::max(scale, (X.transpose() * wy).cwiseAbs().maxCoeff());
  return scale;
}

FitResult fit_linear_l1(const Design& X, std::span<const double> y, std::span<const double> w,
                        const SolverConfig& cfg, const SparseWeights* warm, bool fit_intercept) {
  cfg.validate();
  check_targets(y, X.rows(), Family::linear);
  check_weights(w, X.rows());
  const Layout& layout = fit_intercept ? kSingle : kSingleNoIntercept;
  const Eigen::MatrixXd W = weight_column(w);
  const detail::LinearLoss loss(y, W);
  auto r = detail::solve(X, loss, 1, layout, {cfg.intercept_lambda(), cfg.lambda}, cfg,
                         single_start(warm, X.cols(), layout), 0.5 * cfg.tol * kkt_scale(X, y, w));
  return {SparseWeights::from_dense(fit_intercept ? r.params.g0 : 0.0, r.params.g), r.status, r.sweeps};
}

FitResult fit_logistic_l1(const Design& X, std::span<const double> y, std::span<const double> w,
                          const SolverConfig& cfg, const SparseWeights* warm) {
  cfg.validate();
  check_targets(y, X.rows(), Family::logistic);
  check_weights(w, X.rows());
  if (!(cfg.intercept_lambda() > 0.0))
    throw InvalidArgument("logistic fits require lambda_0 > 0 (intercept shrinkage)");
  const Eigen::MatrixXd W = weight_column(w);
  const detail::LogisticLoss loss(y, W);
  auto r = detail::solve(X, loss, 1, kSingle, {cfg.intercept_lambda(), cfg.lambda}, cfg,
                         single_start(warm, X.cols(), kSingle), 0.5 * cfg.tol * kkt_scale(X, y, w));
  return {SparseWeights::from_dense(r.params.g0, r.params.g), r.status, r.sweeps};
}

SharedFit fit_tied(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                   Family family, const SolverConfig& cfg, const SharedFit* warm) {
  return fit_shared(X, y, responsibilities, family, cfg, warm, kTied);
}

SharedFit fit_auto_shared(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                          Family family, const SolverConfig& cfg, const SharedFit* warm) {
  return fit_shared(X, y, responsibilities, family, cfg, warm, kAuto);
}

double kkt_violation(const Design& X, std::span<const double> y, std::span<const double> w, Family family,
                     const SolverConfig& cfg, const SparseWeights& fit, bool with_intercept) {
  const Layout& layout = with_intercept ? kSingle : kSingleNoIntercept;
  const Eigen::MatrixXd W = weight_column(w);
  const auto loss = make_loss(family, y, W);
  return detail::max_kkt_violation(X, *loss, 1, layout, {cfg.intercept_lambda(), cfg.lambda},
                                   single_start(&fit, X.cols(), layout));
}

double penalized_objective(const Design& X, std::span<const double> y, std::span<const double> w,
                           Family family, const SolverConfig& cfg, const SparseWeights& fit) {
  const Eigen::MatrixXd W = weight_column(w);
  const auto loss = make_loss(family, y, W);
  const Params p = single_start(&fit, X.cols(), kSingle);
  const Penalty pen{cfg.intercept_lambda(), cfg.lambda};
  return loss->value(detail::linear_predictor(X, 1, kSingle, p)) + detail::penalty_value(kSingle, pen, p);
}

double shared_objective(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                        Family family, const SolverConfig& cfg, const SharedFit& fit) {
  const Eigen::Index K = responsibilities.cols();
  const auto loss = make_loss(family, y, responsibilities);
  const Params p = shared_params(fit, X.cols(), K, kAuto);
  const Penalty pen{cfg.intercept_lambda(), cfg.lambda};
  return loss->value(detail::linear_predictor(X, K, kAuto, p)) + detail::penalty_value(kAuto, pen, p);
}

double shared_kkt_violation(const Design& X, std::span<const double> y, const Eigen::MatrixXd& responsibilities,
                            Family family, const SolverConfig& cfg, const SharedFit& fit, bool tied) {
  const Eigen::Index K = responsibilities.cols();
  const Layout& layout = tied ? kTied : kAuto;
  const auto loss = make_loss(family, y, responsibilities);
  return detail::max_kkt_violation(X, *loss, K, layout, {cfg.intercept_lambda(), cfg.lambda},
                                   shared_params(fit, X.cols(), K, layout));
}

std::vector<double> lambda_grid(double top, std::size_t count, double ratio) {
  std::vector<double> grid;
  if (count == 0) return grid;
  if (count == 1) return {top};
  for (std::size_t i = 0; i < count; ++i)
    grid.push_back(top * std::pow(ratio, static_cast<double>(i) / static_cast<double>(count - 1)));
  return grid;
}

namespace {

// Dependency-weight gradient at the null model is affine in one scalar c:
// Xᵀ(w∘a) - c·Xᵀw, with c the null intercept (linear) or σ(intercept)
// (logistic, where a = (1 + y)/2). Both products are computed once.
struct NullGradient {
  Eigen::VectorXd A, U;
  double w_total = 0.0, w_target = 0.0;  // Σw, Σw∘a

  double at(double c) const { return A.size() ? (A - c * U).cwiseAbs().maxCoeff() : 0.0; }
};

NullGradient null_gradient_parts(const Design& X, const Eigen::VectorXd& y, std::span<const double> w, bool logistic) {
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), X.rows());
  const Eigen::VectorXd a = logistic ? Eigen::VectorXd((y.array() + 1.0) * 0.5) : y;
  const Eigen::VectorXd wa = wv.cwiseProduct(a);
  NullGradient ng;
  ng.w_total = wv.sum();
  ng.w_target = wa.sum();
  if (X.cols() > 0) {
    ng.A = X.transpose() * wa;
    ng.U = X.transpose() * wv;
  }
  return ng;
}

// c for the null model whose intercept is fitted with penalty lambda_0.
double null_level(const NullGradient& ng, bool logistic, double lambda0, bool fit_intercept) {
  if (!logistic) return fit_intercept ? soft_threshold(ng.w_target, lambda0) / ng.w_total : 0.0;
  // Stationarity of W·σ(b) - W₊ + λ₀·sign(b) = 0, closed form per sign.
  const double pos = ng.w_target, tot = ng.w_total;
  if (std::abs(tot - 2 * pos) / 2 <= lambda0) return 0.5;
  const double sgn = pos > tot - pos ? 1.0 : -1.0;
  return (pos - lambda0 * sgn) / tot;
}

// Multiclass: largest gradient over non-reference classes at the null gate
// whose intercepts are fitted with penalty lambda_0.
double multiclass_null_gradient(const Design& X, const Eigen::MatrixXd& targets, std::span<const double> w,
                                double lambda0) {
  const Eigen::Index N = X.rows();
  if (X.cols() == 0) return 0.0;
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), N);
  SolverConfig cfg;
  cfg.lambda = lambda0;
  cfg.intercept_scale = 1.0;
  const Eigen::MatrixXd none(N, 0);
  const GateFit null = fit_multiclass_gate(none, targets, w, cfg);
  const Eigen::MatrixXd logp = gate_log_probs(none, null.classes);
  const Eigen::VectorXd tsum = targets.rowwise().sum();
  double worst = 0.0;
  for (Eigen::Index h = 0; h + 1 < targets.cols(); ++h) {
    const Eigen::VectorXd resid = wv.cwiseProduct(targets.col(h) - tsum.cwiseProduct(logp.col(h).array().exp().matrix()));
    worst = std::max(worst, (X.transpose() * resid).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

double lambda_max(const Design& X, const Eigen::MatrixXd& targets, std::span<const double> w, ProblemFamily family,
                  double intercept_scale, bool fit_intercept) {
  check_weights(w, X.rows());
  if (targets.rows() != X.rows()) throw DimensionError("targets and predictors disagree on N");
  std::optional<NullGradient> ng;
  const bool logistic = family == ProblemFamily::logistic;
  if (family != ProblemFamily::multiclass) {
    if (targets.cols() != 1) throw DimensionError("single-task families take one target column");
    ng = null_gradient_parts(X, targets.col(0), w, logistic);
  }
  const auto g = [&](double lambda) {
    const double lambda0 = lambda / intercept_scale;
    if (!ng) return multiclass_null_gradient(X, targets, w, lambda0);
    return ng->at(null_level(*ng, logistic, lambda0, fit_intercept));
  };
  if (family == ProblemFamily::linear && !fit_intercept) return g(0.0);
  const double g0 = g(0.0);
  if (g0 == 0.0) return 0.0;
  // The null intercept shrinks as lambda grows; find the crossing g(λ) = λ.
  double lo = 0.0, hi = g0;
  while (g(hi) > hi) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) <= mid)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace sparn
