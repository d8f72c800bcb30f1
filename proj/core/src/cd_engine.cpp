#include "cd_engine.hpp"

#include <algorithm>
#include <cmath>

#include "sparn/error.hpp"
#include "sparn/math.hpp"

namespace sparn::detail {

namespace {

double violation(double theta, double neg_grad, double pen) {
  if (theta == 0.0) return std::max(0.0, std::abs(neg_grad) - pen);
  return std::abs(neg_grad - (theta > 0 ? pen : -pen));
}

void add_sparse(const Design& X, const Eigen::Ref<const Eigen::VectorXd>& coef, Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index j = 0; j < coef.size(); ++j)
    if (coef[j] != 0.0) out.noalias() += coef[j] * X.col(j);
}

struct Gradients {
  double g0 = 0.0;
  Eigen::VectorXd g;
  Eigen::VectorXd t0;
  Eigen::MatrixXd t;
};

Gradients gradients(const Design& X, const Eigen::MatrixXd& G, const Layout& layout) {
  Gradients out;
  if (layout.global_intercept || layout.global_weights) {
    const Eigen::VectorXd total = G.rowwise().sum();
    out.g0 = total.sum();
    if (layout.global_weights) out.g = X.transpose() * total;
  }
  if (layout.task_intercepts) out.t0 = G.colwise().sum().transpose();
  if (layout.task_weights) out.t = X.transpose() * G;
  return out;
}

// Worst violation per predictor (over all blocks) and over intercepts.
struct Violations {
  std::vector<double> per_predictor;
  double intercepts = 0.0;
};

Violations violations(const Gradients& q, const Layout& layout, const Penalty& pen, const Params& p,
                      Eigen::Index predictors, Eigen::Index tasks) {
  Violations v;
  v.per_predictor.assign(static_cast<std::size_t>(predictors), 0.0);
  if (layout.global_intercept) v.intercepts = violation(p.g0, q.g0, pen.intercept);
  if (layout.task_intercepts)
    for (Eigen::Index k = 0; k < tasks; ++k)
      v.intercepts = std::max(v.intercepts, violation(p.t0[k], q.t0[k], pen.intercept));
  for (Eigen::Index j = 0; j < predictors; ++j) {
    double worst = 0.0;
    if (layout.global_weights) worst = violation(p.g[j], q.g[j], pen.weights);
    if (layout.task_weights)
      for (Eigen::Index k = 0; k < tasks; ++k) worst = std::max(worst, violation(p.t(j, k), q.t(j, k), pen.weights));
    v.per_predictor[static_cast<std::size_t>(j)] = worst;
  }
  return v;
}

// Solves the weighted least-squares surrogate restricted to the working set.
class InnerSolver {
 public:
  InnerSolver(const Design& X, const Layout& layout, const Penalty& pen, const std::vector<Eigen::Index>& ws,
              const Eigen::MatrixXd& Z, const Eigen::MatrixXd& H, Params& p, Eigen::VectorXd& s, Eigen::MatrixXd& e)
      : X_(X), layout_(layout), pen_(pen), ws_(ws), Z_(Z), H_(H), p_(p), s_(s), e_(e) {
    const Eigen::Index K = H.cols();
    b_ = H.rowwise().sum();
    sum_b_ = b_.sum();
    sum_h_ = H.colwise().sum().transpose();
    Eigen::MatrixXd resid = Z - e;
    resid.colwise() -= s;
    c_ = H.cwiseProduct(resid).rowwise().sum();
    hg_.assign(ws.size(), -1.0);
    ht_ = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(ws.size()), K, -1.0);
  }

  int run(double tol, int max_sweeps, bool& hit_limit) {
    int sweeps = 0;
    hit_limit = false;
    while (true) {
      double chg = sweep(false);
      ++sweeps;
      if (chg < tol) return sweeps;
      if (sweeps >= max_sweeps) break;
      do {
        chg = sweep(true);
        ++sweeps;
      } while (chg >= tol && sweeps < max_sweeps);
      if (sweeps >= max_sweeps) break;
    }
    hit_limit = true;
    return sweeps;
  }

  /// Max scaled difference between `p_` and `before` over working-set coordinates.
  double scaled_distance(const Params& before) {
    double d = 0.0;
    if (layout_.global_intercept && sum_b_ > 0) d = std::max(d, std::abs(p_.g0 - before.g0));
    for (std::size_t i = 0; i < ws_.size(); ++i) {
      const Eigen::Index j = ws_[i];
      if (layout_.global_weights && sum_b_ > 0) {
        const double h = global_curv(i);
        d = std::max(d, std::abs(p_.g[j] - before.g[j]) * std::sqrt(h / sum_b_));
      }
      if (layout_.task_weights)
        for (Eigen::Index k = 0; k < H_.cols(); ++k)
          if (sum_h_[k] > 0)
            d = std::max(d, std::abs(p_.t(j, k) - before.t(j, k)) * std::sqrt(task_curv(i, k) / sum_h_[k]));
    }
    if (layout_.task_intercepts)
      for (Eigen::Index k = 0; k < H_.cols(); ++k)
        if (sum_h_[k] > 0) d = std::max(d, std::abs(p_.t0[k] - before.t0[k]));
    return d;
  }

 private:
  double global_curv(std::size_t i) {
    if (hg_[i] < 0) hg_[i] = X_.col(ws_[i]).cwiseAbs2().dot(b_);
    return hg_[i];
  }
  double task_curv(std::size_t i, Eigen::Index k) {
    double& h = ht_(static_cast<Eigen::Index>(i), k);
    if (h < 0) h = X_.col(ws_[i]).cwiseAbs2().dot(H_.col(k));
    return h;
  }

  double sweep(bool active_only) {
    double chg = 0.0;
    const Eigen::Index K = H_.cols();
    if (layout_.global_intercept && sum_b_ > 0) {
      const double old = p_.g0;
      const double next = soft_threshold(c_.sum() + sum_b_ * old, pen_.intercept) / sum_b_;
      const double delta = next - old;
      if (delta != 0.0) {
        p_.g0 = next;
        s_.array() += delta;
        c_.noalias() -= delta * b_;
        chg = std::max(chg, std::abs(delta));
      }
    }
    if (layout_.global_weights && sum_b_ > 0) {
      for (std::size_t i = 0; i < ws_.size(); ++i) {
        const Eigen::Index j = ws_[i];
        if (active_only && p_.g[j] == 0.0) continue;
        const double h = global_curv(i);
        if (h <= 0) continue;
        const auto x = X_.col(j);
        const double old = p_.g[j];
        const double next = soft_threshold(x.dot(c_) + h * old, pen_.weights) / h;
        const double delta = next - old;
        if (delta == 0.0) continue;
        p_.g[j] = next;
        s_.noalias() += delta * x;
        c_.noalias() -= delta * b_.cwiseProduct(x);
        chg = std::max(chg, std::abs(delta) * std::sqrt(h / sum_b_));
      }
    }
    if (!layout_.task_intercepts && !layout_.task_weights) return chg;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (sum_h_[k] <= 0) continue;
      const auto hk = H_.col(k);
      rho_ = Z_.col(k) - s_ - e_.col(k);
      if (layout_.task_intercepts) {
        const double old = p_.t0[k];
        const double next = soft_threshold(hk.dot(rho_) + sum_h_[k] * old, pen_.intercept) / sum_h_[k];
        const double delta = next - old;
        if (delta != 0.0) {
          p_.t0[k] = next;
          e_.col(k).array() += delta;
          rho_.array() -= delta;
          c_.noalias() -= delta * hk;
          chg = std::max(chg, std::abs(delta));
        }
      }
      if (!layout_.task_weights) continue;
      for (std::size_t i = 0; i < ws_.size(); ++i) {
        const Eigen::Index j = ws_[i];
        if (active_only && p_.t(j, k) == 0.0) continue;
        const double h = task_curv(i, k);
        if (h <= 0) continue;
        const auto x = X_.col(j);
        const double old = p_.t(j, k);
        const double next = soft_threshold(x.cwiseProduct(hk).dot(rho_) + h * old, pen_.weights) / h;
        const double delta = next - old;
        if (delta == 0.0) continue;
        p_.t(j, k) = next;
        e_.col(k).noalias() += delta * x;
        rho_.noalias() -= delta * x;
        c_.noalias() -= delta * hk.cwiseProduct(x);
        chg = std::max(chg, std::abs(delta) * std::sqrt(h / sum_h_[k]));
      }
    }
    if (layout_.global_intercept && layout_.task_intercepts) rebalance_intercepts();
    if (layout_.global_weights && layout_.task_weights)
      for (std::size_t i = 0; i < ws_.size(); ++i) rebalance_weight(ws_[i]);
    return chg;
  }

  // Moving δ from every deviation into the global block leaves each task's
  // predictor unchanged. The penalty |g + δ| + Σ|t_k - δ| is minimized at a
  // median of {-g, t_1..t_K}; the global/deviation split would otherwise
  // drift along this flat direction for many sweeps.
  static double median_shift(double g, const Eigen::Ref<const Eigen::VectorXd>& t, std::vector<double>& buf) {
    buf.assign(t.data(), t.data() + t.size());
    buf.push_back(-g);
    const std::size_t m = buf.size();
    std::sort(buf.begin(), buf.end());
    const double lo = buf[(m - 1) / 2], hi = buf[m / 2];
    return std::clamp(0.0, lo, hi);
  }

  void rebalance_intercepts() {
    const double delta = median_shift(p_.g0, p_.t0, buf_);
    if (delta == 0.0) return;
    p_.g0 += delta;
    p_.t0.array() -= delta;
    s_.array() += delta;
    e_.array() -= delta;
  }

  void rebalance_weight(Eigen::Index j) {
    const double delta = median_shift(p_.g[j], p_.t.row(j).transpose(), buf_);
    if (delta == 0.0) return;
    const auto x = X_.col(j);
    p_.g[j] += delta;
    p_.t.row(j).array() -= delta;
    s_.noalias() += delta * x;
    e_.colwise() -= delta * x;
  }

  const Design& X_;
  const Layout& layout_;
  const Penalty& pen_;
  const std::vector<Eigen::Index>& ws_;
  const Eigen::MatrixXd& Z_;
  const Eigen::MatrixXd& H_;
  Params& p_;
  Eigen::VectorXd& s_;
  Eigen::MatrixXd& e_;

  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  Eigen::VectorXd rho_;
  Eigen::VectorXd sum_h_;
  double sum_b_ = 0.0;
  std::vector<double> hg_;
  Eigen::MatrixXd ht_;
  std::vector<double> buf_;
};

Params lerp(const Params& a, const Params& b, double t) {
  Params r = a;
  r.g0 = a.g0 + t * (b.g0 - a.g0);
  if (r.g.size()) r.g = a.g + t * (b.g - a.g);
  if (r.t0.size()) r.t0 = a.t0 + t * (b.t0 - a.t0);
  if (r.t.size()) r.t = a.t + t * (b.t - a.t);
  return r;
}

void check_shapes(const Params& p, Eigen::Index P, Eigen::Index K, const Layout& layout) {
  const bool ok = (!layout.global_weights || p.g.size() == P) && (!layout.task_intercepts || p.t0.size() == K) &&
                  (!layout.task_weights || (p.t.rows() == P && p.t.cols() == K));
  if (!ok) throw InvalidArgument("warm start does not match the problem shape");
}

}  // namespace

double LinearLoss::value(const Eigen::MatrixXd& eta) const {
  const Eigen::Map<const Eigen::VectorXd> y(y_.data(), static_cast<Eigen::Index>(y_.size()));
  double v = 0.0;
  for (Eigen::Index k = 0; k < eta.cols(); ++k) v += 0.5 * w_.col(k).dot((y - eta.col(k)).cwiseAbs2());
  return v;
}

void LinearLoss::derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad, Eigen::MatrixXd& curvature) const {
  const Eigen::Map<const Eigen::VectorXd> y(y_.data(), static_cast<Eigen::Index>(y_.size()));
  neg_grad.resize(eta.rows(), eta.cols());
  for (Eigen::Index k = 0; k < eta.cols(); ++k) neg_grad.col(k) = w_.col(k).cwiseProduct(y - eta.col(k));
  curvature = w_;
}

double LogisticLoss::value(const Eigen::MatrixXd& eta) const {
  double v = 0.0;
  for (Eigen::Index k = 0; k < eta.cols(); ++k)
    for (Eigen::Index n = 0; n < eta.rows(); ++n) {
      const double w = w_(n, k);
      if (w != 0.0) v += w * softplus(-y_[static_cast<std::size_t>(n)] * eta(n, k));
    }
  return v;
}

void LogisticLoss::derivatives(const Eigen::MatrixXd& eta, Eigen::MatrixXd& neg_grad,
                               Eigen::MatrixXd& curvature) const {
  neg_grad.resize(eta.rows(), eta.cols());
  curvature.resize(eta.rows(), eta.cols());
  for (Eigen::Index k = 0; k < eta.cols(); ++k)
    for (Eigen::Index n = 0; n < eta.rows(); ++n) {
      const double w = w_(n, k);
      const double y = y_[static_cast<std::size_t>(n)];
      const double p = sigmoid(eta(n, k));
      neg_grad(n, k) = w * y * sigmoid(-y * eta(n, k));
      curvature(n, k) = w * std::max(p * (1.0 - p), kMinCurvature);
    }
}

Params zero_params(Eigen::Index predictors, Eigen::Index tasks, const Layout& layout) {
  Params p;
  if (layout.global_weights) p.g = Eigen::VectorXd::Zero(predictors);
  if (layout.task_intercepts) p.t0 = Eigen::VectorXd::Zero(tasks);
  if (layout.task_weights) p.t = Eigen::MatrixXd::Zero(predictors, tasks);
  return p;
}

Eigen::MatrixXd linear_predictor(const Design& X, Eigen::Index tasks, const Layout& layout, const Params& p) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(X.rows(), layout.global_intercept ? p.g0 : 0.0);
  if (layout.global_weights) add_sparse(X, p.g, s);
  Eigen::MatrixXd eta(X.rows(), tasks);
  for (Eigen::Index k = 0; k < tasks; ++k) {
    eta.col(k) = s;
    if (layout.task_intercepts) eta.col(k).array() += p.t0[k];
    if (layout.task_weights) add_sparse(X, p.t.col(k), eta.col(k));
  }
  return eta;
}

double penalty_value(const Layout& layout, const Penalty& penalty, const Params& p) {
  double v = 0.0;
  if (layout.global_intercept) v += penalty.intercept * std::abs(p.g0);
  if (layout.task_intercepts) v += penalty.intercept * p.t0.cwiseAbs().sum();
  if (layout.global_weights) v += penalty.weights * p.g.cwiseAbs().sum();
  if (layout.task_weights) v += penalty.weights * p.t.cwiseAbs().sum();
  return v;
}

double max_kkt_violation(const Design& X, const Loss& loss, Eigen::Index tasks, const Layout& layout,
                         const Penalty& penalty, const Params& p) {
  const Eigen::MatrixXd eta = linear_predictor(X, tasks, layout, p);
  Eigen::MatrixXd G, H;
  loss.derivatives(eta, G, H);
  const Violations v = violations(gradients(X, G, layout), layout, penalty, p, X.cols(), tasks);
  double worst = v.intercepts;
  for (double x : v.per_predictor) worst = std::max(worst, x);
  return worst;
}

EngineResult solve(const Design& X, const Loss& loss, Eigen::Index tasks, const Layout& layout,
                   const Penalty& penalty, const SolverConfig& cfg, Params start, double kkt_tolerance) {
  const Eigen::Index N = X.rows();
  const Eigen::Index P = X.cols();
  const Eigen::Index K = tasks;
  check_shapes(start, P, K, layout);

  EngineResult result;
  Params& p = result.params;
  p = std::move(start);

  // s: global part of the predictor; e: task parts.
  Eigen::VectorXd s = Eigen::VectorXd::Constant(N, layout.global_intercept ? p.g0 : 0.0);
  if (layout.global_weights) add_sparse(X, p.g, s);
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(N, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    if (layout.task_intercepts) e.col(k).array() += p.t0[k];
    if (layout.task_weights) add_sparse(X, p.t.col(k), e.col(k));
  }
  const auto current_eta = [&] {
    Eigen::MatrixXd eta = e;
    eta.colwise() += s;
    return eta;
  };

  std::vector<char> in_ws(static_cast<std::size_t>(P), 0);
  std::vector<Eigen::Index> ws;
  for (Eigen::Index j = 0; j < P; ++j) {
    bool nz = layout.global_weights && p.g[j] != 0.0;
    if (layout.task_weights) nz = nz || (p.t.row(j).array() != 0.0).any();
    if (nz) {
      in_ws[static_cast<std::size_t>(j)] = 1;
      ws.push_back(j);
    }
  }

  Eigen::MatrixXd G, H, Z;
  double inner_tol = cfg.tol;
  bool hit_limit = false;

  while (true) {
    Eigen::MatrixXd eta = current_eta();
    loss.derivatives(eta, G, H);
    const Violations v = violations(gradients(X, G, layout), layout, penalty, p, P, K);
    double worst_inside = v.intercepts;
    std::vector<Eigen::Index> add;
    for (Eigen::Index j = 0; j < P; ++j) {
      const double vj = v.per_predictor[static_cast<std::size_t>(j)];
      if (in_ws[static_cast<std::size_t>(j)])
        worst_inside = std::max(worst_inside, vj);
      else if (vj > 0.5 * kkt_tolerance)
        add.push_back(j);
    }
    if (add.empty()) {
      if (worst_inside <= kkt_tolerance || hit_limit) break;
      inner_tol *= 0.1;
      if (inner_tol < 1e-15) break;  // numerical floor: nothing left to gain
    } else {
      for (Eigen::Index j : add) in_ws[static_cast<std::size_t>(j)] = 1;
      std::vector<Eigen::Index> merged;
      merged.reserve(ws.size() + add.size());
      std::merge(ws.begin(), ws.end(), add.begin(), add.end(), std::back_inserter(merged));
      ws = std::move(merged);
    }
    if (hit_limit) break;

    int outer = 0;
    for (; outer < cfg.max_outer_newton; ++outer) {
      if (outer > 0) {
        eta = current_eta();
        loss.derivatives(eta, G, H);
      }
      Z = eta;
      for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index n = 0; n < N; ++n)
          if (H(n, k) > 0) Z(n, k) += G(n, k) / H(n, k);

      const Params before = p;
      const Eigen::VectorXd s_before = s;
      const Eigen::MatrixXd e_before = e;
      InnerSolver inner(X, layout, penalty, ws, Z, H, p, s, e);
      bool limit = false;
      result.sweeps += inner.run(inner_tol, cfg.max_sweeps, limit);
      hit_limit = hit_limit || limit;
      double step = inner.scaled_distance(before);
      if (loss.quadratic()) break;

      const double f_before = loss.value(eta) + penalty_value(layout, penalty, before);
      const Params proposed = p;
      const Eigen::VectorXd s_prop = s;
      const Eigen::MatrixXd e_prop = e;
      double t = 1.0;
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        if (t < 1.0) {
          p = lerp(before, proposed, t);
          s = s_before + t * (s_prop - s_before);
          e = e_before + t * (e_prop - e_before);
        }
        const double f = loss.value(current_eta()) + penalty_value(layout, penalty, p);
        if (f <= f_before) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        p = before;
        s = s_before;
        e = e_before;
        break;
      }
      step *= t;
      if (step < inner_tol || hit_limit) break;
    }
    if (outer >= cfg.max_outer_newton) hit_limit = true;
  }
  result.status = hit_limit ? SolveStatus::max_iterations : SolveStatus::converged;
  return result;
}

}  // namespace sparn::detail
