#pragma once

// Independent reference implementations used to check the library. Nothing
// here calls into the solvers; models are evaluated from their raw weights.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "sparn/mixture.hpp"
#include "sparn/seqmix.hpp"

namespace sparn::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Solution {
  double intercept = 0.0;
  VectorXd weights;
  double objective = std::numeric_limits<double>::infinity();
};

inline double sigma_fn(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }
inline double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

// Design with an optional leading all-ones column.
inline MatrixXd augment(const MatrixXd& X, bool intercept) {
  if (!intercept) return X;
  MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  return A;
}

// Per-coordinate penalties, intercept first when present.
inline VectorXd penalties(Eigen::Index P, bool intercept, double lambda, double lambda0) {
  VectorXd pen(P + (intercept ? 1 : 0));
  pen.setConstant(lambda);
  if (intercept) pen[0] = lambda0;
  return pen;
}

inline double lasso_objective(const MatrixXd& A, const VectorXd& y, const VectorXd& w, const VectorXd& pen,
                              const VectorXd& beta) {
  const VectorXd r = y - A * beta;
  return 0.5 * (w.array() * r.array().square()).sum() + (pen.array() * beta.array().abs()).sum();
}

// Exact weighted lasso by enumerating every sign pattern in {-1,0,+1}^P and
// solving the stationarity equations of each restricted smooth problem.
inline Solution lasso_by_sign_patterns(const MatrixXd& X, const VectorXd& y, const VectorXd& w, double lambda,
                                       double lambda0, bool intercept) {
  const MatrixXd A = augment(X, intercept);
  const VectorXd pen = penalties(X.cols(), intercept, lambda, lambda0);
  const int P = static_cast<int>(A.cols());
  const MatrixXd G = A.transpose() * w.asDiagonal() * A;
  const VectorXd c = A.transpose() * (w.array() * y.array()).matrix();

  Solution best;
  best.weights = VectorXd::Zero(P);
  best.objective = lasso_objective(A, y, w, pen, best.weights);
  std::vector<int> sign(static_cast<std::size_t>(P), -1);
  long total = 1;
  for (int j = 0; j < P; ++j) total *= 3;
  for (long code = 0; code < total; ++code) {
    long rest = code;
    std::vector<int> support;
    for (int j = 0; j < P; ++j) {
      sign[static_cast<std::size_t>(j)] = static_cast<int>(rest % 3) - 1;
      rest /= 3;
      if (sign[static_cast<std::size_t>(j)] != 0) support.push_back(j);
    }
    if (support.empty()) continue;
    const int s = static_cast<int>(support.size());
    MatrixXd Gs(s, s);
    VectorXd rhs(s);
    for (int a = 0; a < s; ++a) {
      rhs[a] = c[support[a]] - pen[support[a]] * sign[static_cast<std::size_t>(support[a])];
      for (int b = 0; b < s; ++b) Gs(a, b) = G(support[a], support[b]);
    }
    const Eigen::LDLT<MatrixXd> ldlt(Gs);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) continue;
    const VectorXd sol = ldlt.solve(rhs);
    bool consistent = true;
    for (int a = 0; a < s && consistent; ++a) consistent = sol[a] * sign[static_cast<std::size_t>(support[a])] > 0;
    if (!consistent) continue;
    VectorXd beta = VectorXd::Zero(P);
    for (int a = 0; a < s; ++a) beta[support[a]] = sol[a];
    const double obj = lasso_objective(A, y, w, pen, beta);
    if (obj < best.objective) {
      best.objective = obj;
      best.weights = beta;
    }
  }
  if (intercept) {
    best.intercept = best.weights[0];
    best.weights = VectorXd(best.weights.tail(X.cols()));
  }
  return best;
}

inline double logistic_objective(const MatrixXd& A, const VectorXd& y, const VectorXd& w, const VectorXd& pen,
                                 const VectorXd& beta) {
  const VectorXd eta = A * beta;
  double loss = 0.0;
  for (Eigen::Index n = 0; n < A.rows(); ++n) loss += w[n] * log1pexp(-y[n] * eta[n]);
  return loss + (pen.array() * beta.array().abs()).sum();
}

// Penalized logistic regression (intercept at lambda0) by accelerated
// proximal gradient with restarts, then a fine coordinate-grid polish that
// only accepts objective decreases.
inline Solution logistic_by_proximal_gradient(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
                                              double lambda, double lambda0) {
  const MatrixXd A = augment(X, true);
  const VectorXd pen = penalties(X.cols(), true, lambda, lambda0);
  const MatrixXd H = A.transpose() * w.asDiagonal() * A;
  const double L = 0.25 * Eigen::SelfAdjointEigenSolver<MatrixXd>(H).eigenvalues().maxCoeff() + 1e-12;
  const auto grad = [&](const VectorXd& b) {
    const VectorXd eta = A * b;
    VectorXd g(A.rows());
    for (Eigen::Index n = 0; n < A.rows(); ++n) g[n] = -w[n] * y[n] * sigma_fn(-y[n] * eta[n]);
    return VectorXd(A.transpose() * g);
  };
  const auto prox = [&](const VectorXd& v) {
    VectorXd out(v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const double t = pen[j] / L;
      out[j] = v[j] > t ? v[j] - t : (v[j] < -t ? v[j] + t : 0.0);
    }
    return out;
  };
  VectorXd beta = VectorXd::Zero(A.cols()), z = beta;
  double t = 1.0, prev = logistic_objective(A, y, w, pen, beta);
  for (int it = 0; it < 2'000'000; ++it) {
    const VectorXd next = prox(z - grad(z) / L);
    const double obj = logistic_objective(A, y, w, pen, next);
    if (obj > prev) {
      if (t == 1.0) break;  // a plain proximal step no longer improves: converged to rounding
      z = beta;             // restart momentum
      t = 1.0;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double step = (next - beta).cwiseAbs().maxCoeff();
    z = next + ((t - 1.0) / tn) * (next - beta);
    beta = next;
    t = tn;
    prev = obj;
    if (step < 1e-13) break;
  }
  // Fine-grid descent: try ±h moves per coordinate with shrinking h.
  for (double h = 1e-6; h > 1e-12; h *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (Eigen::Index j = 0; j < beta.size(); ++j)
        for (double dir : {1.0, -1.0}) {
          VectorXd trial = beta;
          trial[j] += dir * h;
          if (std::abs(trial[j]) < 0.5 * h) trial[j] = 0.0;
          const double obj = logistic_objective(A, y, w, pen, trial);
          if (obj < prev - 1e-15) {
            beta = trial;
            prev = obj;
            moved = true;
          }
        }
    }
  }
  Solution s;
  s.intercept = beta[0];
  s.weights = beta.tail(X.cols());
  s.objective = prev;
  return s;
}

// Largest KKT violation of an L1 problem given the smooth gradient at the fit.
inline double kkt_residual(const VectorXd& grad, const VectorXd& beta, const VectorXd& pen) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] != 0.0 ? std::abs(grad[j] + pen[j] * (beta[j] > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(grad[j]) - pen[j]);
    worst = std::max(worst, v);
  }
  return worst;
}

inline VectorXd lasso_gradient(const MatrixXd& A, const VectorXd& y, const VectorXd& w, const VectorXd& beta) {
  return -(A.transpose() * (w.array() * (y - A * beta).array()).matrix());
}

inline VectorXd logistic_gradient(const MatrixXd& A, const VectorXd& y, const VectorXd& w, const VectorXd& beta) {
  const VectorXd eta = A * beta;
  VectorXd g(A.rows());
  for (Eigen::Index n = 0; n < A.rows(); ++n) g[n] = -w[n] * y[n] * sigma_fn(-y[n] * eta[n]);
  return A.transpose() * g;
}

// max(1, max_j |Σ w x_j y|) with the ones column included when present.
inline double certificate_scale(const MatrixXd& A, const VectorXd& y, const VectorXd& w) {
  const VectorXd c = A.transpose() * (w.array() * y.array()).matrix();
  return std::max(1.0, c.cwiseAbs().maxCoeff());
}

// ---------------------------------------------------------------------------
// Direct evaluation of model densities from stored parameters.

inline double dense_score(const SparseWeights& w, const std::vector<double>& x) {
  double s = w.intercept;
  for (const auto& e : w.entries) s += e.value * x[e.index];
  return s;
}

inline double log_conditional(Kind kind, double x, double score, double sigma) {
  if (kind == Kind::binary) return -log1pexp(-x * score);
  const double z = (x - score) / sigma;
  return -0.5 * std::log(2.0 * M_PI) - std::log(sigma) - 0.5 * z * z;
}

inline double arn_logprob(const AutoregressiveNet& m, const std::vector<double>& x) {
  double total = 0.0;
  for (std::size_t d = 0; d < m.dims(); ++d) {
    const auto& c = m.conditionals()[d];
    total += log_conditional(m.kind(), x[d], dense_score(c.weights, x), c.sigma);
  }
  return total;
}

// log P(x_run | x_before, h = k) assembling shared + component parameters by hand.
inline double component_logprob(const ComponentNetworks& nets, std::size_t k, const std::vector<double>& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < nets.count(); ++i) {
    const auto& p = nets.dims()[i];
    const double score = dense_score(p.shared, x) + dense_score(p.components[k], x);
    const double sigma = nets.kind() == Kind::binary ? 1.0 : p.sigma[k];
    total += log_conditional(nets.kind(), x[nets.first_dim() + i], score, sigma);
  }
  return total;
}

inline std::vector<double> gate_probs(const std::vector<SparseWeights>& gate, const std::vector<double>& x) {
  std::vector<double> p(gate.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gate.size(); ++k) mx = std::max(mx, p[k] = dense_score(gate[k], x));
  double z = 0.0;
  for (double& v : p) z += v = std::exp(v - mx);
  for (double& v : p) v /= z;
  return p;
}

// Visits every x in {-1,+1}^D.
inline void for_each_binary(std::size_t D, const std::function<void(const std::vector<double>&)>& fn) {
  std::vector<double> x(D);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << D); ++code) {
    for (std::size_t d = 0; d < D; ++d) x[d] = (code >> d) & 1u ? 1.0 : -1.0;
    fn(x);
  }
}

// ---------------------------------------------------------------------------
// Random model builders.

inline SparseWeights random_weights(std::mt19937_64& rng, std::size_t predictors, double density, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, scale);
  SparseWeights w;
  w.intercept = g(rng);
  for (std::size_t j = 0; j < predictors; ++j)
    if (u(rng) < density) w.entries.push_back({static_cast<std::uint32_t>(j), g(rng)});
  return w;
}

inline AutoregressiveNet random_arn(std::mt19937_64& rng, std::size_t D, Kind kind = Kind::binary) {
  std::vector<Conditional> conds;
  std::uniform_real_distribution<double> s(0.5, 1.5);
  for (std::size_t d = 0; d < D; ++d) {
    Conditional c{random_weights(rng, d, 0.6, 1.0), s(rng)};
    if (kind == Kind::continuous) c.weights.intercept = 0.0;
    else c.sigma = 1.0;
    conds.push_back(c);
  }
  EncodingMeta meta;
  if (kind == Kind::continuous) meta = {std::vector<double>(D, 0.0), std::vector<double>(D, 1.0), std::vector<bool>(D, false)};
  return AutoregressiveNet(kind, std::move(conds), meta);
}

inline ComponentNetworks random_networks(std::mt19937_64& rng, SharingMode mode, std::size_t K, std::size_t first,
                                         std::size_t count, Kind kind = Kind::binary) {
  std::vector<DimensionParams> dims;
  std::uniform_real_distribution<double> s(0.5, 1.5);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t d = first + i;
    DimensionParams p;
    if (mode == SharingMode::tied) {
      p.shared = random_weights(rng, d, 0.6, 1.0);
      p.shared.intercept = 0.0;
    } else if (mode == SharingMode::automatic) {
      p.shared = random_weights(rng, d, 0.6, 1.0);
    }
    for (std::size_t k = 0; k < K; ++k) {
      SparseWeights c = random_weights(rng, d, mode == SharingMode::untied ? 0.6 : 0.3, 1.0);
      if (mode == SharingMode::tied) c.entries.clear();
      p.components.push_back(c);
      if (kind == Kind::continuous) p.sigma.push_back(s(rng));
    }
    dims.push_back(std::move(p));
  }
  return ComponentNetworks(kind, mode, K, first, std::move(dims));
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t K) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> p(K);
  double total = 0.0;
  for (double& v : p) total += v = u(rng);
  for (double& v : p) v /= total;
  // Fold rounding error into the last entry so the sum is 1 to the last bit.
  double head = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) head += p[k];
  p[K - 1] = 1.0 - head;
  return p;
}

inline MixtureModel random_mixture(std::mt19937_64& rng, std::size_t D, std::size_t K, SharingMode mode) {
  return MixtureModel(random_networks(rng, mode, K, 0, D), random_simplex(rng, K), EncodingMeta{});
}

inline std::vector<SparseWeights> random_gate(std::mt19937_64& rng, std::size_t K, std::size_t predictors) {
  std::vector<SparseWeights> gate;
  for (std::size_t k = 0; k + 1 < K; ++k) gate.push_back(random_weights(rng, predictors, 0.5, 1.0));
  gate.emplace_back();
  return gate;
}

// L blocks with the given boundaries and per-block component counts.
inline SequenceModel random_sequence(std::mt19937_64& rng, const Partition& partition,
                                     const std::vector<std::size_t>& K, SharingMode mode = SharingMode::untied) {
  std::vector<SequenceBlock> blocks;
  for (std::size_t l = 0; l < partition.blocks(); ++l) {
    const std::size_t first = partition.begin(l);
    blocks.push_back(SequenceBlock{random_gate(rng, K[l], first),
                                   random_networks(rng, mode, K[l], first, partition.end(l) - first)});
  }
  return SequenceModel(Kind::binary, partition, std::move(blocks), EncodingMeta{});
}

// Binary data in {-1,+1} drawn from a random sparse network, so that
// dependencies exist for the solvers to find.
inline Matrix sample_binary_data(std::mt19937_64& rng, std::size_t N, std::size_t D, double strength = 1.0) {
  std::vector<SparseWeights> w;
  for (std::size_t d = 0; d < D; ++d) w.push_back(random_weights(rng, d, std::min(1.0, 3.0 / (d + 1.0)), strength));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix X(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(D));
  std::vector<double> row(D);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      row[d] = u(rng) < sigma_fn(dense_score(w[d], row)) ? 1.0 : -1.0;
      X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) = row[d];
    }
  }
  return X;
}

}  // namespace sparn::oracle
