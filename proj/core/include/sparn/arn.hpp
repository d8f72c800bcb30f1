#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparn/data.hpp"
#include "sparn/math.hpp"
#include "sparn/random.hpp"
#include "sparn/solvers.hpp"

namespace sparn {

/// Lower bound on every Gaussian conditional standard deviation.
inline constexpr double kSigmaFloor = 1e-3;

/// One per-dimension conditional. Binary: P(x_d = +1 | ·) = σ(score).
/// Continuous: x_d ~ N(score, sigma²), intercept 0 for single networks.
/// `sigma` is unused for binary data.
struct Conditional {
  SparseWeights weights;
  double sigma = 1.0;
  bool operator==(const Conditional&) const = default;
};

/// log P(x_d | score) for one conditional.
inline double conditional_log_prob(Kind kind, double x, double score, double sigma) {
  if (kind == Kind::binary) return log_sigmoid_pm(x, score);
  const double z = (x - score) / sigma;
  return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

inline double draw_conditional(Kind kind, double score, double sigma, Rng& rng) {
  if (kind == Kind::binary) return rng.uniform() < sigmoid(score) ? 1.0 : -1.0;
  return score + sigma * rng.normal();
}

class AutoregressiveNet {
 public:
  /// Validates that conditional d references only predictors < d.
  AutoregressiveNet(Kind kind, std::vector<Conditional> conditionals, EncodingMeta meta);

  Kind kind() const { return kind_; }
  std::size_t dims() const { return conditionals_.size(); }
  const std::vector<Conditional>& conditionals() const { return conditionals_; }
  const EncodingMeta& meta() const { return meta_; }
  std::size_t nonzeros() const;

  bool operator==(const AutoregressiveNet&) const = default;

 private:
  Kind kind_;
  std::vector<Conditional> conditionals_;
  EncodingMeta meta_;
};

/// Fits the D conditionals independently on `workers` threads. Solver
/// non-convergence is reported through `warnings` ("dimension d: ...").
AutoregressiveNet fit_arn(const Dataset& train, const SolverConfig& cfg, int workers = 1,
                          std::vector<std::string>* warnings = nullptr);

/// One network per λ in `lambdas` (expected decreasing); each dimension's
/// path is warm-started from the previous λ.
std::vector<AutoregressiveNet> fit_arn_path(const Dataset& train, std::span<const double> lambdas,
                                            const SolverConfig& base, int workers = 1,
                                            std::vector<std::string>* warnings = nullptr);

/// Log-likelihood in nats of one encoded sample (standardized space for
/// continuous data).
double loglik_arn(const AutoregressiveNet& model, std::span<const double> x);
/// Per-row log-likelihoods of an encoded sample matrix.
Eigen::VectorXd loglik_arn(const AutoregressiveNet& model, const Matrix& X, int workers = 1);

std::vector<double> sample_arn(const AutoregressiveNet& model, std::uint64_t seed);
std::vector<double> sample_arn(const AutoregressiveNet& model, Rng& rng);

namespace detail {

/// Fits one conditional (target column d) with sample weights. Binary fits
/// always carry a penalized intercept; continuous fits only when asked.
/// Sigma is the weighted RMS residual, floored at kSigmaFloor.
Conditional fit_conditional(const Design& X, std::span<const double> y, std::span<const double> w, Kind kind,
                            const SolverConfig& cfg, const SparseWeights* warm, bool continuous_intercept,
                            SolveStatus* status);

double weighted_rms(const Eigen::VectorXd& resid, std::span<const double> w);

/// Rows per evaluation chunk; fixed so results do not depend on worker count.
inline constexpr Eigen::Index kRowChunk = 512;

}  // namespace detail

}  // namespace sparn
