// EM for mixtures of product distributions, used to initialize the
// responsibilities of the sparse-network mixtures.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "block_em.hpp"
#include "sparn/error.hpp"
#include "sparn/mixture.hpp"

namespace sparn {

namespace {

constexpr int kMaxIterations = 200;
constexpr double kRelTolerance = 1e-6;
constexpr double kRateClamp = 1e-6;
constexpr double kEmptyMass = 1e-8;
constexpr int kMaxReseeds = 5;

struct ProductParams {
  Eigen::MatrixXd a;  // D x K: rates (binary) or means (continuous)
  Eigen::MatrixXd s;  // D x K: standard deviations (continuous only)
  Eigen::VectorXd log_mix;
};

ProductParams m_step(const Eigen::Ref<const Matrix>& X, const Eigen::MatrixXd& ones_frac, const Eigen::MatrixXd& R,
                     Kind kind) {
  ProductParams p;
  const Eigen::VectorXd mass = R.colwise().sum().transpose();
  p.log_mix = (mass / mass.sum()).array().log();
  const Eigen::RowVectorXd inv = mass.cwiseInverse().transpose();
  if (kind == Kind::binary) {
    p.a = (ones_frac.transpose() * R).array().rowwise() * inv.array();
    p.a = p.a.cwiseMax(kRateClamp).cwiseMin(1.0 - kRateClamp);
  } else {
    p.a = (X.transpose() * R).array().rowwise() * inv.array();
    const Eigen::MatrixXd second = (X.cwiseAbs2().transpose() * R).array().rowwise() * inv.array();
    p.s = (second - p.a.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(kSigmaFloor);
  }
  return p;
}

// N x K per-component log-likelihoods without the mixing term.
Eigen::MatrixXd component_ll(const Eigen::Ref<const Matrix>& X, const Eigen::MatrixXd& ones_frac,
                             const ProductParams& p, Kind kind) {
  if (kind == Kind::binary) {
    const Eigen::MatrixXd lp = p.a.array().log();
    const Eigen::MatrixXd lq = (1.0 - p.a.array()).log();
    Eigen::MatrixXd ll = ones_frac * (lp - lq);
    ll.rowwise() += lq.colwise().sum();
    return ll;
  }
  const Eigen::MatrixXd prec = p.s.cwiseAbs2().cwiseInverse();
  Eigen::MatrixXd ll = X * p.a.cwiseProduct(prec) - 0.5 * (X.cwiseAbs2() * prec);
  const Eigen::RowVectorXd c = -(0.5 * p.a.cwiseAbs2().cwiseProduct(prec).array() + p.s.array().log() + 0.5 * kLog2Pi)
                                    .matrix()
                                    .colwise()
                                    .sum();
  ll.rowwise() += c;
  return ll;
}

}  // namespace

ProductMixtureFit fit_product_mixture(const Eigen::Ref<const Matrix>& X, Kind kind, std::size_t K,
                                      std::uint64_t seed) {
  if (K < 1) throw InvalidArgument("a mixture needs K >= 1");
  const Eigen::Index N = X.rows();
  const auto Kc = static_cast<Eigen::Index>(K);
  if (N < 1 || X.cols() < 1) throw DimensionError("product mixture needs a non-empty matrix");
  const Eigen::MatrixXd ones_frac = kind == Kind::binary ? Eigen::MatrixXd((X.array() + 1.0) * 0.5) : Eigen::MatrixXd();

  ProductMixtureFit fit;
  fit.responsibilities = Eigen::MatrixXd::Ones(N, Kc);
  if (K > 1) {
    Rng rng(seed);
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index k = 0; k < Kc; ++k) fit.responsibilities(n, k) = rng.uniform() + kResponsibilityFloor;
      fit.responsibilities.row(n) /= fit.responsibilities.row(n).sum();
    }
  }

  const double stop = kRelTolerance * static_cast<double>(N);
  double previous = -std::numeric_limits<double>::infinity();
  int reseeds = 0;
  bool warned = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const ProductParams p = m_step(X, ones_frac, fit.responsibilities, kind);
    const Eigen::MatrixXd log_prior = p.log_mix.transpose();
    Eigen::MatrixXd R;
    const Eigen::VectorXd lse = detail::posterior_rows(component_ll(X, ones_frac, p, kind), log_prior, &R);
    fit.responsibilities = std::move(R);
    fit.mixing = p.log_mix.array().exp();
    fit.loglik = lse.sum();
    fit.iterations = it + 1;
    if (K == 1) break;

    const Eigen::VectorXd mass = fit.responsibilities.colwise().sum().transpose();
    bool reseeded = false;
    for (Eigen::Index k = 0; k < Kc; ++k) {
      if (mass[k] >= kEmptyMass * static_cast<double>(N)) continue;
      if (reseeds >= kMaxReseeds) {
        if (!std::exchange(warned, true))
          fit.warnings.push_back("product mixture component " + std::to_string(k) + " collapsed");
        continue;
      }
      ++reseeds;
      reseeded = true;
      std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return lse[a] < lse[b]; });
      const Eigen::Index take = std::max<Eigen::Index>(1, N / (2 * Kc));
      for (Eigen::Index j = 0; j < take; ++j) {
        auto row = fit.responsibilities.row(order[static_cast<std::size_t>(j)]);
        row.setConstant(kResponsibilityFloor);
        row[k] = 1.0;
        row /= row.sum();
      }
    }
    if (!reseeded && std::abs(fit.loglik - previous) < stop) break;
    previous = fit.loglik;
  }
  return fit;
}

}  // namespace sparn
