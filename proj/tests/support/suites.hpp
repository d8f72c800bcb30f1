#pragma once

// Randomized property suites shared by the unit tests (small instance
// counts) and the acceptance runner (the full pinned counts).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sparn/arn.hpp"
#include "sparn/mixture.hpp"
#include "sparn/seqmix.hpp"
#include "sparn/solvers.hpp"

namespace sparn::suite {

struct Outcome {
  bool ok = true;
  double worst = 0.0;
  std::string detail;
  double seconds = 0.0;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// Solver oracle suite.

struct OracleStats {
  double coef_error = 0.0;
  double kkt_ratio = 0.0;  // violation / (tol·scale)
  int instances = 0;
  int failures = 0;
};

// Half lasso (with and without intercept), half penalized logistic. Each
// instance is compared to the brute-force oracle per coordinate and its KKT
// residual is checked against tol·scale.
inline OracleStats solver_oracle_suite(int instances, std::uint64_t seed, double coef_tol = 1e-4) {
  OracleStats st;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < instances; ++i) {
    const int N = 10 + static_cast<int>(rng() % 21);
    const int P = 1 + static_cast<int>(rng() % 8);
    Eigen::MatrixXd X(N, P);
    for (int n = 0; n < N; ++n)
      for (int j = 0; j < P; ++j) X(n, j) = g(rng);
    Eigen::VectorXd w(N), y(N), truth(P);
    for (int n = 0; n < N; ++n) w[n] = 0.2 + 1.3 * u(rng);
    for (int j = 0; j < P; ++j) truth[j] = u(rng) < 0.5 ? 0.0 : 2.0 * g(rng);
    const bool logistic = i % 2 == 1;
    const bool intercept = logistic || i % 4 == 2;
    const double b0 = intercept ? g(rng) : 0.0;
    for (int n = 0; n < N; ++n) {
      const double eta = b0 + X.row(n).dot(truth);
      y[n] = logistic ? (u(rng) < oracle::sigma_fn(eta) ? 1.0 : -1.0) : eta + 0.5 * g(rng);
    }
    const Eigen::MatrixXd A = oracle::augment(X, intercept);
    const double scale = oracle::certificate_scale(A, y, w);
    const double top = (X.transpose() * (w.array() * y.array()).matrix()).cwiseAbs().maxCoeff();

    SolverConfig cfg;
    cfg.lambda = std::max(1e-3, top * (logistic ? 0.05 + 0.4 * u(rng) : 0.02 + 0.6 * u(rng)));
    cfg.intercept_scale = 1.0 + 9.0 * u(rng);
    const std::span<const double> ys(y.data(), y.size()), ws(w.data(), w.size());

    oracle::Solution ref;
    FitResult fit;
    if (logistic) {
      ref = oracle::logistic_by_proximal_gradient(X, y, w, cfg.lambda, cfg.intercept_lambda());
      fit = fit_logistic_l1(X, ys, ws, cfg);
    } else {
      ref = oracle::lasso_by_sign_patterns(X, y, w, cfg.lambda, cfg.intercept_lambda(), intercept);
      fit = fit_linear_l1(X, ys, ws, cfg, nullptr, intercept);
    }
    const Eigen::VectorXd got = fit.weights.to_dense(static_cast<std::size_t>(P));
    double err = (got - ref.weights).cwiseAbs().maxCoeff();
    if (intercept) err = std::max(err, std::abs(fit.weights.intercept - ref.intercept));

    Eigen::VectorXd beta(A.cols());
    if (intercept) {
      beta[0] = fit.weights.intercept;
      beta.tail(P) = got;
    } else {
      beta = got;
    }
    const Eigen::VectorXd pen = oracle::penalties(P, intercept, cfg.lambda, cfg.intercept_lambda());
    const Eigen::VectorXd grad =
        logistic ? oracle::logistic_gradient(A, y, w, beta) : oracle::lasso_gradient(A, y, w, beta);
    const double ratio = oracle::kkt_residual(grad, beta, pen) / (cfg.tol * scale);

    st.coef_error = std::max(st.coef_error, err);
    st.kkt_ratio = std::max(st.kkt_ratio, ratio);
    ++st.instances;
    if (err > coef_tol || ratio > 1.0 || fit.status != SolveStatus::converged) ++st.failures;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Exactness suite: enumeration over data space and latent space.

struct ExactStats {
  double arn_norm = 0.0;        // |Σ P(x) - 1|
  double mixture_norm = 0.0;
  double sequence_norm = 0.0;
  double marginal = 0.0;        // |loglik - brute-force latent sum|
  double factorization = 0.0;   // |joint posterior - product of block posteriors|
  double single_vs_batch = 0.0; // |single-sample loglik - batch loglik|
};

inline double sum_exp(std::size_t D, const std::function<double(const std::vector<double>&)>& ll) {
  double total = 0.0;
  oracle::for_each_binary(D, [&](const std::vector<double>& x) { total += std::exp(ll(x)); });
  return total;
}

inline Matrix all_binary_rows(std::size_t D) {
  Matrix X(static_cast<Eigen::Index>(std::size_t{1} << D), static_cast<Eigen::Index>(D));
  Eigen::Index n = 0;
  oracle::for_each_binary(D, [&](const std::vector<double>& x) {
    for (std::size_t d = 0; d < D; ++d) X(n, static_cast<Eigen::Index>(d)) = x[d];
    ++n;
  });
  return X;
}

inline ExactStats exactness_suite(std::uint64_t seed, int repeats = 3) {
  ExactStats st;
  std::mt19937_64 rng(seed);
  for (int r = 0; r < repeats; ++r) {
    for (std::size_t D : {std::size_t{10}, std::size_t{12}}) {
      const auto m = oracle::random_arn(rng, D);
      st.arn_norm = std::max(st.arn_norm, std::abs(sum_exp(D, [&](const auto& x) { return loglik_arn(m, x); }) - 1.0));
      const Matrix all = all_binary_rows(D);
      const Eigen::VectorXd batch = loglik_arn(m, all, 2);
      for (Eigen::Index n = 0; n < all.rows(); n += 97) {
        const std::vector<double> x = to_std(all.row(n).transpose());
        st.single_vs_batch = std::max(st.single_vs_batch, std::abs(batch[n] - oracle::arn_logprob(m, x)));
      }
    }
    for (SharingMode mode : {SharingMode::untied, SharingMode::tied, SharingMode::automatic})
      for (std::size_t K = 1; K <= 3; ++K) {
        const std::size_t D = 8;
        const auto m = oracle::random_mixture(rng, D, K, mode);
        st.mixture_norm =
            std::max(st.mixture_norm, std::abs(sum_exp(D, [&](const auto& x) { return loglik_mixture(m, x); }) - 1.0));
        oracle::for_each_binary(D, [&](const std::vector<double>& x) {
          double ref = 0.0;
          for (std::size_t k = 0; k < K; ++k) ref += m.mixing()[k] * std::exp(oracle::component_logprob(m.nets(), k, x));
          st.single_vs_batch = std::max(st.single_vs_batch, std::abs(loglik_mixture(m, x) - std::log(ref)));
        });
      }
    const std::size_t D = 8;
    const std::vector<std::size_t> K{2, 3};
    // A non-identity order exercises the input/model permutation as well.
    std::vector<std::size_t> order(D);
    for (std::size_t i = 0; i < D; ++i) order[i] = (i * 3 + static_cast<std::size_t>(r)) % D;
    for (const Partition& part : {Partition::from_boundaries({0, 3, 8}), Partition::from_boundaries({0, 5, 8}, order)}) {
      const auto m = oracle::random_sequence(rng, part, K);
      const Matrix all = all_binary_rows(D);
      const Eigen::VectorXd batch = loglik_sequence(m, all, 3);
      double total = 0.0;
      Eigen::Index n = 0;
      oracle::for_each_binary(D, [&](const std::vector<double>& x_in) {
        const std::vector<double> x = part.to_model(x_in);
        const auto& b0 = m.blocks()[0];
        const auto& b1 = m.blocks()[1];
        const auto g0 = oracle::gate_probs(b0.gate, x);
        const auto g1 = oracle::gate_probs(b1.gate, x);
        // Joint P(h0, h1, x) over the 2 x 3 latent grid.
        double joint[2][3];
        double px = 0.0;
        for (std::size_t h0 = 0; h0 < 2; ++h0)
          for (std::size_t h1 = 0; h1 < 3; ++h1) {
            joint[h0][h1] = g0[h0] * std::exp(oracle::component_logprob(b0.nets, h0, x)) * g1[h1] *
                            std::exp(oracle::component_logprob(b1.nets, h1, x));
            px += joint[h0][h1];
          }
        const double ll = loglik_sequence(m, x_in);
        total += std::exp(ll);
        st.marginal = std::max(st.marginal, std::abs(ll - std::log(px)));
        st.single_vs_batch = std::max(st.single_vs_batch, std::abs(batch[n++] - ll));
        const auto post = infer_posterior(m, x_in);
        for (std::size_t h0 = 0; h0 < 2; ++h0)
          for (std::size_t h1 = 0; h1 < 3; ++h1)
            st.factorization = std::max(st.factorization, std::abs(joint[h0][h1] / px - post[0][h0] * post[1][h1]));
      });
      st.sequence_norm = std::max(st.sequence_norm, std::abs(total - 1.0));
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// EM monotonicity suite.

struct MonotoneStats {
  int configs = 0;
  int failures = 0;
  double worst_drop = 0.0;        // largest decrease between consecutive iterations
  double objective_mismatch = 0.0;// |trace end - objective recomputed from the model|
  int min_iterations = 0;
  std::string detail;
};

// Binary data drawn from a few clusters, each a random sparse network.
inline Matrix clustered_binary(std::mt19937_64& rng, std::size_t N, std::size_t D, std::size_t clusters) {
  Matrix X(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(D));
  std::size_t row = 0;
  for (std::size_t c = 0; c < clusters; ++c) {
    const std::size_t n = c + 1 == clusters ? N - row : N / clusters;
    X.middleRows(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(n)) = oracle::sample_binary_data(rng, n, D, 1.5);
    row += n;
  }
  return X;
}

inline MonotoneStats em_monotonicity_suite(int configs, int iterations, std::uint64_t seed, double slack = 1e-6) {
  MonotoneStats st;
  st.min_iterations = iterations;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const SharingMode modes[] = {SharingMode::untied, SharingMode::tied, SharingMode::automatic};
  for (int c = 0; c < configs; ++c) {
    const SharingMode mode = modes[c % 3];
    const std::size_t D = 6 + rng() % 7;
    const std::size_t N = 150 + rng() % 151;
    const std::size_t K = 2 + rng() % 3;
    const Dataset train(clustered_binary(rng, N, D, 1 + rng() % 3), Kind::binary, EncodingMeta{}, Role::train);
    SolverConfig cfg;
    cfg.lambda = static_cast<double>(N) * (0.005 + 0.1 * u(rng));
    EmOptions opts;
    opts.max_iterations = iterations;
    opts.stop_early = false;
    const auto init = init_product_mixture(train, K, rng());
    const MixtureFit fit = em_fit(train, K, mode, cfg, init, opts);
    const auto& obj = fit.trace.objective;
    st.min_iterations = std::min(st.min_iterations, static_cast<int>(obj.size()));
    bool ok = static_cast<int>(obj.size()) == iterations;
    for (std::size_t t = 1; t < obj.size(); ++t) {
      const bool after_reseed = std::find(fit.trace.reseeds.begin(), fit.trace.reseeds.end(), static_cast<int>(t - 1)) !=
                                fit.trace.reseeds.end();
      if (after_reseed) continue;
      const double drop = obj[t - 1] - obj[t];
      st.worst_drop = std::max(st.worst_drop, drop);
      if (drop > slack) ok = false;
    }
    // The reported objective must be the penalized log-likelihood of the returned model.
    double ll = 0.0;
    for (Eigen::Index n = 0; n < train.samples(); ++n) {
      const std::vector<double> x = to_std(train.values().row(n).transpose());
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        p += fit.model.mixing()[k] * std::exp(oracle::component_logprob(fit.model.nets(), k, x));
      ll += std::log(p);
    }
    const double recomputed = (ll - fit.model.nets().penalty(cfg)) / static_cast<double>(N);
    const double mismatch = std::abs(recomputed - obj.back());
    st.objective_mismatch = std::max(st.objective_mismatch, mismatch);
    if (mismatch > 1e-8) ok = false;
    ++st.configs;
    if (!ok) {
      ++st.failures;
      std::ostringstream os;
      os << " [config " << c << " mode " << to_string(mode) << " K " << K << "]";
      st.detail += os.str();
    }
  }
  return st;
}

}  // namespace sparn::suite
