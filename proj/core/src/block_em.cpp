#include "block_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sparn/error.hpp"
#include "sparn/parallel.hpp"

namespace sparn::detail {

namespace {

constexpr int kMaxReseeds = 5;
constexpr double kEmptyMass = 1e-8;

Family family_of(Kind kind) { return kind == Kind::binary ? Family::logistic : Family::linear; }

std::span<const double> column(const Matrix& m, Eigen::Index j) {
  return {m.col(j).data(), static_cast<std::size_t>(m.rows())};
}

std::string status_note(std::size_t d, const std::string& what) {
  return "dimension " + std::to_string(d) + ": " + what + " hit iteration limit";
}

void set_sigmas(const BlockProblem& pb, const Eigen::MatrixXd& R, std::size_t d, DimensionParams& p) {
  if (pb.kind != Kind::continuous) return;
  const Matrix& data = *pb.data;
  const auto di = static_cast<Eigen::Index>(d);
  const Design X = data.leftCols(di);
  p.sigma.assign(pb.components, 1.0);
  for (std::size_t k = 0; k < pb.components; ++k) {
    Eigen::VectorXd resid = data.col(di);
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(data.rows());
    (p.shared + p.components[k]).accumulate_scores(X, pred);
    resid -= pred;
    p.sigma[k] = weighted_rms(resid, column(R, static_cast<Eigen::Index>(k)));
  }
}

// Single network fit stored in the layout of the requested sharing mode.
std::vector<DimensionParams> fit_single(const BlockProblem& pb, const SolverConfig& cfg, int workers,
                                        std::vector<std::string>& notes) {
  const Matrix& data = *pb.data;
  const std::vector<double> ones(static_cast<std::size_t>(data.rows()), 1.0);
  std::vector<DimensionParams> dims(pb.count);
  std::vector<int> hit(pb.count, 0);
  parallel_for(pb.count, workers, [&](std::size_t i) {
    const std::size_t d = pb.first + i;
    const auto di = static_cast<Eigen::Index>(d);
    SolveStatus status;
    Conditional c = fit_conditional(data.leftCols(di), column(data, di), ones, pb.kind, cfg, nullptr, false, &status);
    hit[i] = status != SolveStatus::converged;
    DimensionParams& p = dims[i];
    switch (pb.mode) {
      case SharingMode::untied:
        p.components = {c.weights};
        break;
      case SharingMode::tied:
        p.shared = c.weights;
        p.shared.intercept = 0.0;
        p.components = {SparseWeights{c.weights.intercept, {}}};
        break;
      case SharingMode::automatic:
        p.shared = c.weights;
        p.components = {SparseWeights{}};
        break;
    }
    if (pb.kind == Kind::continuous) p.sigma = {c.sigma};
  });
  for (std::size_t i = 0; i < pb.count; ++i)
    if (hit[i]) notes.push_back(status_note(pb.first + i, "solver"));
  return dims;
}

std::vector<DimensionParams> m_step(const BlockProblem& pb, const SolverConfig& cfg, const Eigen::MatrixXd& R,
                                    const std::vector<DimensionParams>* warm, int workers,
                                    std::vector<std::string>& notes) {
  const Matrix& data = *pb.data;
  const std::size_t K = pb.components;
  std::vector<DimensionParams> dims(pb.count);
  for (auto& p : dims) p.components.resize(K);
  std::vector<int> hit(pb.count, 0);

  if (pb.mode == SharingMode::untied) {
    std::vector<int> task_hit(pb.count * K, 0);
    parallel_for(pb.count * K, workers, [&](std::size_t t) {
      const std::size_t i = t / K, k = t % K;
      const auto di = static_cast<Eigen::Index>(pb.first + i);
      const SparseWeights* start = warm ? &(*warm)[i].components[k] : nullptr;
      SolveStatus status;
      Conditional c = fit_conditional(data.leftCols(di), column(data, di), column(R, static_cast<Eigen::Index>(k)),
                                      pb.kind, cfg, start, true, &status);
      task_hit[t] = status != SolveStatus::converged;
      dims[i].components[k] = std::move(c.weights);
    });
    for (std::size_t t = 0; t < task_hit.size(); ++t) hit[t / K] |= task_hit[t];
  } else {
    parallel_for(pb.count, workers, [&](std::size_t i) {
      const auto di = static_cast<Eigen::Index>(pb.first + i);
      SharedFit start;
      if (warm) {
        start.global = (*warm)[i].shared;
        start.deviations = (*warm)[i].components;
      }
      const SharedFit* sp = warm ? &start : nullptr;
      const Design X = data.leftCols(di);
      SharedFit fit = pb.mode == SharingMode::tied
                          ? fit_tied(X, column(data, di), R, family_of(pb.kind), cfg, sp)
                          : fit_auto_shared(X, column(data, di), R, family_of(pb.kind), cfg, sp);
      hit[i] = fit.status != SolveStatus::converged;
      dims[i].shared = std::move(fit.global);
      dims[i].components = std::move(fit.deviations);
    });
  }
  parallel_for(pb.count, workers, [&](std::size_t i) { set_sigmas(pb, R, pb.first + i, dims[i]); });
  for (std::size_t i = 0; i < pb.count; ++i)
    if (hit[i]) notes.push_back(status_note(pb.first + i, "M-step solver"));
  return dims;
}

std::vector<double> mixing_from(const Eigen::MatrixXd& R) {
  const Eigen::VectorXd mass = R.colwise().sum().transpose();
  const double total = mass.sum();
  std::vector<double> pi(static_cast<std::size_t>(mass.size()));
  for (Eigen::Index k = 0; k < mass.size(); ++k) pi[static_cast<std::size_t>(k)] = mass[k] / total;
  return pi;
}

Eigen::MatrixXd log_prior_of(const std::vector<double>& pi) {
  Eigen::MatrixXd lp(1, static_cast<Eigen::Index>(pi.size()));
  for (std::size_t k = 0; k < pi.size(); ++k) lp(0, static_cast<Eigen::Index>(k)) = std::log(pi[k]);
  return lp;
}

// Gives each collapsed component the lowest-likelihood samples. Returns the
// number of components reseeded.
int reseed(Eigen::MatrixXd& R, const Eigen::VectorXd& loglik) {
  const Eigen::Index N = R.rows(), K = R.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return loglik[a] < loglik[b]; });
  const Eigen::Index take = std::max<Eigen::Index>(1, N / (2 * K));
  std::size_t next = 0;
  int count = 0;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (R.col(k).sum() >= kEmptyMass * static_cast<double>(N)) continue;
    for (Eigen::Index j = 0; j < take && next < order.size(); ++j, ++next) {
      const Eigen::Index n = order[next];
      R.row(n).setConstant(kResponsibilityFloor);
      R(n, k) = 1.0;
      R.row(n) /= R.row(n).sum();
    }
    ++count;
  }
  return count;
}

}  // namespace

double gate_penalty(const std::vector<SparseWeights>& gate, const SolverConfig& cfg) {
  double v = 0.0;
  for (const auto& c : gate) v += cfg.intercept_lambda() * std::abs(c.intercept) + cfg.lambda * c.l1_norm();
  return v;
}

Eigen::VectorXd posterior_rows(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& log_prior, Eigen::MatrixXd* resp) {
  const Eigen::Index N = scores.rows(), K = scores.cols();
  const bool broadcast = log_prior.rows() == 1;
  Eigen::VectorXd lse(N);
  if (resp) resp->resize(N, K);
  std::vector<double> row(static_cast<std::size_t>(K));
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index k = 0; k < K; ++k)
      row[static_cast<std::size_t>(k)] = scores(n, k) + log_prior(broadcast ? 0 : n, k);
    lse[n] = log_sum_exp(row);
    if (!resp) continue;
    double total = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double r = std::max(std::exp(row[static_cast<std::size_t>(k)] - lse[n]), kResponsibilityFloor);
      (*resp)(n, k) = r;
      total += r;
    }
    resp->row(n) /= total;
  }
  return lse;
}

BlockResult run_block_em(const BlockProblem& pb, const SolverConfig& cfg, const Eigen::MatrixXd& init,
                         const EmOptions& opts) {
  cfg.validate();
  if (!pb.data) throw InvalidArgument("block problem without data");
  const Matrix& data = *pb.data;
  const Eigen::Index N = data.rows();
  const std::size_t K = pb.components;
  if (K < 1) throw InvalidArgument("a mixture needs K >= 1");
  if (pb.count < 1 || pb.first + pb.count > static_cast<std::size_t>(data.cols()))
    throw DimensionError("block dimensions fall outside the data");
  if (opts.max_iterations < 1) throw InvalidArgument("EM needs at least one iteration");
  const int workers = std::max(1, opts.workers);
  const Design gate_X = data.leftCols(static_cast<Eigen::Index>(pb.first));
  const std::vector<double> ones(static_cast<std::size_t>(N), 1.0);

  EmTrace trace;
  if (K == 1) {
    auto dims = fit_single(pb, cfg, workers, trace.warnings);
    ComponentNetworks nets(pb.kind, pb.mode, 1, pb.first, std::move(dims));
    const Eigen::VectorXd ll = nets.component_logliks(data, workers).col(0);
    trace.objective.push_back((ll.sum() - nets.penalty(cfg)) / static_cast<double>(N));
    trace.converged = true;
    return BlockResult{std::move(nets), {1.0}, {SparseWeights{}}, std::move(trace)};
  }

  if (init.rows() != N || init.cols() != static_cast<Eigen::Index>(K))
    throw DimensionError("initial responsibilities must be N x K");
  if (!init.allFinite() || !(init.array() >= 0.0).all())
    throw InvalidArgument("initial responsibilities must be finite and nonnegative");
  Eigen::MatrixXd R = init;
  for (Eigen::Index n = 0; n < N; ++n) {
    R.row(n) = R.row(n).cwiseMax(kResponsibilityFloor);
    R.row(n) /= R.row(n).sum();
  }

  std::vector<DimensionParams> params;
  std::vector<double> mixing;
  GateFit gate;
  int reseeds = 0;
  bool collapse_reported = false;
  double previous = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < opts.max_iterations; ++it) {
    params = m_step(pb, cfg, R, params.empty() ? nullptr : &params, workers, trace.warnings);
    Eigen::MatrixXd log_prior;
    double prior_penalty = 0.0;
    if (pb.gated) {
      const GateFit* warm = gate.classes.empty() ? nullptr : &gate;
      gate = fit_multiclass_gate(gate_X, R, ones, cfg, warm);
      if (gate.status != SolveStatus::converged)
        trace.warnings.push_back("iteration " + std::to_string(it) + ": gate solver hit iteration limit");
      log_prior = gate_log_probs(gate_X, gate.classes);
      prior_penalty = gate_penalty(gate.classes, cfg);
    } else {
      mixing = mixing_from(R);
      log_prior = log_prior_of(mixing);
    }

    const ComponentNetworks nets(pb.kind, pb.mode, K, pb.first, params);
    const Eigen::VectorXd lse = posterior_rows(nets.component_logliks(data, workers), log_prior, &R);
    const double objective = (lse.sum() - nets.penalty(cfg) - prior_penalty) / static_cast<double>(N);
    trace.objective.push_back(objective);

    bool reseeded = false;
    const Eigen::VectorXd mass = R.colwise().sum().transpose();
    if ((mass.array() < kEmptyMass * static_cast<double>(N)).any()) {
      if (reseeds < kMaxReseeds) {
        reseeds += reseed(R, lse);
        trace.reseeds.push_back(it);
        reseeded = true;
      } else if (!collapse_reported) {
        trace.warnings.push_back("component collapsed after " + std::to_string(kMaxReseeds) + " reseeds");
        collapse_reported = true;
      }
    }
    if (opts.stop_early && !reseeded && it > 0 && objective - previous < opts.tolerance) {
      trace.converged = true;
      break;
    }
    previous = objective;
  }

  ComponentNetworks nets(pb.kind, pb.mode, K, pb.first, std::move(params));
  std::vector<SparseWeights> classes;
  if (pb.gated) {
    classes = std::move(gate.classes);
  } else {
    // Mixing expressed as an intercept-only gate with the last class as reference.
    classes.resize(K);
    for (std::size_t k = 0; k + 1 < K; ++k) classes[k].intercept = std::log(mixing[k] / mixing[K - 1]);
  }
  return BlockResult{std::move(nets), std::move(mixing), std::move(classes), std::move(trace)};
}

}  // namespace sparn::detail
