#include "sparn/arn.hpp"

#include <cmath>

#include "sparn/error.hpp"
#include "sparn/parallel.hpp"

namespace sparn {

namespace detail {

double weighted_rms(const Eigen::VectorXd& resid, std::span<const double> w) {
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), resid.size());
  const double total = wv.sum();
  if (!(total > 0)) return kSigmaFloor;
  return std::max(std::sqrt(wv.dot(resid.cwiseAbs2()) / total), kSigmaFloor);
}

Conditional fit_conditional(const Design& X, std::span<const double> y, std::span<const double> w, Kind kind,
                            const SolverConfig& cfg, const SparseWeights* warm, bool continuous_intercept,
                            SolveStatus* status) {
  Conditional c;
  FitResult r = kind == Kind::binary ? fit_logistic_l1(X, y, w, cfg, warm)
                                     : fit_linear_l1(X, y, w, cfg, warm, continuous_intercept);
  if (status) *status = r.status;
  c.weights = std::move(r.weights);
  if (kind == Kind::continuous) {
    Eigen::VectorXd resid = Eigen::Map<const Eigen::VectorXd>(y.data(), X.rows());
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(X.rows());
    c.weights.accumulate_scores(X, pred);
    resid -= pred;
    c.sigma = weighted_rms(resid, w);
  }
  return c;
}

}  // namespace detail

AutoregressiveNet::AutoregressiveNet(Kind kind, std::vector<Conditional> conditionals, EncodingMeta meta)
    : kind_(kind), conditionals_(std::move(conditionals)), meta_(std::move(meta)) {
  if (conditionals_.empty()) throw InvalidArgument("an autoregressive network needs D >= 1");
  for (std::size_t d = 0; d < conditionals_.size(); ++d) {
    conditionals_[d].weights.validate(d);
    if (kind_ == Kind::continuous && !(conditionals_[d].sigma >= kSigmaFloor))
      throw InvalidArgument("conditional sigma below floor at dimension " + std::to_string(d));
  }
  if (kind_ == Kind::continuous && meta_.dims() != conditionals_.size())
    throw DimensionError("encoding metadata does not match the network dimension");
}

std::size_t AutoregressiveNet::nonzeros() const {
  std::size_t n = 0;
  for (const auto& c : conditionals_) n += c.weights.nnz();
  return n;
}

AutoregressiveNet fit_arn(const Dataset& train, const SolverConfig& cfg, int workers,
                          std::vector<std::string>* warnings) {
  const double lambdas[] = {cfg.lambda};
  return std::move(fit_arn_path(train, lambdas, cfg, workers, warnings).front());
}

std::vector<AutoregressiveNet> fit_arn_path(const Dataset& train, std::span<const double> lambdas,
                                            const SolverConfig& base, int workers,
                                            std::vector<std::string>* warnings) {
  base.validate();
  if (lambdas.empty()) throw InvalidArgument("lambda path is empty");
  const Matrix& data = train.values();
  const auto D = static_cast<std::size_t>(data.cols());
  const std::vector<double> w(static_cast<std::size_t>(data.rows()), 1.0);
  // fits[l][d]
  std::vector<std::vector<Conditional>> fits(lambdas.size(), std::vector<Conditional>(D));
  std::vector<std::vector<std::string>> notes(D);

  parallel_for(D, workers, [&](std::size_t d) {
    const auto di = static_cast<Eigen::Index>(d);
    const Design X = data.leftCols(di);
    const Eigen::VectorXd y = data.col(di);
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
    const SparseWeights* warm = nullptr;
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      SolverConfig cfg = base;
      cfg.lambda = lambdas[l];
      SolveStatus status = SolveStatus::converged;
      fits[l][d] = detail::fit_conditional(X, ys, w, train.kind(), cfg, warm, false, &status);
      if (status != SolveStatus::converged)
        notes[d].push_back("dimension " + std::to_string(d) + ": solver hit iteration limit at lambda " +
                           std::to_string(lambdas[l]));
      warm = &fits[l][d].weights;
    }
  });

  if (warnings)
    for (auto& n : notes) warnings->insert(warnings->end(), n.begin(), n.end());
  std::vector<AutoregressiveNet> nets;
  nets.reserve(lambdas.size());
  for (auto& f : fits) nets.emplace_back(train.kind(), std::move(f), train.meta());
  return nets;
}

double loglik_arn(const AutoregressiveNet& model, std::span<const double> x) {
  if (x.size() != model.dims())
    throw DimensionError("sample has " + std::to_string(x.size()) + " dimensions, model has " +
                         std::to_string(model.dims()));
  double ll = 0.0;
  const auto& conds = model.conditionals();
  for (std::size_t d = 0; d < conds.size(); ++d)
    ll += conditional_log_prob(model.kind(), x[d], conds[d].weights.score(x), conds[d].sigma);
  return ll;
}

Eigen::VectorXd loglik_arn(const AutoregressiveNet& model, const Matrix& X, int workers) {
  if (static_cast<std::size_t>(X.cols()) != model.dims()) throw DimensionError("data dimension does not match model");
  const Eigen::Index N = X.rows();
  Eigen::VectorXd out(N);
  const auto chunks = static_cast<std::size_t>((N + detail::kRowChunk - 1) / detail::kRowChunk);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * detail::kRowChunk;
    const Eigen::Index rows = std::min(detail::kRowChunk, N - begin);
    const Design block = X.middleRows(begin, rows);
    Eigen::VectorXd ll = Eigen::VectorXd::Zero(rows);
    Eigen::VectorXd score(rows);
    const auto& conds = model.conditionals();
    for (std::size_t d = 0; d < conds.size(); ++d) {
      score.setZero();
      conds[d].weights.accumulate_scores(block, score);
      const auto col = block.col(static_cast<Eigen::Index>(d));
      for (Eigen::Index n = 0; n < rows; ++n) ll[n] += conditional_log_prob(model.kind(), col[n], score[n], conds[d].sigma);
    }
    out.segment(begin, rows) = ll;
  });
  return out;
}

std::vector<double> sample_arn(const AutoregressiveNet& model, std::uint64_t seed) {
  Rng rng(seed);
  return sample_arn(model, rng);
}

std::vector<double> sample_arn(const AutoregressiveNet& model, Rng& rng) {
  std::vector<double> x(model.dims(), 0.0);
  const auto& conds = model.conditionals();
  for (std::size_t d = 0; d < conds.size(); ++d)
    x[d] = draw_conditional(model.kind(), conds[d].weights.score(x), conds[d].sigma, rng);
  return x;
}

}  // namespace sparn
