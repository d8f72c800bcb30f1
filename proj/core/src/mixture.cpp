#include "sparn/mixture.hpp"

#include <cmath>
#include <string>

#include "block_em.hpp"
#include "sparn/error.hpp"
#include "sparn/parallel.hpp"

namespace sparn {

std::string_view to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::untied:
      return "untied";
    case SharingMode::tied:
      return "tied";
    case SharingMode::automatic:
      return "auto";
  }
  return "untied";
}

SharingMode parse_sharing_mode(std::string_view text) {
  if (text == "untied") return SharingMode::untied;
  if (text == "tied") return SharingMode::tied;
  if (text == "auto") return SharingMode::automatic;
  throw InvalidArgument("unknown sharing mode '" + std::string(text) + "'");
}

ComponentNetworks::ComponentNetworks(Kind kind, SharingMode mode, std::size_t components, std::size_t first_dim,
                                     std::vector<DimensionParams> dims)
    : kind_(kind), mode_(mode), components_(components), first_(first_dim), dims_(std::move(dims)) {
  if (components_ < 1) throw InvalidArgument("a mixture needs K >= 1");
  if (dims_.empty()) throw InvalidArgument("component networks need at least one dimension");
  effective_.reserve(dims_.size() * components_);
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& p = dims_[i];
    const std::size_t d = first_ + i;
    const std::string where = "dimension " + std::to_string(d);
    if (p.components.size() != components_) throw InvalidArgument(where + ": wrong number of components");
    if (kind_ == Kind::continuous && p.sigma.size() != components_)
      throw InvalidArgument(where + ": wrong number of sigmas");
    if (mode_ == SharingMode::untied && !p.shared.is_zero())
      throw InvalidArgument(where + ": untied mixtures have no shared parameters");
    if (mode_ == SharingMode::tied) {
      if (p.shared.intercept != 0.0) throw InvalidArgument(where + ": tied shared intercept must be zero");
      for (const auto& c : p.components)
        if (!c.entries.empty()) throw InvalidArgument(where + ": tied components hold intercepts only");
    }
    p.shared.validate(d);
    for (std::size_t k = 0; k < components_; ++k) {
      p.components[k].validate(d);
      Conditional c;
      c.weights = p.shared + p.components[k];
      if (kind_ == Kind::continuous) {
        c.sigma = p.sigma[k];
        if (!(c.sigma >= kSigmaFloor)) throw InvalidArgument(where + ": sigma below floor");
      }
      effective_.push_back(std::move(c));
    }
  }
}

double ComponentNetworks::penalty(const SolverConfig& cfg) const {
  const double l0 = cfg.intercept_lambda();
  double v = 0.0;
  for (const auto& p : dims_) {
    v += l0 * std::abs(p.shared.intercept) + cfg.lambda * p.shared.l1_norm();
    for (const auto& c : p.components) v += l0 * std::abs(c.intercept) + cfg.lambda * c.l1_norm();
  }
  return v;
}

std::size_t ComponentNetworks::nonzeros() const {
  std::size_t n = 0;
  for (const auto& p : dims_) {
    n += p.shared.nnz();
    for (const auto& c : p.components) n += c.nnz();
  }
  return n;
}

void ComponentNetworks::component_logliks(std::span<const double> x, std::span<double> out) const {
  if (x.size() < end_dim()) throw DimensionError("sample is shorter than the model");
  if (out.size() != components_) throw DimensionError("output must hold one value per component");
  for (std::size_t k = 0; k < components_; ++k) {
    double ll = 0.0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const Conditional& c = effective(i, k);
      ll += conditional_log_prob(kind_, x[first_ + i], c.weights.score(x), c.sigma);
    }
    out[k] = ll;
  }
}

Eigen::MatrixXd ComponentNetworks::component_logliks(const Matrix& X, int workers) const {
  if (static_cast<std::size_t>(X.cols()) < end_dim()) throw DimensionError("data is narrower than the model");
  const Eigen::Index N = X.rows();
  const auto K = static_cast<Eigen::Index>(components_);
  Eigen::MatrixXd out(N, K);
  const auto chunks = static_cast<std::size_t>((N + detail::kRowChunk - 1) / detail::kRowChunk);
  parallel_for(chunks, workers, [&](std::size_t ch) {
    const Eigen::Index begin = static_cast<Eigen::Index>(ch) * detail::kRowChunk;
    const Eigen::Index rows = std::min(detail::kRowChunk, N - begin);
    const Design block = X.middleRows(begin, rows);
    Eigen::MatrixXd ll = Eigen::MatrixXd::Zero(rows, K);
    Eigen::VectorXd score(rows);
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const auto col = block.col(static_cast<Eigen::Index>(first_ + i));
      for (Eigen::Index k = 0; k < K; ++k) {
        const Conditional& c = effective(i, static_cast<std::size_t>(k));
        score.setZero();
        c.weights.accumulate_scores(block, score);
        for (Eigen::Index n = 0; n < rows; ++n) ll(n, k) += conditional_log_prob(kind_, col[n], score[n], c.sigma);
      }
    }
    out.middleRows(begin, rows) = ll;
  });
  return out;
}

void ComponentNetworks::sample_into(std::size_t k, std::span<double> x, Rng& rng) const {
  if (x.size() < end_dim()) throw DimensionError("sample buffer is shorter than the model");
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const Conditional& c = effective(i, k);
    x[first_ + i] = draw_conditional(kind_, c.weights.score(x), c.sigma, rng);
  }
}

MixtureModel::MixtureModel(ComponentNetworks nets, std::vector<double> mixing, EncodingMeta meta)
    : nets_(std::move(nets)), mixing_(std::move(mixing)), meta_(std::move(meta)) {
  if (nets_.first_dim() != 0) throw InvalidArgument("a mixture model starts at dimension 0");
  if (mixing_.size() != nets_.components()) throw InvalidArgument("mixing vector length differs from K");
  double total = 0.0;
  for (double p : mixing_) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("mixing probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("mixing probabilities must sum to 1");
  if (nets_.kind() == Kind::continuous && meta_.dims() != nets_.count())
    throw DimensionError("encoding metadata does not match the mixture dimension");
}

Eigen::MatrixXd init_product_mixture(const Dataset& train, std::size_t K, std::uint64_t seed,
                                     std::vector<std::string>* warnings) {
  auto fit = fit_product_mixture(train.values(), train.kind(), K, seed);
  if (warnings) warnings->insert(warnings->end(), fit.warnings.begin(), fit.warnings.end());
  return std::move(fit.responsibilities);
}

MixtureFit em_fit(const Dataset& train, std::size_t K, SharingMode mode, const SolverConfig& cfg,
                  const Eigen::MatrixXd& init, const EmOptions& opts) {
  detail::BlockProblem problem;
  problem.data = &train.values();
  problem.kind = train.kind();
  problem.first = 0;
  problem.count = train.dims();
  problem.components = K;
  problem.mode = mode;
  problem.gated = false;
  auto r = detail::run_block_em(problem, cfg, init, opts);
  return MixtureFit{MixtureModel(std::move(r.nets), std::move(r.mixing), train.meta()), std::move(r.trace)};
}

namespace {

Eigen::MatrixXd log_mixing(const MixtureModel& model) {
  Eigen::MatrixXd lp(1, static_cast<Eigen::Index>(model.components()));
  for (std::size_t k = 0; k < model.components(); ++k) lp(0, static_cast<Eigen::Index>(k)) = std::log(model.mixing()[k]);
  return lp;
}

}  // namespace

double loglik_mixture(const MixtureModel& model, std::span<const double> x) {
  if (x.size() != model.dims()) throw DimensionError("sample dimension does not match model");
  std::vector<double> ll(model.components());
  model.nets().component_logliks(x, ll);
  for (std::size_t k = 0; k < ll.size(); ++k) ll[k] += std::log(model.mixing()[k]);
  return log_sum_exp(ll);
}

Eigen::VectorXd loglik_mixture(const MixtureModel& model, const Matrix& X, int workers) {
  if (static_cast<std::size_t>(X.cols()) != model.dims()) throw DimensionError("data dimension does not match model");
  return detail::posterior_rows(model.nets().component_logliks(X, workers), log_mixing(model), nullptr);
}

std::vector<double> sample_mixture(const MixtureModel& model, std::uint64_t seed) {
  Rng rng(seed);
  return sample_mixture(model, rng);
}

std::vector<double> sample_mixture(const MixtureModel& model, Rng& rng) {
  std::vector<double> x(model.dims(), 0.0);
  const std::size_t k = rng.categorical(model.mixing());
  model.nets().sample_into(k, x, rng);
  return x;
}

}  // namespace sparn
