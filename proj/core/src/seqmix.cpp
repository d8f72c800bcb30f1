#include "sparn/seqmix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "block_em.hpp"
#include "sparn/error.hpp"
#include "sparn/parallel.hpp"

namespace sparn {

Partition Partition::from_boundaries(std::vector<std::size_t> boundaries, std::vector<std::size_t> order) {
  if (boundaries.size() < 2 || boundaries.front() != 0)
    throw InvalidArgument("partition boundaries must start at 0 and name at least one interval");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw InvalidArgument("partition boundaries must be strictly increasing");
  const std::size_t D = boundaries.back();
  if (!order.empty()) {
    if (order.size() != D) throw InvalidArgument("dimension order length differs from D");
    std::vector<bool> seen(D, false);
    for (std::size_t c : order) {
      if (c >= D || seen[c]) throw InvalidArgument("dimension order must be a permutation");
      seen[c] = true;
    }
    bool identity = true;
    for (std::size_t i = 0; i < D && identity; ++i) identity = order[i] == i;
    if (identity) order.clear();
  }
  Partition p;
  p.boundaries_ = std::move(boundaries);
  p.order_ = std::move(order);
  return p;
}

Partition Partition::grid(std::size_t rows, std::size_t cols, std::size_t tile_rows, std::size_t tile_cols) {
  if (rows == 0 || cols == 0 || tile_rows == 0 || tile_cols == 0)
    throw InvalidArgument("grid and tile sizes must be positive");
  if (rows % tile_rows != 0 || cols % tile_cols != 0)
    throw InvalidArgument("tiles must divide the image evenly");
  std::vector<std::size_t> order;
  std::vector<std::size_t> bounds{0};
  order.reserve(rows * cols);
  for (std::size_t tr = 0; tr < rows; tr += tile_rows)
    for (std::size_t tc = 0; tc < cols; tc += tile_cols) {
      for (std::size_t r = tr; r < tr + tile_rows; ++r)
        for (std::size_t c = tc; c < tc + tile_cols; ++c) order.push_back(r * cols + c);
      bounds.push_back(order.size());
    }
  return from_boundaries(std::move(bounds), std::move(order));
}

Matrix Partition::to_model(const Matrix& input) const {
  if (static_cast<std::size_t>(input.cols()) != dims()) throw DimensionError("data dimension does not match partition");
  if (order_.empty()) return input;
  Matrix out(input.rows(), input.cols());
  for (std::size_t i = 0; i < order_.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = input.col(static_cast<Eigen::Index>(order_[i]));
  return out;
}

std::vector<double> Partition::to_model(std::span<const double> input) const {
  if (input.size() != dims()) throw DimensionError("sample dimension does not match partition");
  if (order_.empty()) return {input.begin(), input.end()};
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < order_.size(); ++i) out[i] = input[order_[i]];
  return out;
}

std::vector<double> Partition::to_input(std::span<const double> model) const {
  if (model.size() != dims()) throw DimensionError("sample dimension does not match partition");
  if (order_.empty()) return {model.begin(), model.end()};
  std::vector<double> out(model.size());
  for (std::size_t i = 0; i < order_.size(); ++i) out[order_[i]] = model[i];
  return out;
}

SequenceModel::SequenceModel(Kind kind, Partition partition, std::vector<SequenceBlock> blocks, EncodingMeta meta)
    : kind_(kind), partition_(std::move(partition)), blocks_(std::move(blocks)), meta_(std::move(meta)) {
  if (blocks_.size() != partition_.blocks()) throw InvalidArgument("one block per partition interval is required");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string where = "block " + std::to_string(l);
    if (b.nets.kind() != kind_) throw InvalidArgument(where + ": data kind differs from the model");
    if (b.nets.first_dim() != partition_.begin(l) || b.nets.end_dim() != partition_.end(l))
      throw InvalidArgument(where + ": dimensions differ from the partition");
    if (b.gate.size() != b.nets.components()) throw InvalidArgument(where + ": gate needs one class per component");
    for (const auto& c : b.gate) c.validate(partition_.begin(l));
    if (!b.gate.back().is_zero()) throw InvalidArgument(where + ": reference gate class must be zero");
  }
  if (kind_ == Kind::continuous && meta_.dims() != partition_.dims())
    throw DimensionError("encoding metadata does not match the model dimension");
}

SequenceFit fit_sequence(const Dataset& train, const Partition& partition, std::span<const BlockSpec> specs,
                         const SolverConfig& cfg, std::uint64_t seed, const EmOptions& opts) {
  const std::size_t L = partition.blocks();
  if (specs.size() != 1 && specs.size() != L) throw InvalidArgument("need one block spec, or one per block");
  const Matrix data = partition.to_model(train.values());
  const int workers = std::max(1, opts.workers);
  const int outer = static_cast<int>(std::min<std::size_t>(L, static_cast<std::size_t>(workers)));
  EmOptions inner = opts;
  inner.workers = std::max(1, workers / outer);

  std::vector<std::optional<detail::BlockResult>> results(L);
  parallel_for(L, outer, [&](std::size_t l) {
    const BlockSpec& spec = specs.size() == 1 ? specs[0] : specs[l];
    detail::BlockProblem pb;
    pb.data = &data;
    pb.kind = train.kind();
    pb.first = partition.begin(l);
    pb.count = partition.end(l) - partition.begin(l);
    pb.components = spec.components;
    pb.mode = spec.mode;
    pb.gated = l > 0;
    Eigen::MatrixXd init;
    if (spec.components > 1)
      init = fit_product_mixture(data.middleCols(static_cast<Eigen::Index>(pb.first), static_cast<Eigen::Index>(pb.count)),
                                 pb.kind, spec.components, derive_seed(seed, l))
                 .responsibilities;
    try {
      results[l] = detail::run_block_em(pb, cfg, init, inner);
    } catch (const Error& e) {
      throw TrainingError("block " + std::to_string(l) + ": " + e.what());
    }
  });

  std::vector<SequenceBlock> blocks;
  std::vector<EmTrace> traces;
  for (auto& r : results) {
    blocks.push_back(SequenceBlock{std::move(r->gate), std::move(r->nets)});
    traces.push_back(std::move(r->trace));
  }
  return SequenceFit{SequenceModel(train.kind(), partition, std::move(blocks), train.meta()), std::move(traces)};
}

namespace {

// Unnormalized log P(h_l = k, x_{I_l} | x_{<I_l}) for every block.
std::vector<std::vector<double>> joint_terms(const SequenceModel& model, std::span<const double> x) {
  const std::vector<double> z = model.partition().to_model(x);
  std::vector<std::vector<double>> out;
  out.reserve(model.blocks().size());
  for (const auto& b : model.blocks()) {
    const std::size_t K = b.nets.components();
    std::vector<double> gate(K), ll(K);
    for (std::size_t k = 0; k < K; ++k) gate[k] = b.gate[k].score(z);
    const double norm = log_sum_exp(gate);
    b.nets.component_logliks(z, ll);
    for (std::size_t k = 0; k < K; ++k) ll[k] += gate[k] - norm;
    out.push_back(std::move(ll));
  }
  return out;
}

}  // namespace

double loglik_sequence(const SequenceModel& model, std::span<const double> x) {
  double total = 0.0;
  for (const auto& terms : joint_terms(model, x)) total += log_sum_exp(terms);
  return total;
}

Eigen::VectorXd loglik_sequence(const SequenceModel& model, const Matrix& X, int workers) {
  const Matrix data = model.partition().to_model(X);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(data.rows());
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    const auto& b = model.blocks()[l];
    const Eigen::MatrixXd prior =
        gate_log_probs(data.leftCols(static_cast<Eigen::Index>(model.partition().begin(l))), b.gate);
    total += detail::posterior_rows(b.nets.component_logliks(data, workers), prior, nullptr);
  }
  return total;
}

std::vector<std::vector<double>> infer_posterior(const SequenceModel& model, std::span<const double> x) {
  auto terms = joint_terms(model, x);
  for (auto& t : terms) {
    const double norm = log_sum_exp(t);
    for (double& v : t) v = std::exp(v - norm);
  }
  return terms;
}

std::vector<double> sample_sequence(const SequenceModel& model, std::uint64_t seed) {
  Rng rng(seed);
  return sample_sequence(model, rng);
}

std::vector<double> sample_sequence(const SequenceModel& model, Rng& rng) {
  std::vector<double> z(model.dims(), 0.0);
  for (const auto& b : model.blocks()) {
    const std::size_t K = b.nets.components();
    std::vector<double> p(K);
    for (std::size_t k = 0; k < K; ++k) p[k] = b.gate[k].score(z);
    const double norm = log_sum_exp(p);
    for (double& v : p) v = std::exp(v - norm);
    b.nets.sample_into(rng.categorical(p), z, rng);
  }
  return model.partition().to_input(z);
}

}  // namespace sparn
