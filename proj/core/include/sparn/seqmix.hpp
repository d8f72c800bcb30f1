#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparn/mixture.hpp"

namespace sparn {

/// Split of the model dimensions into L contiguous intervals, plus the order
/// in which input columns become model dimensions.
class Partition {
 public:
  /// `boundaries` is 0 = d_0 < d_1 < ... < d_L = D. `order[i]` is the input
  /// column used as model dimension i; empty means the identity.
  static Partition from_boundaries(std::vector<std::size_t> boundaries, std::vector<std::size_t> order = {});

  /// Image of rows x cols pixels (raster input order) cut into tiles of
  /// tile_rows x tile_cols. Tiles are visited in raster order and pixels in
  /// raster order within each tile (block-major).
  static Partition grid(std::size_t rows, std::size_t cols, std::size_t tile_rows, std::size_t tile_cols);

  std::size_t dims() const { return boundaries_.back(); }
  std::size_t blocks() const { return boundaries_.size() - 1; }
  std::size_t begin(std::size_t block) const { return boundaries_[block]; }
  std::size_t end(std::size_t block) const { return boundaries_[block + 1]; }
  const std::vector<std::size_t>& boundaries() const { return boundaries_; }
  /// Empty for the identity order.
  const std::vector<std::size_t>& order() const { return order_; }

  /// Input-ordered columns to model order.
  Matrix to_model(const Matrix& input) const;
  std::vector<double> to_model(std::span<const double> input) const;
  /// Model-ordered values back to input order.
  std::vector<double> to_input(std::span<const double> model) const;

  bool operator==(const Partition&) const = default;

 private:
  std::vector<std::size_t> boundaries_;
  std::vector<std::size_t> order_;
};

/// One interval: a gate over the dimensions before the interval and K
/// component networks for the interval itself.
struct SequenceBlock {
  /// K classes; the last is the reference with all-zero parameters.
  std::vector<SparseWeights> gate;
  ComponentNetworks nets;
  bool operator==(const SequenceBlock&) const = default;
};

class SequenceModel {
 public:
  SequenceModel(Kind kind, Partition partition, std::vector<SequenceBlock> blocks, EncodingMeta meta);

  Kind kind() const { return kind_; }
  const Partition& partition() const { return partition_; }
  const std::vector<SequenceBlock>& blocks() const { return blocks_; }
  /// Metadata in input column order.
  const EncodingMeta& meta() const { return meta_; }
  std::size_t dims() const { return partition_.dims(); }

  bool operator==(const SequenceModel&) const = default;

 private:
  Kind kind_;
  Partition partition_;
  std::vector<SequenceBlock> blocks_;
  EncodingMeta meta_;
};

struct BlockSpec {
  std::size_t components = 1;
  SharingMode mode = SharingMode::untied;
};

struct SequenceFit {
  SequenceModel model;
  std::vector<EmTrace> traces;  // one per block
};

/// Trains every block independently. `specs` has one entry per block, or a
/// single entry applied to all. Block l is initialized with a product mixture
/// seeded by derive_seed(seed, l). The first block uses mixing weights; later
/// blocks refit their gate every EM iteration.
SequenceFit fit_sequence(const Dataset& train, const Partition& partition, std::span<const BlockSpec> specs,
                         const SolverConfig& cfg, std::uint64_t seed, const EmOptions& opts = {});

/// Exact log-likelihood of an input-ordered sample.
double loglik_sequence(const SequenceModel& model, std::span<const double> x);
Eigen::VectorXd loglik_sequence(const SequenceModel& model, const Matrix& X, int workers = 1);

/// P(h_l | x) for every block.
std::vector<std::vector<double>> infer_posterior(const SequenceModel& model, std::span<const double> x);

/// Ancestral sample in input order.
std::vector<double> sample_sequence(const SequenceModel& model, std::uint64_t seed);
std::vector<double> sample_sequence(const SequenceModel& model, Rng& rng);

}  // namespace sparn
