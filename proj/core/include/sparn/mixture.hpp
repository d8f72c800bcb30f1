#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparn/arn.hpp"

namespace sparn {

enum class SharingMode { untied, tied, automatic };

/// "untied", "tied" or "auto".
std::string_view to_string(SharingMode mode);
SharingMode parse_sharing_mode(std::string_view text);

/// Parameters of one dimension across K components. The effective weights of
/// component k are shared + components[k]:
///   untied: shared is zero, components are full conditionals;
///   tied:   shared holds dependency weights only, components are intercepts;
///   auto:   shared is the global block, components are the deviations.
/// `sigma` has one entry per component (continuous data only).
struct DimensionParams {
  SparseWeights shared;
  std::vector<SparseWeights> components;
  std::vector<double> sigma;
  bool operator==(const DimensionParams&) const = default;
};

/// K autoregressive conditionals for a contiguous run of dimensions
/// [first_dim, first_dim + count). Conditionals may use every predictor
/// before their own dimension, including ones outside the run.
class ComponentNetworks {
 public:
  ComponentNetworks(Kind kind, SharingMode mode, std::size_t components, std::size_t first_dim,
                    std::vector<DimensionParams> dims);

  Kind kind() const { return kind_; }
  SharingMode mode() const { return mode_; }
  std::size_t components() const { return components_; }
  std::size_t first_dim() const { return first_; }
  std::size_t count() const { return dims_.size(); }
  std::size_t end_dim() const { return first_ + dims_.size(); }
  const std::vector<DimensionParams>& dims() const { return dims_; }

  /// Assembled conditional of block dimension i under component k.
  const Conditional& effective(std::size_t i, std::size_t k) const { return effective_[i * components_ + k]; }

  /// Stored (not effective) L1 penalty: λ₀ on intercepts, λ on dependency weights.
  double penalty(const SolverConfig& cfg) const;
  std::size_t nonzeros() const;

  /// Per-component log-likelihood of the run's dimensions. `x` holds at least
  /// end_dim() encoded values.
  void component_logliks(std::span<const double> x, std::span<double> out) const;
  /// N x K version over the rows of X.
  Eigen::MatrixXd component_logliks(const Matrix& X, int workers = 1) const;

  /// Draws the run's dimensions of `x` in order under component k.
  void sample_into(std::size_t k, std::span<double> x, Rng& rng) const;

  bool operator==(const ComponentNetworks& o) const {
    return kind_ == o.kind_ && mode_ == o.mode_ && components_ == o.components_ && first_ == o.first_ &&
           dims_ == o.dims_;
  }

 private:
  Kind kind_;
  SharingMode mode_;
  std::size_t components_;
  std::size_t first_;
  std::vector<DimensionParams> dims_;
  std::vector<Conditional> effective_;
};

class MixtureModel {
 public:
  /// Requires first_dim == 0, mixing of length K with positive entries
  /// summing to 1 (1e-12).
  MixtureModel(ComponentNetworks nets, std::vector<double> mixing, EncodingMeta meta);

  const ComponentNetworks& nets() const { return nets_; }
  const std::vector<double>& mixing() const { return mixing_; }
  const EncodingMeta& meta() const { return meta_; }
  Kind kind() const { return nets_.kind(); }
  SharingMode mode() const { return nets_.mode(); }
  std::size_t components() const { return nets_.components(); }
  std::size_t dims() const { return nets_.count(); }

  bool operator==(const MixtureModel&) const = default;

 private:
  ComponentNetworks nets_;
  std::vector<double> mixing_;
  EncodingMeta meta_;
};

struct EmOptions {
  int max_iterations = 100;
  /// Stop once the mean penalized train log-likelihood improves by less.
  double tolerance = 1e-5;
  bool stop_early = true;
  int workers = 1;
};

struct EmTrace {
  /// Mean penalized train log-likelihood after each iteration.
  std::vector<double> objective;
  /// Iterations after which a collapsed component was reseeded.
  std::vector<int> reseeds;
  std::vector<std::string> warnings;
  bool converged = false;
};

struct MixtureFit {
  MixtureModel model;
  EmTrace trace;
};

/// Responsibility floor applied before renormalization.
inline constexpr double kResponsibilityFloor = 1e-12;

/// Mixture of product distributions (Bernoulli rates or diagonal normals).
struct ProductMixtureFit {
  Eigen::MatrixXd responsibilities;
  Eigen::VectorXd mixing;
  /// Total log-likelihood of the data under the final parameters.
  double loglik = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// EM on a product mixture from a seeded random responsibility start.
ProductMixtureFit fit_product_mixture(const Eigen::Ref<const Matrix>& values, Kind kind, std::size_t K,
                                      std::uint64_t seed);

/// Responsibilities of fit_product_mixture on the training split.
Eigen::MatrixXd init_product_mixture(const Dataset& train, std::size_t K, std::uint64_t seed,
                                     std::vector<std::string>* warnings = nullptr);

/// EM for a K-component mixture of sparse networks from initial
/// responsibilities (N x K). λ is fixed for the whole run.
MixtureFit em_fit(const Dataset& train, std::size_t K, SharingMode mode, const SolverConfig& cfg,
                  const Eigen::MatrixXd& init, const EmOptions& opts = {});

double loglik_mixture(const MixtureModel& model, std::span<const double> x);
Eigen::VectorXd loglik_mixture(const MixtureModel& model, const Matrix& X, int workers = 1);

std::vector<double> sample_mixture(const MixtureModel& model, std::uint64_t seed);
std::vector<double> sample_mixture(const MixtureModel& model, Rng& rng);

}  // namespace sparn
