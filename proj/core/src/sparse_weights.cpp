#include "sparn/sparse_weights.hpp"

#include <cmath>
#include <string>

#include "sparn/error.hpp"

namespace sparn {

SparseWeights SparseWeights::from_dense(double intercept, std::span<const double> dense) {
  SparseWeights w;
  w.intercept = intercept;
  for (std::size_t j = 0; j < dense.size(); ++j)
    if (dense[j] != 0.0) w.entries.push_back({static_cast<std::uint32_t>(j), dense[j]});
  return w;
}

SparseWeights SparseWeights::from_dense(double intercept, const Eigen::VectorXd& dense) {
  return from_dense(intercept, std::span<const double>(dense.data(), static_cast<std::size_t>(dense.size())));
}

double SparseWeights::l1_norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += std::abs(e.value);
  return s;
}

void SparseWeights::accumulate_scores(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      Eigen::Ref<Eigen::VectorXd> out) const {
  out.array() += intercept;
  for (const auto& e : entries) out.noalias() += e.value * X.col(e.index);
}

Eigen::VectorXd SparseWeights::to_dense(std::size_t predictors) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(predictors));
  for (const auto& e : entries) v[e.index] = e.value;
  return v;
}

void SparseWeights::validate(std::size_t predictors) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].index >= predictors)
      throw InvalidArgument("weight index " + std::to_string(entries[i].index) + " out of range (" +
                            std::to_string(predictors) + " predictors)");
    if (i > 0 && entries[i].index <= entries[i - 1].index)
      throw InvalidArgument("weight indices must be strictly increasing");
    if (entries[i].value == 0.0 || !std::isfinite(entries[i].value))
      throw InvalidArgument("stored weights must be finite and nonzero");
  }
  if (!std::isfinite(intercept)) throw InvalidArgument("intercept must be finite");
}

SparseWeights operator+(const SparseWeights& a, const SparseWeights& b) {
  SparseWeights r;
  r.intercept = a.intercept + b.intercept;
  r.entries.reserve(a.entries.size() + b.entries.size());
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() || j < b.entries.size()) {
    if (j == b.entries.size() || (i < a.entries.size() && a.entries[i].index < b.entries[j].index)) {
      r.entries.push_back(a.entries[i++]);
    } else if (i == a.entries.size() || b.entries[j].index < a.entries[i].index) {
      r.entries.push_back(b.entries[j++]);
    } else {
      const double v = a.entries[i].value + b.entries[j].value;
      if (v != 0.0) r.entries.push_back({a.entries[i].index, v});
      ++i;
      ++j;
    }
  }
  return r;
}

}  // namespace sparn
