#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "report.hpp"
#include "sparn/serialize.hpp"

namespace sparn::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kTrainingFailure = 3 };

/// Reads and encodes one split. Continuous splits other than train reuse the
/// training metadata.
Dataset load_split(const std::filesystem::path& path, Kind kind, const EncodingMeta* train_meta, Role role);

/// Encodes raw input-ordered data for an already trained model.
Matrix encode_for(const AnyModel& model, const Matrix& raw);

/// Largest per-dimension λ_max of the single-network regressions.
double global_lambda_max(const Dataset& train, double intercept_scale, int workers);

struct GridPoint {
  double lambda = 0.0;
  std::vector<std::size_t> components;
  double valid_mean = 0.0;
  bool failed = false;
  std::string reason;
};

struct SelectionResult {
  AnyModel model;
  GridPoint chosen;
  std::vector<GridPoint> grid;
  Eigen::VectorXd test_loglik;
  Summary test;
  std::vector<std::string> warnings;
};

/// Trains every (λ, K) grid point, keeps the one with the best validation
/// mean (ties: larger λ, then smaller K) and scores it once on test.
SelectionResult select_train(const ExperimentConfig& cfg, const Dataset& train, const Dataset& valid,
                             const Dataset& test);

enum class Metric { hamming, euclidean };

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exact nearest training row of every sample; ties go to the lowest index.
/// Hamming requires {0,1} data.
std::vector<Neighbor> nearest(const Matrix& samples, const Matrix& train, Metric metric);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sparn::app
