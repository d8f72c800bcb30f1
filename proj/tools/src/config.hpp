#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparn/data.hpp"
#include "sparn/mixture.hpp"
#include "sparn/seqmix.hpp"

namespace sparn::app {

enum class ModelFamily { arn, mixture, sequence };

ModelFamily parse_family(std::string_view text);
std::string_view to_string(ModelFamily family);

/// Either explicit values or an automatic grid below the data's λ_max.
struct LambdaGrid {
  std::vector<double> values;  // empty: automatic
  std::size_t count = 30;
  double ratio = 1e-3;
};

/// "auto", "auto:COUNT", "auto:COUNT:RATIO" or a comma-separated list.
LambdaGrid parse_lambda_grid(std::string_view text);

/// Comma-separated grid points; each point is one K for every block or a
/// '/'-separated list of per-block K (sequence family only).
std::vector<std::vector<std::size_t>> parse_components_grid(std::string_view text);

/// Default K grid: {1,2,3,5,10,20,50,100,200,500,1000} capped at N/20
/// (untied) or N/5 (tied, auto). Never empty.
std::vector<std::vector<std::size_t>> default_components_grid(std::size_t samples, SharingMode mode);

/// "boundaries:0,10,20", "grid:ROWSxCOLS:TRxTC", or "blocks:L" (L equal
/// intervals, the last absorbing the remainder).
Partition parse_partition(std::string_view text, std::size_t dims);

struct ExperimentConfig {
  std::filesystem::path train, valid, test;
  Kind kind = Kind::binary;
  ModelFamily family = ModelFamily::arn;
  SharingMode mode = SharingMode::untied;
  LambdaGrid lambdas;
  std::optional<std::vector<std::vector<std::size_t>>> components;  // nullopt: default grid
  std::string partition;  // sequence family only
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out = "sparn-out";
  double intercept_scale = 10.0;
  int em_iterations = 100;

  void validate() const;
};

/// Flat key=value file: blank lines and '#' comments are ignored. Keys are the
/// long flag names without dashes.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Applies one key=value setting; throws InvalidArgument for unknown keys.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

}  // namespace sparn::app
