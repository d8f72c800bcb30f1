#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "sparn/arn.hpp"
#include "sparn/mixture.hpp"
#include "sparn/seqmix.hpp"

namespace sparn {

using AnyModel = std::variant<AutoregressiveNet, MixtureModel, SequenceModel>;

/// Current version of the text model format.
inline constexpr int kModelFormatVersion = 1;

/// Versioned line-oriented text. Floats use the shortest representation that
/// reads back to the same double, so a save/load round trip is bit-exact.
void write_model(std::ostream& out, const AnyModel& model);
std::string to_text(const AnyModel& model);

/// Throws ParseError (with line number) on malformed input and FormatError on
/// an unsupported version or model type.
AnyModel read_model(std::istream& in);
AnyModel from_text(std::string_view text);

void save_model(const std::filesystem::path& path, const AnyModel& model);
AnyModel load_model(const std::filesystem::path& path);

/// "arn", "mixture" or "sequence".
std::string_view model_type(const AnyModel& model);
Kind model_kind(const AnyModel& model);
std::size_t model_dims(const AnyModel& model);
const EncodingMeta& model_meta(const AnyModel& model);

/// Per-row log-likelihoods of encoded, input-ordered data.
Eigen::VectorXd model_loglik(const AnyModel& model, const Matrix& X, int workers = 1);
std::vector<double> model_sample(const AnyModel& model, Rng& rng);

}  // namespace sparn
