#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "sparn/error.hpp"

namespace sparn::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto p = s.find(sep, start);
    parts.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) return parts;
    start = p + 1;
  }
}

template <class T>
T number(std::string_view s, std::string_view what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw InvalidArgument("bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

ModelFamily parse_family(std::string_view text) {
  if (text == "arn") return ModelFamily::arn;
  if (text == "mixture") return ModelFamily::mixture;
  if (text == "sequence") return ModelFamily::sequence;
  throw InvalidArgument("unknown model family '" + std::string(text) + "'");
}

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::arn:
      return "arn";
    case ModelFamily::mixture:
      return "mixture";
    case ModelFamily::sequence:
      return "sequence";
  }
  return "arn";
}

LambdaGrid parse_lambda_grid(std::string_view text) {
  LambdaGrid g;
  text = trim(text);
  if (text.starts_with("auto")) {
    const auto parts = split(text, ':');
    if (parts[0] != "auto" || parts.size() > 3) throw InvalidArgument("bad lambda grid '" + std::string(text) + "'");
    if (parts.size() > 1) g.count = number<std::size_t>(parts[1], "lambda grid size");
    if (parts.size() > 2) g.ratio = number<double>(parts[2], "lambda grid ratio");
    if (g.count < 1 || !(g.ratio > 0.0 && g.ratio <= 1.0)) throw InvalidArgument("lambda grid needs count >= 1, ratio in (0,1]");
    return g;
  }
  for (auto part : split(text, ',')) {
    const double v = number<double>(part, "lambda");
    if (!(v >= 0.0)) throw InvalidArgument("lambda values must be >= 0");
    g.values.push_back(v);
  }
  return g;
}

std::vector<std::vector<std::size_t>> parse_components_grid(std::string_view text) {
  std::vector<std::vector<std::size_t>> grid;
  for (auto point : split(trim(text), ',')) {
    std::vector<std::size_t> ks;
    for (auto k : split(point, '/')) {
      ks.push_back(number<std::size_t>(k, "component count"));
      if (ks.back() < 1) throw InvalidArgument("component counts must be >= 1");
    }
    grid.push_back(std::move(ks));
  }
  return grid;
}

std::vector<std::vector<std::size_t>> default_components_grid(std::size_t samples, SharingMode mode) {
  const std::size_t cap = std::max<std::size_t>(1, samples / (mode == SharingMode::untied ? 20 : 5));
  std::vector<std::vector<std::size_t>> grid;
  for (std::size_t k : {1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000})
    if (k <= cap) grid.push_back({k});
  return grid;
}

Partition parse_partition(std::string_view text, std::size_t dims) {
  text = trim(text);
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (kind == "boundaries") {
    std::vector<std::size_t> b;
    for (auto v : split(rest, ',')) b.push_back(number<std::size_t>(v, "boundary"));
    if (!b.empty() && b.front() != 0) b.insert(b.begin(), 0);
    if (!b.empty() && b.back() != dims) b.push_back(dims);
    return Partition::from_boundaries(std::move(b));
  }
  if (kind == "grid") {
    const auto parts = split(rest, ':');
    if (parts.size() != 2) throw InvalidArgument("grid partition looks like grid:RxC:rxc");
    const auto shape = split(parts[0], 'x'), tile = split(parts[1], 'x');
    if (shape.size() != 2 || tile.size() != 2) throw InvalidArgument("grid partition looks like grid:RxC:rxc");
    Partition p = Partition::grid(number<std::size_t>(shape[0], "rows"), number<std::size_t>(shape[1], "cols"),
                                  number<std::size_t>(tile[0], "tile rows"), number<std::size_t>(tile[1], "tile cols"));
    if (p.dims() != dims) throw DimensionError("grid partition size differs from the data dimension");
    return p;
  }
  if (kind == "blocks") {
    const auto L = number<std::size_t>(rest, "block count");
    if (L < 1 || L > dims) throw InvalidArgument("block count must be in [1, D]");
    std::vector<std::size_t> b{0};
    for (std::size_t l = 1; l < L; ++l) b.push_back(l * (dims / L));
    b.push_back(dims);
    return Partition::from_boundaries(std::move(b));
  }
  throw InvalidArgument("unknown partition '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  if (train.empty() || valid.empty() || test.empty()) throw InvalidArgument("train, valid and test paths are required");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (em_iterations < 1) throw InvalidArgument("em-iterations must be >= 1");
  if (components && components->empty()) throw InvalidArgument("components grid is empty");
  if (family == ModelFamily::sequence && partition.empty()) throw InvalidArgument("sequence models need --partition");
  if (components && family != ModelFamily::sequence)
    for (const auto& point : *components)
      if (point.size() != 1) throw InvalidArgument("per-block component lists need the sequence family");
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    kv[std::string(trim(s.substr(0, eq)))] = std::string(trim(s.substr(eq + 1)));
  }
  return kv;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "train") cfg.train = std::string(value);
  else if (key == "valid") cfg.valid = std::string(value);
  else if (key == "test") cfg.test = std::string(value);
  else if (key == "kind") cfg.kind = parse_kind(value);
  else if (key == "family") cfg.family = parse_family(value);
  else if (key == "mode") cfg.mode = parse_sharing_mode(value);
  else if (key == "lambda-grid") cfg.lambdas = parse_lambda_grid(value);
  else if (key == "components-grid") cfg.components = parse_components_grid(value);
  else if (key == "partition") cfg.partition = std::string(value);
  else if (key == "seed") cfg.seed = number<std::uint64_t>(value, "seed");
  else if (key == "threads") cfg.threads = number<int>(value, "thread count");
  else if (key == "out") cfg.out = std::string(value);
  else if (key == "intercept-scale") cfg.intercept_scale = number<double>(value, "intercept scale");
  else if (key == "em-iterations") cfg.em_iterations = number<int>(value, "EM iteration count");
  else throw InvalidArgument("unknown setting '" + std::string(key) + "'");
}

}  // namespace sparn::app
