#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include "pnm.hpp"
#include "sparn/error.hpp"
#include "sparn/parallel.hpp"

namespace sparn::app {

Dataset load_split(const std::filesystem::path& path, Kind kind, const EncodingMeta* train_meta, Role role) {
  const Matrix raw = load_matrix(path);
  if (kind == Kind::binary) return encode_binary(raw, role);
  if (train_meta) return standardize(raw, *train_meta, role);
  return standardize(raw, std::nullopt, role);
}

Matrix encode_for(const AnyModel& model, const Matrix& raw) {
  if (static_cast<std::size_t>(raw.cols()) != model_dims(model))
    throw DimensionError("data has " + std::to_string(raw.cols()) + " columns, model expects " +
                         std::to_string(model_dims(model)));
  if (model_kind(model) == Kind::binary) return encode_binary(raw, Role::test).values();
  return standardize(raw, model_meta(model), Role::test).values();
}

double global_lambda_max(const Dataset& train, double intercept_scale, int workers) {
  const Matrix& X = train.values();
  const auto D = static_cast<std::size_t>(X.cols());
  const std::vector<double> ones(static_cast<std::size_t>(X.rows()), 1.0);
  const ProblemFamily family = train.kind() == Kind::binary ? ProblemFamily::logistic : ProblemFamily::linear;
  std::vector<double> per_dim(D, 0.0);
  parallel_for(D, workers, [&](std::size_t d) {
    const auto di = static_cast<Eigen::Index>(d);
    per_dim[d] = lambda_max(X.leftCols(di), X.col(di), ones, family, intercept_scale, false);
  });
  return *std::max_element(per_dim.begin(), per_dim.end());
}

namespace {

std::vector<double> lambda_values(const ExperimentConfig& cfg, const Dataset& train) {
  std::vector<double> grid = cfg.lambdas.values;
  if (grid.empty()) {
    const double top = global_lambda_max(train, cfg.intercept_scale, cfg.threads);
    if (!(top > 0.0)) throw TrainingError("lambda_max is zero; give an explicit --lambda-grid");
    grid = lambda_grid(top, cfg.lambdas.count, cfg.lambdas.ratio);
  }
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

bool better(const GridPoint& a, const GridPoint& best) {
  if (a.valid_mean != best.valid_mean) return a.valid_mean > best.valid_mean;
  if (a.lambda != best.lambda) return a.lambda > best.lambda;
  return a.components < best.components;
}

GridPoint make_point(double lambda, std::vector<std::size_t> components) {
  GridPoint p;
  p.lambda = lambda;
  p.components = std::move(components);
  return p;
}

std::string describe(const std::vector<std::size_t>& ks) {
  std::string s;
  for (std::size_t i = 0; i < ks.size(); ++i) s += (i ? "/" : "") + std::to_string(ks[i]);
  return s;
}

}  // namespace

SelectionResult select_train(const ExperimentConfig& cfg, const Dataset& train, const Dataset& valid,
                             const Dataset& test) {
  cfg.validate();
  const std::vector<double> lambdas = lambda_values(cfg, train);
  std::vector<std::vector<std::size_t>> ks = cfg.components.value_or(
      cfg.family == ModelFamily::arn ? std::vector<std::vector<std::size_t>>{{1}}
                                     : default_components_grid(static_cast<std::size_t>(train.samples()), cfg.mode));
  if (cfg.family == ModelFamily::arn) ks = {{1}};
  std::optional<Partition> partition;
  if (cfg.family == ModelFamily::sequence) {
    partition = parse_partition(cfg.partition, static_cast<std::size_t>(train.dims()));
    for (const auto& point : ks)
      if (point.size() != 1 && point.size() != partition->blocks())
        throw InvalidArgument("per-block component list '" + describe(point) + "' does not match the partition");
  }

  SolverConfig base;
  base.intercept_scale = cfg.intercept_scale;
  EmOptions em;
  em.max_iterations = cfg.em_iterations;
  em.workers = cfg.threads;

  std::optional<SelectionResult> best;
  std::vector<GridPoint> grid;
  std::vector<std::string> warnings;

  const auto consider = [&](GridPoint point, AnyModel&& model) {
    const Eigen::VectorXd ll = model_loglik(model, valid.values(), cfg.threads);
    point.valid_mean = ll.mean();
    if (!std::isfinite(point.valid_mean)) {
      point.failed = true;
      point.reason = "non-finite validation log-likelihood";
    }
    grid.push_back(point);
    if (point.failed) return;
    if (!best || better(point, best->chosen)) best.emplace(SelectionResult{std::move(model), point, {}, {}, {}, {}});
  };
  const auto fail = [&](GridPoint point, const std::exception& e) {
    point.failed = true;
    point.reason = e.what();
    grid.push_back(std::move(point));
  };

  if (cfg.family == ModelFamily::arn) {
    // One warm-started path per dimension; a failing λ fails the whole path.
    try {
      auto nets = fit_arn_path(train, lambdas, base, cfg.threads, &warnings);
      for (std::size_t i = 0; i < lambdas.size(); ++i) consider(make_point(lambdas[i], {1}), std::move(nets[i]));
    } catch (const Error& e) {
      for (double l : lambdas) fail(make_point(l, {1}), e);
    }
  } else {
    for (const auto& point : ks) {
      // The product-mixture start depends only on K and the seed.
      std::optional<Eigen::MatrixXd> init;
      std::vector<std::string> init_notes;
      for (double lambda : lambdas) {
        SolverConfig sc = base;
        sc.lambda = lambda;
        try {
          if (cfg.family == ModelFamily::mixture) {
            if (!init) {
              init = init_product_mixture(train, point[0], cfg.seed, &init_notes);
              for (auto& n : init_notes) warnings.push_back("K " + describe(point) + ": " + n);
            }
            std::vector<std::string> notes;
            auto fit = em_fit(train, point[0], cfg.mode, sc, *init, em);
            for (auto& w : fit.trace.warnings) notes.push_back(std::move(w));
            for (auto& n : notes)
              warnings.push_back("lambda " + format_double(lambda) + " K " + describe(point) + ": " + n);
            consider(make_point(lambda, point), std::move(fit.model));
          } else {
            std::vector<BlockSpec> specs;
            for (std::size_t k : point) specs.push_back({k, cfg.mode});
            auto fit = fit_sequence(train, *partition, specs, sc, cfg.seed, em);
            for (std::size_t l = 0; l < fit.traces.size(); ++l)
              for (auto& w : fit.traces[l].warnings)
                warnings.push_back("lambda " + format_double(lambda) + " K " + describe(point) + " block " +
                                   std::to_string(l) + ": " + w);
            consider(make_point(lambda, point), std::move(fit.model));
          }
        } catch (const Error& e) {
          fail(make_point(lambda, point), e);
        }
      }
    }
  }

  if (!best) {
    std::string why = grid.empty() ? "empty grid" : grid.front().reason;
    throw TrainingError("every grid point failed (first: " + why + ")");
  }
  SelectionResult result = std::move(*best);
  result.grid = std::move(grid);
  result.warnings = std::move(warnings);
  result.test_loglik = model_loglik(result.model, test.values(), cfg.threads);
  result.test = summarize(result.test_loglik);
  return result;
}

std::vector<Neighbor> nearest(const Matrix& samples, const Matrix& train, Metric metric) {
  if (samples.cols() != train.cols()) throw DimensionError("samples and training data differ in dimension");
  if (train.rows() == 0) throw DimensionError("training data is empty");
  if (metric == Metric::hamming) {
    const auto binary = [](const Matrix& m) { return ((m.array() == 0.0) || (m.array() == 1.0)).all(); };
    if (!binary(samples) || !binary(train)) throw InvalidArgument("hamming distance needs {0,1} data");
  }
  std::vector<Neighbor> out(static_cast<std::size_t>(samples.rows()));
  const Eigen::VectorXd train_sq = train.rowwise().squaredNorm();
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    for (Eigen::Index n = 0; n < train.rows(); ++n) {
      double d;
      if (metric == Metric::hamming) {
        d = static_cast<double>((samples.row(s).array() != train.row(n).array()).count());
      } else {
        d = (samples.row(s) - train.row(n)).squaredNorm();
      }
      if (d < best.distance) best = {static_cast<std::size_t>(n), d};
    }
    if (metric == Metric::euclidean) best.distance = std::sqrt(best.distance);
    out[static_cast<std::size_t>(s)] = best;
  }
  return out;
}

namespace {

std::string numbered(std::string_view stem, std::size_t i, std::string_view ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%05zu", i);
  return std::string(stem) + buf + std::string(ext);
}

void write_rows(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<double> row_of(const Matrix& m, Eigen::Index i) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(i, j);
  return v;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const Dataset train = load_split(cfg.train, cfg.kind, nullptr, Role::train);
  const Dataset valid = load_split(cfg.valid, cfg.kind, &train.meta(), Role::valid);
  const Dataset test = load_split(cfg.test, cfg.kind, &train.meta(), Role::test);
  if (valid.dims() != train.dims() || test.dims() != train.dims())
    throw DimensionError("train, valid and test splits differ in dimension");

  SelectionResult r = select_train(cfg, train, valid, test);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::filesystem::create_directories(cfg.out);
  save_model(cfg.out / "model.sparn", r.model);
  save_values(cfg.out / "test_loglik.txt", r.test_loglik);

  KeyValueReport rep;
  rep.add("command", std::string("train"));
  rep.add("family", std::string(to_string(cfg.family)));
  rep.add("kind", std::string(to_string(cfg.kind)));
  rep.add("mode", std::string(to_string(cfg.mode)));
  rep.add("selected_lambda", r.chosen.lambda);
  rep.add("selected_components", describe(r.chosen.components));
  rep.add("valid_mean", r.chosen.valid_mean);
  rep.add("test_n", r.test.n);
  rep.add("test_mean", r.test.mean);
  rep.add("test_stderr", r.test.stderr_of_mean);
  if (cfg.kind == Kind::continuous) rep.add("log_jacobian", train.meta().log_jacobian());
  rep.add("wall_seconds", seconds);
  std::size_t failed = 0;
  for (const auto& g : r.grid) {
    failed += g.failed;
    rep.add("grid_point", "lambda=" + format_double(g.lambda) + " components=" + describe(g.components) +
                              (g.failed ? " failed=" + g.reason : " valid_mean=" + format_double(g.valid_mean)));
  }
  rep.add("grid_failed", failed);
  rep.add("warnings", r.warnings.size());
  for (const auto& w : r.warnings) rep.add("warning", w);
  rep.add("model", (cfg.out / "model.sparn").string());
  rep.save(cfg.out / "report.txt");
  rep.write(out);
  return kOk;
}

int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
             const std::filesystem::path& dump, int threads, std::ostream& out) {
  const AnyModel model = load_model(model_path);
  const Matrix X = encode_for(model, load_matrix(data_path));
  const Eigen::VectorXd ll = model_loglik(model, X, threads);
  const Summary s = summarize(ll);
  KeyValueReport rep;
  rep.add("command", std::string("eval"));
  rep.add("model_type", std::string(model_type(model)));
  rep.add("n", s.n);
  rep.add("mean", s.mean);
  rep.add("stderr", s.stderr_of_mean);
  if (model_kind(model) == Kind::continuous) rep.add("log_jacobian", model_meta(model).log_jacobian());
  if (!dump.empty()) {
    save_values(dump, ll);
    rep.add("dump", dump.string());
  }
  rep.write(out);
  return kOk;
}

int cmd_sample(const std::filesystem::path& model_path, std::size_t count, std::uint64_t seed,
               const std::filesystem::path& dir, const std::string& image, std::ostream& out) {
  const AnyModel model = load_model(model_path);
  const std::size_t D = model_dims(model);
  const bool binary = model_kind(model) == Kind::binary;
  ImageShape shape;
  if (!image.empty()) {
    shape = parse_shape(image);
    if (shape.pixels() != D) throw DimensionError("image shape does not match the model dimension");
  }
  Rng rng(seed);
  Matrix encoded(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(D));
  for (std::size_t i = 0; i < count; ++i) {
    const auto x = model_sample(model, rng);
    for (std::size_t j = 0; j < D; ++j) encoded(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
  }
  const Matrix raw = binary ? decode_binary(encoded) : destandardize(encoded, model_meta(model));
  std::filesystem::create_directories(dir);
  write_rows(dir / "samples.txt", raw);
  if (shape)
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = row_of(raw, static_cast<Eigen::Index>(i));
      write_pgm(dir / numbered("sample", i, ".pgm"), shape, to_gray(row, binary));
    }
  KeyValueReport rep;
  rep.add("command", std::string("sample"));
  rep.add("count", count);
  rep.add("seed", std::to_string(seed));
  rep.add("samples", (dir / "samples.txt").string());
  rep.add("images", shape ? count : std::size_t{0});
  rep.write(out);
  return kOk;
}

int cmd_nearest(const std::filesystem::path& samples_path, const std::filesystem::path& train_path, Metric metric,
                const std::filesystem::path& dir, const std::string& image, std::ostream& out) {
  const Matrix samples = load_matrix(samples_path);
  const Matrix train = load_matrix(train_path);
  const auto found = nearest(samples, train, metric);
  ImageShape shape;
  if (!image.empty()) {
    shape = parse_shape(image);
    if (shape.pixels() != static_cast<std::size_t>(train.cols()))
      throw DimensionError("image shape does not match the data dimension");
    const auto binary = [](const Matrix& m) { return ((m.array() == 0.0) || (m.array() == 1.0)).all(); };
    if (!binary(samples) || !binary(train)) throw InvalidArgument("symmetric-difference images need {0,1} data");
    std::filesystem::create_directories(dir);
  }
  KeyValueReport rep;
  rep.add("command", std::string("nearest"));
  rep.add("metric", std::string(metric == Metric::hamming ? "hamming" : "euclidean"));
  for (std::size_t i = 0; i < found.size(); ++i) {
    rep.add("neighbor", "sample=" + std::to_string(i) + " index=" + std::to_string(found[i].index) +
                            " distance=" + format_double(found[i].distance));
    if (shape) {
      const auto s = row_of(samples, static_cast<Eigen::Index>(i));
      const auto t = row_of(train, static_cast<Eigen::Index>(found[i].index));
      write_ppm(dir / numbered("diff", i, ".ppm"), shape, symmetric_difference(s, t));
      write_pgm(dir / numbered("sample", i, ".pgm"), shape, to_gray(s, true));
      write_pgm(dir / numbered("nearest", i, ".pgm"), shape, to_gray(t, true));
    }
  }
  rep.write(out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse autoregressive network density estimation"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path;
  std::map<std::string, std::string> flags;
  auto* train = app.add_subcommand("train", "select lambda and K on validation data, report test log-likelihood");
  train->add_option("--config", config_path, "key=value config file (flags override)");
  for (const char* key : {"train", "valid", "test", "kind", "family", "mode", "lambda-grid", "components-grid",
                          "partition", "seed", "threads", "out", "intercept-scale", "em-iterations"})
    train->add_option_function<std::string>(std::string("--") + key, [&flags, key](const std::string& v) { flags[key] = v; });

  std::string model_path, data_path, dump, sample_dir = "samples", image, samples_path, train_path, metric = "hamming";
  std::string nearest_dir = "nearest";
  std::size_t count = 16;
  std::uint64_t seed = 1;
  int threads = 1;
  auto* eval = app.add_subcommand("eval", "mean and standard error of per-example log-likelihood");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--dump", dump, "write per-example log-likelihoods here");
  eval->add_option("--threads", threads);

  auto* sample = app.add_subcommand("sample", "draw samples from a trained model");
  sample->add_option("--model", model_path)->required();
  sample->add_option("--count", count);
  sample->add_option("--seed", seed);
  sample->add_option("--out", sample_dir);
  sample->add_option("--image", image, "RxC shape for P5 images (raster order)");

  auto* near = app.add_subcommand("nearest", "closest training row for every sample");
  near->add_option("--samples", samples_path)->required();
  near->add_option("--train", train_path)->required();
  near->add_option("--metric", metric)->check(CLI::IsMember({"hamming", "euclidean"}));
  near->add_option("--out", nearest_dir);
  near->add_option("--image", image, "RxC shape for symmetric-difference P6 images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      if (!config_path.empty())
        for (const auto& [k, v] : read_config_file(config_path)) apply_setting(cfg, k, v);
      for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
      return cmd_train(cfg, out);
    }
    if (*eval) return cmd_eval(model_path, data_path, dump, threads, out);
    if (*sample) return cmd_sample(model_path, count, seed, sample_dir, image, out);
    return cmd_nearest(samples_path, train_path, metric == "hamming" ? Metric::hamming : Metric::euclidean,
                       nearest_dir, image, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return kTrainingFailure;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace sparn::app
