#include "sparn/serialize.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>

#include "sparn/error.hpp"

namespace sparn {

namespace {

constexpr std::string_view kMagic = "sparn-model";

// ---------------------------------------------------------------------------
// Writing

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& word(std::string_view w) {
    sep();
    out_ << w;
    return *this;
  }
  Writer& num(double v) {
    std::array<char, 32> buf;
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    sep();
    out_.write(buf.data(), end - buf.data());
    return *this;
  }
  Writer& num(std::size_t v) {
    sep();
    out_ << v;
    return *this;
  }
  Writer& weights(const SparseWeights& w) {
    num(w.intercept).num(w.nnz());
    for (const auto& e : w.entries) {
      std::array<char, 48> buf;
      char* p = std::to_chars(buf.data(), buf.data() + buf.size(), e.index).ptr;
      *p++ = ':';
      p = std::to_chars(p, buf.data() + buf.size(), e.value).ptr;
      sep();
      out_.write(buf.data(), p - buf.data());
    }
    return *this;
  }
  void end_line() {
    out_.put('\n');
    fresh_ = true;
  }

 private:
  void sep() {
    if (!fresh_) out_.put(' ');
    fresh_ = false;
  }
  std::ostream& out_;
  bool fresh_ = true;
};

void write_header(Writer& w, std::string_view type, Kind kind, std::size_t dims, const EncodingMeta& meta) {
  w.word(kMagic).num(static_cast<std::size_t>(kModelFormatVersion)).end_line();
  w.word("type").word(type).end_line();
  w.word("kind").word(to_string(kind)).end_line();
  w.word("dims").num(dims).end_line();
  if (meta.empty()) {
    w.word("encoding").word("none").end_line();
    return;
  }
  w.word("encoding").word("standardized").end_line();
  w.word("mean");
  for (double v : meta.mean) w.num(v);
  w.end_line();
  w.word("std");
  for (double v : meta.stddev) w.num(v);
  w.end_line();
  w.word("constant");
  for (bool c : meta.constant) w.num(static_cast<std::size_t>(c));
  w.end_line();
}

void write_networks(Writer& w, const ComponentNetworks& nets) {
  w.word("networks").word(to_string(nets.mode())).num(nets.components()).num(nets.first_dim()).num(nets.count());
  w.end_line();
  for (std::size_t i = 0; i < nets.count(); ++i) {
    const auto& p = nets.dims()[i];
    w.word("dim").num(nets.first_dim() + i).end_line();
    w.word("shared").weights(p.shared).end_line();
    for (std::size_t k = 0; k < nets.components(); ++k) w.word("component").num(k).weights(p.components[k]).end_line();
    if (nets.kind() == Kind::continuous) {
      w.word("sigma");
      for (double s : p.sigma) w.num(s);
      w.end_line();
    }
  }
}

void write_arn(Writer& w, const AutoregressiveNet& m) {
  write_header(w, "arn", m.kind(), m.dims(), m.meta());
  for (std::size_t d = 0; d < m.dims(); ++d) {
    const auto& c = m.conditionals()[d];
    w.word("cond").num(d).weights(c.weights);
    if (m.kind() == Kind::continuous) w.word("sigma").num(c.sigma);
    w.end_line();
  }
}

void write_mixture(Writer& w, const MixtureModel& m) {
  write_header(w, "mixture", m.kind(), m.dims(), m.meta());
  w.word("mixing");
  for (double p : m.mixing()) w.num(p);
  w.end_line();
  write_networks(w, m.nets());
}

void write_sequence(Writer& w, const SequenceModel& m) {
  write_header(w, "sequence", m.kind(), m.dims(), m.meta());
  w.word("order");
  if (m.partition().order().empty()) w.word("identity");
  for (std::size_t c : m.partition().order()) w.num(c);
  w.end_line();
  w.word("boundaries");
  for (std::size_t b : m.partition().boundaries()) w.num(b);
  w.end_line();
  for (std::size_t l = 0; l < m.blocks().size(); ++l) {
    const auto& b = m.blocks()[l];
    w.word("block").num(l).end_line();
    for (std::size_t k = 0; k < b.gate.size(); ++k) w.word("gate").num(k).weights(b.gate[k]).end_line();
    write_networks(w, b.nets);
  }
}

// ---------------------------------------------------------------------------
// Reading

class Reader {
 public:
  explicit Reader(std::string text) : text_(std::move(text)) {}

  /// Tokens of the next non-blank line; fails at end of input.
  std::vector<std::string_view> next() {
    last_pos_ = pos_;
    last_line_ = line_;
    while (pos_ < text_.size()) {
      const std::size_t nl = text_.find('\n', pos_);
      const std::size_t stop = nl == std::string::npos ? text_.size() : nl;
      std::string_view line(text_.data() + pos_, stop - pos_);
      pos_ = stop + 1;
      ++line_;
      std::vector<std::string_view> tokens;
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_space(line[j])) ++j;
        if (j > i) tokens.push_back(line.substr(i, j - i));
        i = j;
      }
      if (!tokens.empty()) return tokens;
    }
    fail("unexpected end of model file");
  }

  /// Next line, which must start with `keyword` and have at least `min` tokens.
  std::vector<std::string_view> expect(std::string_view keyword, std::size_t min = 1) {
    auto t = next();
    if (t.front() != keyword) fail("expected '" + std::string(keyword) + "', found '" + std::string(t.front()) + "'");
    if (t.size() < min) fail("too few fields on '" + std::string(keyword) + "' line");
    return t;
  }

  double real(std::string_view s) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      fail("bad number '" + std::string(s) + "'");
    return v;
  }

  std::size_t count(std::string_view s) const {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad count '" + std::string(s) + "'");
    return v;
  }

  /// Parses "<intercept> <nnz> i:v ..." starting at token `at`; returns the
  /// index one past the weights.
  std::size_t weights(const std::vector<std::string_view>& t, std::size_t at, SparseWeights& w) const {
    if (t.size() < at + 2) fail("truncated weights");
    w.intercept = real(t[at]);
    const std::size_t nnz = count(t[at + 1]);
    if (t.size() < at + 2 + nnz) fail("fewer weight entries than declared");
    w.entries.clear();
    w.entries.reserve(nnz);
    for (std::size_t e = 0; e < nnz; ++e) {
      const std::string_view tok = t[at + 2 + e];
      const std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) fail("weight entry without ':'");
      const std::size_t index = count(tok.substr(0, colon));
      if (index > std::numeric_limits<std::uint32_t>::max()) fail("weight index out of range");
      w.entries.push_back({static_cast<std::uint32_t>(index), real(tok.substr(colon + 1))});
    }
    return at + 2 + nnz;
  }

  void exact(const std::vector<std::string_view>& t, std::size_t n) const {
    if (t.size() != n) fail("wrong number of fields on '" + std::string(t.front()) + "' line");
  }

  /// Steps back over the line returned by the last next().
  void unread() {
    pos_ = last_pos_;
    line_ = last_line_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_); }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
  std::size_t last_pos_ = 0;
  std::size_t last_line_ = 0;
};

struct Header {
  std::string type;
  Kind kind;
  std::size_t dims;
  EncodingMeta meta;
};

Header read_header(Reader& r) {
  auto t = r.next();
  if (t.front() != kMagic) r.fail("not a sparn model file");
  r.exact(t, 2);
  if (r.count(t[1]) != static_cast<std::size_t>(kModelFormatVersion))
    throw FormatError("unsupported model format version " + std::string(t[1]));
  Header h;
  t = r.expect("type", 2);
  h.type = t[1];
  t = r.expect("kind", 2);
  try {
    h.kind = parse_kind(t[1]);
  } catch (const Error&) {
    r.fail("unknown data kind '" + std::string(t[1]) + "'");
  }
  h.dims = r.count(r.expect("dims", 2)[1]);
  if (h.dims == 0) r.fail("model dimension must be positive");
  t = r.expect("encoding", 2);
  if (t[1] == "standardized") {
    auto mean = r.expect("mean");
    auto sd = r.expect("std");
    auto constant = r.expect("constant");
    r.exact(mean, h.dims + 1);
    r.exact(sd, h.dims + 1);
    r.exact(constant, h.dims + 1);
    for (std::size_t j = 0; j < h.dims; ++j) {
      h.meta.mean.push_back(r.real(mean[j + 1]));
      h.meta.stddev.push_back(r.real(sd[j + 1]));
      const std::size_t c = r.count(constant[j + 1]);
      if (c > 1) r.fail("constant flags are 0 or 1");
      h.meta.constant.push_back(c == 1);
    }
  } else if (t[1] != "none") {
    r.fail("unknown encoding '" + std::string(t[1]) + "'");
  }
  return h;
}

ComponentNetworks read_networks(Reader& r, Kind kind) {
  auto t = r.expect("networks");
  r.exact(t, 5);
  SharingMode mode;
  try {
    mode = parse_sharing_mode(t[1]);
  } catch (const Error&) {
    r.fail("unknown sharing mode '" + std::string(t[1]) + "'");
  }
  const std::size_t K = r.count(t[2]), first = r.count(t[3]), count = r.count(t[4]);
  if (K == 0 || count == 0) r.fail("networks need K >= 1 and at least one dimension");
  std::vector<DimensionParams> dims(count);
  for (std::size_t i = 0; i < count; ++i) {
    t = r.expect("dim");
    r.exact(t, 2);
    if (r.count(t[1]) != first + i) r.fail("dimensions out of order");
    auto& p = dims[i];
    t = r.expect("shared");
    r.exact(t, r.weights(t, 1, p.shared));
    p.components.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      t = r.expect("component", 2);
      if (r.count(t[1]) != k) r.fail("components out of order");
      r.exact(t, r.weights(t, 2, p.components[k]));
    }
    if (kind == Kind::continuous) {
      t = r.expect("sigma");
      r.exact(t, K + 1);
      for (std::size_t k = 0; k < K; ++k) p.sigma.push_back(r.real(t[k + 1]));
    }
  }
  try {
    return ComponentNetworks(kind, mode, K, first, std::move(dims));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

template <class Build>
auto checked(Reader& r, Build&& build) {
  try {
    return build();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

AutoregressiveNet read_arn(Reader& r, Header& h) {
  std::vector<Conditional> conds(h.dims);
  for (std::size_t d = 0; d < h.dims; ++d) {
    auto t = r.expect("cond", 2);
    if (r.count(t[1]) != d) r.fail("conditionals out of order");
    std::size_t at = r.weights(t, 2, conds[d].weights);
    if (h.kind == Kind::continuous) {
      if (t.size() != at + 2 || t[at] != "sigma") r.fail("continuous conditional without sigma");
      conds[d].sigma = r.real(t[at + 1]);
      at += 2;
    }
    r.exact(t, at);
  }
  return checked(r, [&] { return AutoregressiveNet(h.kind, std::move(conds), std::move(h.meta)); });
}

MixtureModel read_mixture(Reader& r, Header& h) {
  auto t = r.expect("mixing", 2);
  std::vector<double> mixing;
  for (std::size_t k = 1; k < t.size(); ++k) mixing.push_back(r.real(t[k]));
  ComponentNetworks nets = read_networks(r, h.kind);
  if (nets.count() != h.dims) r.fail("mixture networks do not cover every dimension");
  return checked(r, [&] { return MixtureModel(std::move(nets), std::move(mixing), std::move(h.meta)); });
}

SequenceModel read_sequence(Reader& r, Header& h) {
  auto t = r.expect("order", 2);
  std::vector<std::size_t> order;
  if (!(t.size() == 2 && t[1] == "identity")) {
    r.exact(t, h.dims + 1);
    for (std::size_t i = 1; i < t.size(); ++i) order.push_back(r.count(t[i]));
  }
  t = r.expect("boundaries", 3);
  std::vector<std::size_t> bounds;
  for (std::size_t i = 1; i < t.size(); ++i) bounds.push_back(r.count(t[i]));
  if (bounds.back() != h.dims) r.fail("partition does not cover every dimension");
  Partition partition = checked(r, [&] { return Partition::from_boundaries(std::move(bounds), std::move(order)); });
  std::vector<SequenceBlock> blocks;
  for (std::size_t l = 0; l < partition.blocks(); ++l) {
    t = r.expect("block");
    r.exact(t, 2);
    if (r.count(t[1]) != l) r.fail("blocks out of order");
    std::vector<SparseWeights> gate;
    // Gate lines come first; their count is the block's K.
    for (;;) {
      t = r.next();
      if (t.front() != "gate") break;
      if (t.size() < 2 || r.count(t[1]) != gate.size()) r.fail("gate classes out of order");
      gate.emplace_back();
      r.exact(t, r.weights(t, 2, gate.back()));
    }
    if (t.front() != "networks") r.fail("expected 'networks' after gate lines");
    r.unread();
    ComponentNetworks nets = read_networks(r, h.kind);
    blocks.push_back(SequenceBlock{std::move(gate), std::move(nets)});
  }
  return checked(r, [&] {
    return SequenceModel(h.kind, std::move(partition), std::move(blocks), std::move(h.meta));
  });
}

}  // namespace

void write_model(std::ostream& out, const AnyModel& model) {
  Writer w(out);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AutoregressiveNet>) write_arn(w, m);
        else if constexpr (std::is_same_v<T, MixtureModel>) write_mixture(w, m);
        else write_sequence(w, m);
      },
      model);
  w.word("end").end_line();
}

std::string to_text(const AnyModel& model) {
  std::ostringstream out;
  write_model(out, model);
  return std::move(out).str();
}

AnyModel read_model(std::istream& in) {
  return from_text(std::string(std::istreambuf_iterator<char>(in), {}));
}

AnyModel from_text(std::string_view text) {
  Reader r{std::string(text)};
  Header h = read_header(r);
  AnyModel model = [&]() -> AnyModel {
    if (h.type == "arn") return read_arn(r, h);
    if (h.type == "mixture") return read_mixture(r, h);
    if (h.type == "sequence") return read_sequence(r, h);
    throw FormatError("unknown model type '" + h.type + "'");
  }();
  auto t = r.expect("end");
  r.exact(t, 1);
  if (model_kind(model) != h.kind || model_dims(model) != h.dims) r.fail("header does not match the model body");
  return model;
}

void save_model(const std::filesystem::path& path, const AnyModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_model(out, model);
  if (!out) throw Error("write failed: " + path.string());
}

AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model: " + path.string());
  return read_model(in);
}

std::string_view model_type(const AnyModel& model) {
  switch (model.index()) {
    case 0:
      return "arn";
    case 1:
      return "mixture";
    default:
      return "sequence";
  }
}

Kind model_kind(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.kind(); }, model);
}

std::size_t model_dims(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.dims(); }, model);
}

const EncodingMeta& model_meta(const AnyModel& model) {
  return std::visit([](const auto& m) -> const EncodingMeta& { return m.meta(); }, model);
}

Eigen::VectorXd model_loglik(const AnyModel& model, const Matrix& X, int workers) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AutoregressiveNet>) return loglik_arn(m, X, workers);
        else if constexpr (std::is_same_v<T, MixtureModel>) return loglik_mixture(m, X, workers);
        else return loglik_sequence(m, X, workers);
      },
      model);
}

std::vector<double> model_sample(const AnyModel& model, Rng& rng) {
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AutoregressiveNet>) return sample_arn(m, rng);
        else if constexpr (std::is_same_v<T, MixtureModel>) return sample_mixture(m, rng);
        else return sample_sequence(m, rng);
      },
      model);
}

}  // namespace sparn
