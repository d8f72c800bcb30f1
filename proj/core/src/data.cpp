#include "sparn/data.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sparn/error.hpp"

namespace sparn {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'R', 'N'};
constexpr std::size_t kHeaderBytes = 16;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::uint32_t read_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

Matrix parse_binary_matrix(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
    throw ParseError("missing SPRN header", 0);
  const std::uint32_t n = read_u32_le(bytes.data() + 4);
  const std::uint32_t d = read_u32_le(bytes.data() + 8);
  if (read_u32_le(bytes.data() + 12) != 0) throw ParseError("nonzero reserved header field", 0);
  if (n == 0) throw ParseError("no rows", 0);
  if (d == 0) throw ParseError("no columns", 0);
  const std::size_t payload = std::size_t{n} * d * sizeof(double);
  if (bytes.size() != kHeaderBytes + payload)
    throw ParseError("payload size does not match header", 0);
  Matrix m(n, d);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j, p += 8) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(p[b]);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

}  // namespace

std::string_view to_string(Kind kind) { return kind == Kind::binary ? "binary" : "continuous"; }

Kind parse_kind(std::string_view text) {
  if (text == "binary") return Kind::binary;
  if (text == "continuous") return Kind::continuous;
  throw InvalidArgument("unknown data kind '" + std::string(text) + "'");
}

double EncodingMeta::log_jacobian() const {
  double s = 0.0;
  for (std::size_t j = 0; j < stddev.size(); ++j)
    if (!constant[j]) s += std::log(stddev[j]);
  return s;
}

Dataset::Dataset(Matrix values, Kind kind, EncodingMeta meta, Role role)
    : values_(std::move(values)), kind_(kind), meta_(std::move(meta)), role_(role) {
  if (values_.rows() < 1 || values_.cols() < 1) throw InvalidArgument("dataset needs N >= 1 and D >= 1");
  if (kind_ == Kind::binary) {
    for (Eigen::Index j = 0; j < values_.cols(); ++j)
      for (Eigen::Index i = 0; i < values_.rows(); ++i)
        if (values_(i, j) != 1.0 && values_(i, j) != -1.0)
          throw EncodingError("binary dataset entry is not +-1", static_cast<std::size_t>(i),
                              static_cast<std::size_t>(j));
  } else if (meta_.dims() != static_cast<std::size_t>(values_.cols())) {
    throw DimensionError("encoding metadata does not match the number of columns");
  }
}

Matrix parse_text_matrix(std::string_view text) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    std::size_t count = 0;
    const char* p = line.data();
    const char* const e = line.data() + line.size();
    while (true) {
      while (p < e && is_space(*p)) ++p;
      if (p == e) break;
      double v = 0.0;
      if (*p == '+') ++p;  // from_chars rejects a leading '+'
      auto [next, ec] = std::from_chars(p, e, v);
      if (ec != std::errc() || (next < e && !is_space(*next)))
        throw ParseError("non-numeric token", line_no);
      values.push_back(v);
      ++count;
      p = next;
    }
    if (count == 0) continue;  // blank lines are ignored
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw ParseError("ragged row: expected " + std::to_string(cols) + " values, got " +
                           std::to_string(count),
                       line_no);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no rows", 0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
  return m;
}

Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  const std::string bytes = read_file(path);
  return format == MatrixFormat::dense_binary ? parse_binary_matrix(bytes) : parse_text_matrix(bytes);
}

Matrix load_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic.data(), 4) == 0)
    return parse_binary_matrix(bytes);
  return parse_text_matrix(bytes);
}

void save_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (format == MatrixFormat::dense_binary) {
    out.write(kMagic.data(), 4);
    write_u32_le(out, static_cast<std::uint32_t>(m.rows()));
    write_u32_le(out, static_cast<std::uint32_t>(m.cols()));
    write_u32_le(out, 0);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
        for (int b = 0; b < 8; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xff));
      }
    }
  } else {
    std::array<char, 32> buf;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(i, j));
        if (j) out.put(' ');
        out.write(buf.data(), end - buf.data());
      }
      out.put('\n');
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

Dataset encode_binary(const Matrix& raw, Role role) {
  Matrix enc(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double v = raw(i, j);
      if (v == 0.0)
        enc(i, j) = -1.0;
      else if (v == 1.0)
        enc(i, j) = 1.0;
      else
        throw EncodingError("entry outside {0,1}", static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  return Dataset(std::move(enc), Kind::binary, {}, role);
}

Matrix decode_binary(const Matrix& encoded) {
  return encoded.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
}

Dataset standardize(const Matrix& raw, const std::optional<EncodingMeta>& meta, Role role) {
  EncodingMeta m;
  if (meta) {
    if (meta->dims() != static_cast<std::size_t>(raw.cols()))
      throw DimensionError("encoding metadata has " + std::to_string(meta->dims()) + " columns, data has " +
                           std::to_string(raw.cols()));
    m = *meta;
  } else {
    const auto n = static_cast<double>(raw.rows());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double mean = raw.col(j).sum() / n;
      const double var = (raw.col(j).array() - mean).square().sum() / n;
      const double sd = std::sqrt(var);
      m.mean.push_back(mean);
      m.stddev.push_back(sd);
      m.constant.push_back(!(sd > 0.0));
    }
  }
  Matrix enc(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (m.constant[uj])
      enc.col(j).setZero();
    else
      enc.col(j) = (raw.col(j).array() - m.mean[uj]) / m.stddev[uj];
  }
  return Dataset(std::move(enc), Kind::continuous, std::move(m), role);
}

Matrix destandardize(const Matrix& encoded, const EncodingMeta& meta) {
  if (meta.dims() != static_cast<std::size_t>(encoded.cols()))
    throw DimensionError("encoding metadata does not match the number of columns");
  Matrix raw(encoded.rows(), encoded.cols());
  for (Eigen::Index j = 0; j < encoded.cols(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double sd = meta.constant[uj] ? 0.0 : meta.stddev[uj];
    raw.col(j) = encoded.col(j).array() * sd + meta.mean[uj];
  }
  return raw;
}

Dataset encode(const Matrix& raw, Kind kind, const EncodingMeta& meta, Role role) {
  if (kind == Kind::binary) return encode_binary(raw, role);
  return standardize(raw, meta, role);
}

}  // namespace sparn
