#pragma once

// Word-embedding matrices: loading, standardization and cross-dimensional
// correlation diagnostics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "relcomp/common.hpp"
#include "relcomp/error.hpp"

namespace relcomp {

enum class EmbeddingFormat { text_no_header, text_with_header };

inline EmbeddingFormat parse_embedding_format(std::string_view name) {
  if (name == "text-no-header" || name == "text") return EmbeddingFormat::text_no_header;
  if (name == "text-with-header" || name == "header") return EmbeddingFormat::text_with_header;
  throw InputError("unknown embedding format '" + std::string(name) + "'");
}

/// Vocabulary plus an m x d matrix of finite word vectors, one row per word.
/// Immutable once constructed.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::vector<std::string> vocab, RowMatrix vectors, bool standardized = false)
      : vocab_(std::move(vocab)), vectors_(std::move(vectors)), standardized_(standardized) {
    if (static_cast<Eigen::Index>(vocab_.size()) != vectors_.rows())
      throw DimensionError("vocabulary size " + std::to_string(vocab_.size()) +
                           " does not match row count " + std::to_string(vectors_.rows()));
    if (vectors_.cols() < 1) throw DimensionError("embedding dimensionality must be >= 1");
    if (!vectors_.allFinite()) throw InputError("embedding matrix contains non-finite values");
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      if (!index_.emplace(vocab_[i], i).second)
        throw InputError("duplicate word '" + vocab_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return vocab_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors_.cols()); }
  bool standardized() const noexcept { return standardized_; }

  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const RowMatrix& vectors() const noexcept { return vectors_; }

  std::optional<std::size_t> index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view word) const { return index_of(word).has_value(); }

  /// Row `i` as a column-vector view.
  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)).transpose(); }

  Vector lookup(std::string_view word) const {
    auto idx = index_of(word);
    if (!idx) throw MissingWordError(std::string(word));
    return row(*idx);
  }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  RowMatrix vectors_;
  bool standardized_;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses the text embedding format: optional `m d` header, then
/// `word v1 ... vd` per line. Blank lines are ignored.
inline EmbeddingMatrix parse_embeddings(std::istream& in, EmbeddingFormat format,
                                        const std::string& source = "<stream>") {
  std::vector<std::string> vocab;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::optional<std::size_t> expected_rows;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  bool header_pending = format == EmbeddingFormat::text_with_header;

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;

    if (header_pending) {
      header_pending = false;
      if (fields.size() != 2) throw ParseError(source, line_no, "header must be 'm d'");
      auto m = detail::parse_int<std::size_t>(fields[0]);
      auto d = detail::parse_int<std::size_t>(fields[1]);
      if (!m || !d || *d == 0) throw ParseError(source, line_no, "malformed header");
      expected_rows = *m;
      dim = *d;
      continue;
    }

    if (fields.size() < 2) throw ParseError(source, line_no, "expected a word followed by values");
    const std::size_t row_dim = fields.size() - 1;
    if (dim == 0) dim = row_dim;
    if (row_dim != dim)
      throw ParseError(source, line_no,
                       "dimensionality mismatch: expected " + std::to_string(dim) + " values, got " +
                           std::to_string(row_dim));

    std::string word(fields[0]);
    if (!seen.emplace(word, line_no).second)
      throw ParseError(source, line_no, "duplicate word '" + word + "'");
    for (std::size_t k = 1; k < fields.size(); ++k) {
      auto v = detail::parse_double(fields[k]);
      if (!v) throw ParseError(source, line_no, "malformed value '" + std::string(fields[k]) + "'");
      if (!std::isfinite(*v)) throw ParseError(source, line_no, "non-finite value");
      values.push_back(*v);
    }
    vocab.push_back(std::move(word));
  }

  if (header_pending) throw ParseError(source, line_no, "missing header");
  if (vocab.empty()) throw InputError(source + ": no embeddings found");
  if (expected_rows && *expected_rows != vocab.size())
    throw InputError(source + ": header declares " + std::to_string(*expected_rows) +
                     " rows but file has " + std::to_string(vocab.size()));

  RowMatrix vectors = Eigen::Map<const RowMatrix>(values.data(),
                                                  static_cast<Eigen::Index>(vocab.size()),
                                                  static_cast<Eigen::Index>(dim));
  return EmbeddingMatrix(std::move(vocab), std::move(vectors));
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embeddings file " + path.string());
  return parse_embeddings(in, format, path.string());
}

/// Per-dimension affine statistics; x_i <- (x_i - means_i) / stddevs_i.
struct StandardizationStats {
  Vector means;
  Vector stddevs;

  Vector inverse_sigma() const { return stddevs.cwiseInverse(); }
};

namespace detail {

inline void check_rows(const EmbeddingMatrix& e, std::span<const std::size_t> rows) {
  for (auto r : rows)
    if (r >= e.size()) throw InputError("row index " + std::to_string(r) + " out of range");
}

// sigma at or below this fraction of the column's magnitude counts as zero
inline constexpr double kZeroVarianceTolerance = 1e-12;

}  // namespace detail

/// Population mean and standard deviation per dimension over `rows`
/// (all rows when empty).
inline StandardizationStats fit_standardization(const EmbeddingMatrix& e,
                                                std::span<const std::size_t> rows = {}) {
  detail::check_rows(e, rows);
  const std::size_t m = rows.empty() ? e.size() : rows.size();
  if (m < 2) throw InputError("standardization needs at least 2 rows");
  const auto d = static_cast<Eigen::Index>(e.dim());
  const RowMatrix& x = e.vectors();

  auto row_at = [&](std::size_t i) {
    return static_cast<Eigen::Index>(rows.empty() ? i : rows[i]);
  };

  Vector mean = Vector::Zero(d);
  for (std::size_t i = 0; i < m; ++i) mean += x.row(row_at(i)).transpose();
  mean /= static_cast<double>(m);

  Vector var = Vector::Zero(d);
  Vector max_abs = Vector::Zero(d);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.row(row_at(i)).transpose();
    var += (r - mean).cwiseAbs2();
    max_abs = max_abs.cwiseMax(r.cwiseAbs());
  }
  var /= static_cast<double>(m);
  Vector sd = var.cwiseSqrt();

  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(sd[k] > detail::kZeroVarianceTolerance * max_abs[k]))
      throw ZeroVarianceError(static_cast<std::size_t>(k));
  }
  return {std::move(mean), std::move(sd)};
}

inline EmbeddingMatrix apply_standardization(const EmbeddingMatrix& e,
                                             const StandardizationStats& stats) {
  if (static_cast<std::size_t>(stats.means.size()) != e.dim())
    throw DimensionError("standardization stats do not match embedding dimensionality");
  RowMatrix out = (e.vectors().rowwise() - stats.means.transpose()).array().rowwise() /
                  stats.stddevs.transpose().array();
  return EmbeddingMatrix(e.vocab(), std::move(out), true);
}

/// Inverse of apply_standardization.
inline EmbeddingMatrix unstandardize(const EmbeddingMatrix& e, const StandardizationStats& stats) {
  if (static_cast<std::size_t>(stats.means.size()) != e.dim())
    throw DimensionError("standardization stats do not match embedding dimensionality");
  RowMatrix out = (e.vectors().array().rowwise() * stats.stddevs.transpose().array()).matrix();
  out.rowwise() += stats.means.transpose();
  return EmbeddingMatrix(e.vocab(), std::move(out), false);
}

struct Standardized {
  EmbeddingMatrix embeddings;
  StandardizationStats stats;
};

/// Standardizes every row with statistics fitted on `fit_rows` (default:
/// the whole vocabulary).
inline Standardized standardize(const EmbeddingMatrix& e,
                                std::span<const std::size_t> fit_rows = {}) {
  auto stats = fit_standardization(e, fit_rows);
  auto out = apply_standardization(e, stats);
  return {std::move(out), std::move(stats)};
}

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

struct CorrelationReport {
  Matrix matrix;
  double mean_abs_offdiag = 0.0;
  double sd_offdiag = 0.0;
  double mean_offdiag = 0.0;
  std::vector<HistogramBin> histogram;
};

/// Pearson correlation between every pair of embedding dimensions over all
/// words, with summary statistics and an equal-width histogram on [-1, 1]
/// of the d(d-1) off-diagonal entries.
inline CorrelationReport correlation_report(const EmbeddingMatrix& e, std::size_t bins = 100) {
  if (e.size() < 3) throw InputError("correlation needs at least 3 rows");
  if (bins == 0) throw InputError("histogram bin count must be positive");
  const auto d = static_cast<Eigen::Index>(e.dim());
  const auto m = static_cast<double>(e.size());

  Matrix z = e.vectors();
  Vector mean = z.colwise().sum().transpose() / m;
  z.rowwise() -= mean.transpose();
  for (Eigen::Index k = 0; k < d; ++k) {
    const double norm = z.col(k).norm();
    const double max_abs = e.vectors().col(k).cwiseAbs().maxCoeff();
    if (!(norm / std::sqrt(m) > detail::kZeroVarianceTolerance * max_abs))
      throw ZeroVarianceError(static_cast<std::size_t>(k));
    z.col(k) /= norm;
  }

  CorrelationReport report;
  Matrix c = z.transpose() * z;
  for (Eigen::Index i = 0; i < d; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double v = std::clamp(c(i, j), -1.0, 1.0);
      c(i, j) = v;
      c(j, i) = v;
    }
  }

  report.histogram.resize(bins);
  const double width = 2.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    report.histogram[b].lower = -1.0 + width * static_cast<double>(b);
    report.histogram[b].upper = b + 1 == bins ? 1.0 : -1.0 + width * static_cast<double>(b + 1);
  }

  const auto n_off = static_cast<double>(d * (d - 1));
  double sum = 0.0, sum_abs = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) continue;
      const double v = c(i, j);
      sum += v;
      sum_abs += std::abs(v);
      auto b = static_cast<std::size_t>(std::floor((v + 1.0) / width));
      ++report.histogram[std::min(b, bins - 1)].count;
    }
  }
  if (d > 1) {
    report.mean_offdiag = sum / n_off;
    report.mean_abs_offdiag = sum_abs / n_off;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (i != j) ss += (c(i, j) - report.mean_offdiag) * (c(i, j) - report.mean_offdiag);
    report.sd_offdiag = std::sqrt(ss / n_off);
  }
  report.matrix = std::move(c);
  return report;
}

inline nlohmann::json to_json(const CorrelationReport& r, bool include_matrix) {
  nlohmann::json j;
  j["d"] = r.matrix.rows();
  j["mean_abs_offdiag"] = r.mean_abs_offdiag;
  j["mean_offdiag"] = r.mean_offdiag;
  j["sd_offdiag"] = r.sd_offdiag;
  j["bins"] = r.histogram.size();
  if (include_matrix) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.matrix.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Eigen::Index k = 0; k < r.matrix.cols(); ++k) row.push_back(r.matrix(i, k));
      rows.push_back(std::move(row));
    }
    j["matrix"] = std::move(rows);
  }
  return j;
}

inline void write_histogram_csv(std::ostream& out, const CorrelationReport& r) {
  out << "bin_lower,bin_upper,count\n";
  char buf[64];
  for (const auto& b : r.histogram) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", b.lower, b.upper);
    out << buf << b.count << '\n';
  }
}

}  // namespace relcomp
