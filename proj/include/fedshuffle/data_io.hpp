#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "problem.hpp"
#include "rng.hpp"
#include "shuffle.hpp"

// Dataset ingestion: sparse text files in the index:value format, synthetic
// regression generators, and row-to-client partitioning.

namespace fedshuffle {

struct RawDataset {
  Mat features;
  Vec targets;
  std::string source;
};

/// Parse failure with a 1-based position. what() carries the full message.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int col, const std::string& detail)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(col) +
                           ": " + detail),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

namespace detail {

// Strict numeric parsing: the whole token must be consumed. A leading '+' is
// tolerated on floating-point fields since labels are often written that way.
inline bool parse_full_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), last, out);
  return ec == std::errc() && ptr == last;
}

inline bool parse_full_int(std::string_view tok, long long& out) {
  if (tok.empty()) return false;
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

/// Hard cap on feature indices. Rows are densified, so an absurd index would
/// otherwise turn into an absurd allocation.
constexpr int kMaxFeatureIndex = 100000;

/// Reads `<target> <index>:<value> ...` lines. Indices are 1-based and must
/// be strictly increasing within a row; '#' starts a comment; blank lines are
/// skipped. The feature dimension is the largest index seen unless
/// `dim_override` widens (never narrows) it.
inline RawDataset parse_libsvm(std::istream& in, std::optional<int> dim_override = std::nullopt) {
  if (dim_override && (*dim_override < 0 || *dim_override > kMaxFeatureIndex))
    throw std::invalid_argument("dimension override must lie in [0, " +
                                std::to_string(kMaxFeatureIndex) + "]");

  struct Row {
    double target;
    std::vector<std::pair<int, double>> entries;
  };
  std::vector<Row> rows;
  int max_index = 0;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    const std::string_view body = std::string_view(line).substr(0, hash);

    // Tokenize, remembering 1-based start columns.
    std::vector<std::pair<std::string_view, int>> tokens;
    std::size_t pos = 0;
    while (pos < body.size()) {
      if (body[pos] == ' ' || body[pos] == '\t') {
        ++pos;
        continue;
      }
      std::size_t end = pos;
      while (end < body.size() && body[end] != ' ' && body[end] != '\t') ++end;
      tokens.emplace_back(body.substr(pos, end - pos), static_cast<int>(pos) + 1);
      pos = end;
    }
    if (tokens.empty()) continue;

    Row row;
    if (!detail::parse_full_double(tokens[0].first, row.target))
      throw ParseError(lineno, tokens[0].second, "malformed target value");
    if (!std::isfinite(row.target))
      throw ParseError(lineno, tokens[0].second, "nonfinite target value");

    int prev_index = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto [tok, col] = tokens[t];
      const std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, col, "missing ':' separator in feature token");
      long long index = 0;
      if (!detail::parse_full_int(tok.substr(0, colon), index))
        throw ParseError(lineno, col, "malformed component index");
      if (index < 1) throw ParseError(lineno, col, "feature index must be at least 1");
      if (index <= prev_index)
        throw ParseError(lineno, col, "feature indices must be strictly increasing");
      if (index > kMaxFeatureIndex)
        throw ParseError(lineno, col,
                         "feature index " + std::to_string(index) +
                             " exceeds the supported maximum " + std::to_string(kMaxFeatureIndex));
      if (dim_override && index > *dim_override)
        throw ParseError(lineno, col,
                         "feature index " + std::to_string(index) +
                             " exceeds the declared dimension " + std::to_string(*dim_override));
      const int value_col = col + static_cast<int>(colon) + 1;
      double value = 0.0;
      if (!detail::parse_full_double(tok.substr(colon + 1), value))
        throw ParseError(lineno, value_col, "malformed feature value");
      if (!std::isfinite(value)) throw ParseError(lineno, value_col, "nonfinite feature value");
      row.entries.emplace_back(static_cast<int>(index), value);
      prev_index = static_cast<int>(index);
      max_index = std::max(max_index, static_cast<int>(index));
    }
    rows.push_back(std::move(row));
  }

  const int d = dim_override ? *dim_override : max_index;
  RawDataset out;
  out.features = Mat::Zero(static_cast<Eigen::Index>(rows.size()), d);
  out.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.targets[static_cast<Eigen::Index>(i)] = rows[i].target;
    for (const auto& [idx, val] : rows[i].entries)
      out.features(static_cast<Eigen::Index>(i), idx - 1) = val;
  }
  return out;
}

inline RawDataset load_libsvm_file(const std::string& path,
                                   std::optional<int> dim_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  RawDataset data = parse_libsvm(in, dim_override);
  data.source = path;
  return data;
}

/// Writes rows so that parse_libsvm reads the exact same values back
/// (17 significant digits); zero entries are omitted.
inline void serialize_libsvm(std::ostream& os, const Mat& features, const Vec& targets) {
  if (features.rows() != targets.size())
    throw std::invalid_argument("serialize: row/target count mismatch");
  char buf[40];
  const auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string_view(buf);
  };
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    os << fmt(targets[i]);
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      if (features(i, j) != 0.0) os << ' ' << (j + 1) << ':' << fmt(features(i, j));
    os << '\n';
  }
}

inline void serialize_libsvm(std::ostream& os, const RawDataset& data) {
  serialize_libsvm(os, data.features, data.targets);
}

enum class PartitionScheme { iid, sorted_by_target };

inline const char* scheme_name(PartitionScheme s) {
  return s == PartitionScheme::iid ? "iid" : "sorted_by_target";
}

inline std::optional<PartitionScheme> scheme_from_name(std::string_view name) {
  if (name == "iid") return PartitionScheme::iid;
  if (name == "sorted_by_target") return PartitionScheme::sorted_by_target;
  return std::nullopt;
}

struct PartitionResult {
  FederatedProblem problem;
  int dropped_rows;  // tail rows that did not fit an even split
};

/// Splits rows evenly across clients: a seeded shuffle for iid, ascending
/// target order for the pathological heterogeneous split. Rows past the last
/// even block are dropped. Unset lambda defaults to 1/n.
inline PartitionResult partition(const RawDataset& data, int clients, PartitionScheme scheme,
                                 std::uint64_t seed,
                                 std::optional<double> lambda = std::nullopt) {
  const int N = static_cast<int>(data.features.rows());
  if (clients < 1) throw std::invalid_argument("partition: need at least one client");
  if (N < clients)
    throw std::invalid_argument("partition: cannot split " + std::to_string(N) +
                                " rows across " + std::to_string(clients) + " clients");
  const int n = N / clients;
  const int d = static_cast<int>(data.features.cols());

  std::vector<int> order(N);
  if (scheme == PartitionScheme::iid) {
    auto rng = substream(seed, 0, 0, StreamPurpose::permutation);
    order = sample_permutation(rng, N);
  } else {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return data.targets[a] < data.targets[b]; });
  }

  std::vector<ClientData> parts(clients);
  for (int m = 0; m < clients; ++m) {
    parts[m].features.resize(n, d);
    parts[m].targets.resize(n);
    for (int i = 0; i < n; ++i) {
      const int src = order[m * n + i];
      parts[m].features.row(i) = data.features.row(src);
      parts[m].targets[i] = data.targets[src];
    }
  }
  return {FederatedProblem(std::move(parts), lambda ? *lambda : 1.0 / n), N - n * clients};
}

namespace detail {

inline void fill_normal(RngStream& rng, Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.next_normal();
}

inline Vec normal_vec(RngStream& rng, int d) {
  Vec v(d);
  for (int j = 0; j < d; ++j) v[j] = rng.next_normal();
  return v;
}

}  // namespace detail

/// Planted linear model with controllable heterogeneity. Every client shares
/// one feature matrix and a base weight vector; client m regresses against
/// w_m = w + heterogeneity * u_m plus Gaussian target noise. Zero noise and
/// zero heterogeneity give exactly identical clients. Client m's draws do not
/// depend on how many clients exist.
inline FederatedProblem generate_synthetic(std::uint64_t seed, int clients, int components,
                                           int dim, double noise, double heterogeneity,
                                           double lambda) {
  if (clients < 1 || components < 1 || dim < 1)
    throw std::invalid_argument("synthetic: clients, components and dimension must be positive");
  if (!(noise >= 0.0) || !(heterogeneity >= 0.0) || !std::isfinite(noise) ||
      !std::isfinite(heterogeneity))
    throw std::invalid_argument("synthetic: noise and heterogeneity must be nonnegative");

  Mat shared(components, dim);
  {
    auto rng = substream(seed, 0, 0, StreamPurpose::data);
    detail::fill_normal(rng, shared);
  }
  Vec base;
  {
    auto rng = substream(seed, 1, 0, StreamPurpose::data);
    base = detail::normal_vec(rng, dim);
  }

  std::vector<ClientData> parts(clients);
  for (int m = 0; m < clients; ++m) {
    auto urng = substream(seed, 2, m, StreamPurpose::data);
    auto nrng = substream(seed, 3, m, StreamPurpose::data);
    const Vec w = base + heterogeneity * detail::normal_vec(urng, dim);
    parts[m].features = shared;
    parts[m].targets = shared * w;
    for (int i = 0; i < components; ++i) parts[m].targets[i] += noise * nrng.next_normal();
  }
  return FederatedProblem(std::move(parts), lambda);
}

/// Unpartitioned variant: one planted weight vector, independent rows.
inline RawDataset generate_synthetic_raw(std::uint64_t seed, int rows, int dim, double noise) {
  if (rows < 1 || dim < 1)
    throw std::invalid_argument("synthetic: rows and dimension must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw std::invalid_argument("synthetic: noise must be nonnegative");

  RawDataset out;
  out.features.resize(rows, dim);
  {
    auto rng = substream(seed, 0, 0, StreamPurpose::data);
    detail::fill_normal(rng, out.features);
  }
  Vec w;
  {
    auto rng = substream(seed, 1, 0, StreamPurpose::data);
    w = detail::normal_vec(rng, dim);
  }
  out.targets = out.features * w;
  {
    auto rng = substream(seed, 3, 0, StreamPurpose::data);
    for (int i = 0; i < rows; ++i) out.targets[i] += noise * rng.next_normal();
  }
  out.source = "synthetic";
  return out;
}

}  // namespace fedshuffle
