#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fbfs {

// Errors -------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data or schema (row/column are 1-based where known).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The acquisition pool cannot serve a requested batch.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::size_t step, std::size_t requested, std::size_t remaining)
      : Error("budget exceeded at step " + std::to_string(step) + ": requested " +
              std::to_string(requested) + " instances, " + std::to_string(remaining) +
              " remain in the acquisition pool"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// FeatureSet ---------------------------------------------------------------

/// Set of 0-based feature indices kept in ascending order.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::initializer_list<std::size_t> idx) : idx_(idx) { normalize(); }
  explicit FeatureSet(std::vector<std::size_t> idx) : idx_(std::move(idx)) { normalize(); }

  static FeatureSet all(std::size_t d) {
    FeatureSet s;
    s.idx_.resize(d);
    for (std::size_t i = 0; i < d; ++i) s.idx_[i] = i;
    return s;
  }

  bool insert(std::size_t f) {
    auto it = std::lower_bound(idx_.begin(), idx_.end(), f);
    if (it != idx_.end() && *it == f) return false;
    idx_.insert(it, f);
    return true;
  }

  bool contains(std::size_t f) const {
    return std::binary_search(idx_.begin(), idx_.end(), f);
  }

  bool is_subset_of(const FeatureSet& other) const {
    return std::includes(other.idx_.begin(), other.idx_.end(), idx_.begin(), idx_.end());
  }

  /// Position of `f` within the ascending order, if present.
  std::optional<std::size_t> position_of(std::size_t f) const {
    auto it = std::lower_bound(idx_.begin(), idx_.end(), f);
    if (it == idx_.end() || *it != f) return std::nullopt;
    return static_cast<std::size_t>(it - idx_.begin());
  }

  FeatureSet with(std::size_t f) const {
    FeatureSet s = *this;
    s.insert(f);
    return s;
  }

  /// Complement within {0..d-1}.
  FeatureSet complement(std::size_t d) const {
    FeatureSet s;
    for (std::size_t i = 0; i < d; ++i)
      if (!contains(i)) s.idx_.push_back(i);
    return s;
  }

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  std::size_t operator[](std::size_t i) const { return idx_[i]; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }
  const std::vector<std::size_t>& indices() const noexcept { return idx_; }

  std::size_t max_index() const { return idx_.empty() ? 0 : idx_.back(); }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
  friend auto operator<=>(const FeatureSet& a, const FeatureSet& b) { return a.idx_ <=> b.idx_; }

  /// "0;3;7" style rendering used in logs and CSV files.
  std::string to_string(char sep = ';') const {
    std::string out;
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      if (i) out += sep;
      out += std::to_string(idx_[i]);
    }
    return out;
  }

 private:
  void normalize() {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
  }

  std::vector<std::size_t> idx_;
};

using Labels = std::vector<std::uint8_t>;

// Dense row-major matrix ----------------------------------------------------

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(data.data() + idx[i] * cols, cols, out.data.data() + i * cols);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

template <typename T>
std::vector<T> select(const std::vector<T>& v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// Randomness ---------------------------------------------------------------
//
// Distributions are implemented here rather than through <random>'s
// distribution classes, whose output is implementation-defined. Runs must
// replay bit-exactly across standard libraries.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with any number of integer tags into an independent seed.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t h = splitmix64(base);
  ((h = splitmix64(h ^ (static_cast<std::uint64_t>(tags) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// Formatting ----------------------------------------------------------------

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV line. Double-quoted fields may contain commas; `""` escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

}  // namespace fbfs
