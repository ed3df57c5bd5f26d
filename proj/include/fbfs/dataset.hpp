#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace fbfs {

enum class FeatureKind { numeric, categorical };

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  std::vector<std::string> categories;  // categorical only, in encoding order

  std::size_t encoded_width() const {
    return kind == FeatureKind::numeric ? 1 : categories.size();
  }
};

/// Column layout of a tabular dataset. Categories are declared up front so
/// that the one-hot width of a feature never depends on which rows are seen.
struct FeatureSchema {
  std::vector<FeatureColumn> features;
  std::string label_column;
  std::string positive_label;
  std::vector<std::string> label_values;  // optional; empty means unchecked

  std::size_t d() const noexcept { return features.size(); }

  void validate() const {
    if (features.empty()) throw DataError("schema: at least one feature column is required");
    std::set<std::string> names;
    for (const auto& f : features) {
      if (f.name.empty()) throw DataError("schema: empty feature name");
      if (!names.insert(f.name).second) throw DataError("schema: duplicate column '" + f.name + "'");
      if (f.kind == FeatureKind::categorical) {
        if (f.categories.empty())
          throw DataError("schema: categorical column '" + f.name + "' has no categories");
        std::set<std::string> cats(f.categories.begin(), f.categories.end());
        if (cats.size() != f.categories.size())
          throw DataError("schema: duplicate category in column '" + f.name + "'");
      } else if (!f.categories.empty()) {
        throw DataError("schema: numeric column '" + f.name + "' lists categories");
      }
    }
    if (label_column.empty()) throw DataError("schema: label column is required");
    if (names.count(label_column)) throw DataError("schema: label column is also a feature");
    if (positive_label.empty()) throw DataError("schema: positive label is required");
    if (!label_values.empty()) {
      std::set<std::string> vals(label_values.begin(), label_values.end());
      if (vals.size() != 2) throw DataError("schema: label_values must list exactly two values");
      if (!vals.count(positive_label))
        throw DataError("schema: positive label '" + positive_label + "' not in label_values");
    }
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t encoded_width(const FeatureSet& selected) const {
    std::size_t w = 0;
    for (auto f : selected) w += features.at(f).encoded_width();
    return w;
  }

  /// FNV-1a over everything that affects encoding.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::string_view s) {
      for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    };
    for (const auto& f : features) {
      mix(f.name);
      mix(f.kind == FeatureKind::numeric ? "n" : "c");
      for (const auto& c : f.categories) mix(c);
    }
    mix(label_column);
    mix(positive_label);
    return h;
  }

  std::string describe(const FeatureSet& s, char sep = '|') const {
    std::string out;
    bool first = true;
    for (auto f : s) {
      if (!first) out += sep;
      out += features.at(f).name;
      first = false;
    }
    return out;
  }
};

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  static const std::set<std::string> allowed = {"features", "label", "positive", "label_values"};
  if (!j.is_object()) throw DataError("schema: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw DataError("schema: unknown key '" + key + "'");
  FeatureSchema s;
  try {
    for (const auto& fj : j.at("features")) {
      FeatureColumn col;
      for (const auto& [key, _] : fj.items())
        if (key != "name" && key != "kind" && key != "categories")
          throw DataError("schema: unknown feature key '" + key + "'");
      col.name = fj.at("name").get<std::string>();
      auto kind = fj.at("kind").get<std::string>();
      if (kind == "numeric") {
        col.kind = FeatureKind::numeric;
      } else if (kind == "categorical") {
        col.kind = FeatureKind::categorical;
        col.categories = fj.at("categories").get<std::vector<std::string>>();
      } else {
        throw DataError("schema: unknown kind '" + kind + "' for column '" + col.name + "'");
      }
      s.features.push_back(std::move(col));
    }
    s.label_column = j.at("label").get<std::string>();
    s.positive_label = j.at("positive").get<std::string>();
    if (j.contains("label_values")) s.label_values = j.at("label_values").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json schema_to_json(const FeatureSchema& s) {
  nlohmann::json j;
  j["features"] = nlohmann::json::array();
  for (const auto& f : s.features) {
    nlohmann::json fj{{"name", f.name}, {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical"}};
    if (f.kind == FeatureKind::categorical) fj["categories"] = f.categories;
    j["features"].push_back(std::move(fj));
  }
  j["label"] = s.label_column;
  j["positive"] = s.positive_label;
  if (!s.label_values.empty()) j["label_values"] = s.label_values;
  return j;
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

/// Raw (un-encoded) instance values. Numeric cells hold the value, categorical
/// cells hold the category's position in the schema. `columns` names the
/// schema features stored, in ascending index order.
struct RawTable {
  FeatureSet columns;
  std::size_t rows = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * columns.size(), columns.size()};
  }

  RawTable select_rows(std::span<const std::size_t> idx) const {
    RawTable out{columns, idx.size(), {}};
    out.values.reserve(idx.size() * columns.size());
    for (auto r : idx) {
      auto src = row(r);
      out.values.insert(out.values.end(), src.begin(), src.end());
    }
    return out;
  }

  /// Restricts to `keep` (which must be a subset of `columns`).
  RawTable project(const FeatureSet& keep) const {
    std::vector<std::size_t> pos;
    for (auto f : keep) {
      auto p = columns.position_of(f);
      if (!p) throw Error("project: feature " + std::to_string(f) + " not present in table");
      pos.push_back(*p);
    }
    RawTable out{keep, rows, {}};
    out.values.reserve(rows * keep.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (auto p : pos) out.values.push_back(at(r, p));
    return out;
  }

  friend bool operator==(const RawTable&, const RawTable&) = default;
};

struct Dataset {
  FeatureSchema schema;
  RawTable table;
  Labels labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t d() const noexcept { return schema.d(); }

  Dataset subset(std::span<const std::size_t> rows) const {
    return Dataset{schema, table.select_rows(rows), select(labels, rows)};
  }

  std::size_t positives() const {
    std::size_t p = 0;
    for (auto y : labels) p += y;
    return p;
  }
};

// Loading -------------------------------------------------------------------

inline Dataset parse_csv(std::istream& in, const FeatureSchema& schema, const std::string& origin = "<csv>") {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  const std::size_t d = schema.d();
  std::vector<std::ptrdiff_t> feature_col(d, -1);
  std::ptrdiff_t label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.label_column) {
      label_col = static_cast<std::ptrdiff_t>(c);
    } else if (auto f = schema.find(header[c])) {
      feature_col[*f] = static_cast<std::ptrdiff_t>(c);
    } else {
      throw DataError(origin + ": column '" + header[c] + "' is not in the schema");
    }
  }
  for (std::size_t f = 0; f < d; ++f)
    if (feature_col[f] < 0) throw DataError(origin + ": missing column '" + schema.features[f].name + "'");
  if (label_col < 0) throw DataError(origin + ": missing label column '" + schema.label_column + "'");

  std::vector<std::unordered_map<std::string, std::size_t>> cat_index(d);
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t k = 0; k < schema.features[f].categories.size(); ++k)
      cat_index[f].emplace(schema.features[f].categories[k], k);

  Dataset ds{schema, RawTable{FeatureSet::all(d), 0, {}}, {}};
  bool saw_positive = false;
  std::size_t row_no = 1;  // header is line 1
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(origin + ": row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(header.size()));
    auto where = [&](std::size_t col) {
      return origin + ": row " + std::to_string(row_no) + ", column '" + header[col] + "'";
    };
    for (std::size_t f = 0; f < d; ++f) {
      const auto col = static_cast<std::size_t>(feature_col[f]);
      const std::string& cell = cells[col];
      if (cell.empty()) throw DataError(where(col) + ": missing value");
      if (schema.features[f].kind == FeatureKind::numeric) {
        auto v = parse_double(cell);
        if (!v || !std::isfinite(*v)) throw DataError(where(col) + ": '" + cell + "' is not numeric");
        ds.table.values.push_back(*v);
      } else {
        auto it = cat_index[f].find(cell);
        if (it == cat_index[f].end()) throw DataError(where(col) + ": unseen category '" + cell + "'");
        ds.table.values.push_back(static_cast<double>(it->second));
      }
    }
    const auto lcol = static_cast<std::size_t>(label_col);
    const std::string& lab = cells[lcol];
    if (lab.empty()) throw DataError(where(lcol) + ": missing label");
    if (!schema.label_values.empty() &&
        std::find(schema.label_values.begin(), schema.label_values.end(), lab) == schema.label_values.end())
      throw DataError(where(lcol) + ": label '" + lab + "' is not a declared label value");
    const bool pos = lab == schema.positive_label;
    saw_positive |= pos;
    ds.labels.push_back(pos ? 1 : 0);
    ++ds.table.rows;
  }
  if (ds.size() > 0 && !saw_positive && schema.label_values.empty())
    throw DataError(origin + ": positive label '" + schema.positive_label + "' never occurs");
  return ds;
}

inline Dataset load_csv(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return parse_csv(in, schema, path);
}

// Partitioning ----------------------------------------------------------------

struct Partition {
  Dataset acquisition_pool;
  Dataset test_set;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> pool_rows;  // source row indices, ascending
  std::vector<std::size_t> test_rows;
};

/// Stratified split of row indices. Each class contributes round(m_c * fraction)
/// rows to the second part; both parts must receive at least one row of each class.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const Labels& labels, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> keep, held;
  for (auto& rows : by_class) {
    if (rows.size() < 2) throw DataError("partition: need at least 2 rows of each class to stratify");
    shuffle(rows, rng);
    const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(rows.size()) * fraction));
    if (h == 0 || h >= rows.size())
      throw DataError("partition: fraction " + format_double(fraction) + " leaves a class empty on one side (" +
                      std::to_string(rows.size()) + " rows in class)");
    held.insert(held.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(h));
    keep.insert(keep.end(), rows.begin() + static_cast<std::ptrdiff_t>(h), rows.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {std::move(keep), std::move(held)};
}

inline Partition partition(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw DataError("partition: test fraction must lie in (0,1)");
  auto [pool, test] = stratified_holdout(ds.labels, test_fraction, seed);
  Partition p{ds.subset(pool), ds.subset(test), test_fraction, seed, std::move(pool), std::move(test)};
  return p;
}

// Encoding --------------------------------------------------------------------

/// Identifies the column layout an encoded matrix was produced under.
struct EncodingSignature {
  FeatureSet features;
  std::uint64_t schema_hash = 0;
  std::size_t width = 0;

  friend bool operator==(const EncodingSignature&, const EncodingSignature&) = default;
};

struct EncodedMatrix {
  Matrix values;
  EncodingSignature signature;
};

/// One-hot encodes the `selected` features of `rows`. Numeric features pass
/// through; each categorical feature expands into one indicator per declared
/// category, contiguous, in selected-set order.
inline EncodedMatrix encode(const RawTable& rows, const FeatureSet& selected, const FeatureSchema& schema) {
  const std::size_t width = schema.encoded_width(selected);
  std::vector<std::size_t> pos;
  pos.reserve(selected.size());
  for (auto f : selected) {
    auto p = rows.columns.position_of(f);
    if (!p) throw Error("encode: feature '" + schema.features.at(f).name + "' missing from rows");
    pos.push_back(*p);
  }
  EncodedMatrix out{Matrix(rows.rows, width), {selected, schema.hash(), width}};
  for (std::size_t r = 0; r < rows.rows; ++r) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < selected.size(); ++i) {
      const auto& col = schema.features[selected[i]];
      const double v = rows.at(r, pos[i]);
      if (col.kind == FeatureKind::numeric) {
        out.values(r, c++) = v;
      } else {
        out.values(r, c + static_cast<std::size_t>(v)) = 1.0;
        c += col.categories.size();
      }
    }
  }
  return out;
}

/// Encoded column index -> owning raw feature, for a given selection.
inline std::vector<std::size_t> encoded_column_owners(const FeatureSet& selected, const FeatureSchema& schema) {
  std::vector<std::size_t> owner;
  for (auto f : selected)
    owner.insert(owner.end(), schema.features.at(f).encoded_width(), f);
  return owner;
}

// Synthetic data ------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t rows = 1000;
  std::size_t numeric = 5;
  std::size_t categorical = 5;
  std::size_t informative = 0;  // feature index carrying the label
  double noise = 0.0;           // label flip probability
  std::size_t categories = 4;   // per categorical feature
};

/// Numeric features are uniform on [0,1); categorical ones are uniform over
/// `categories` levels. The label is `x > 0.5` (numeric informative feature)
/// or `category < categories/2` (categorical), flipped with probability `noise`.
inline Dataset synthesize(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t d = spec.numeric + spec.categorical;
  if (spec.informative >= d) throw DataError("synthesize: informative feature index out of range");
  if (!(spec.noise >= 0.0 && spec.noise < 0.5)) throw DataError("synthesize: noise rate must lie in [0, 0.5)");
  if (spec.categorical > 0 && spec.categories < 2) throw DataError("synthesize: need at least 2 categories");

  FeatureSchema schema;
  for (std::size_t i = 0; i < spec.numeric; ++i) schema.features.push_back({"num" + std::to_string(i), FeatureKind::numeric, {}});
  for (std::size_t i = 0; i < spec.categorical; ++i) {
    FeatureColumn col{"cat" + std::to_string(i), FeatureKind::categorical, {}};
    for (std::size_t k = 0; k < spec.categories; ++k) col.categories.push_back("c" + std::to_string(k));
    schema.features.push_back(std::move(col));
  }
  schema.label_column = "label";
  schema.positive_label = "1";
  schema.label_values = {"0", "1"};

  Rng rng(seed);
  Dataset ds{schema, RawTable{FeatureSet::all(d), spec.rows, {}}, {}};
  ds.table.values.reserve(spec.rows * d);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    std::uint8_t y = 0;
    for (std::size_t f = 0; f < d; ++f) {
      double v;
      bool hit;
      if (f < spec.numeric) {
        v = uniform01(rng);
        hit = v > 0.5;
      } else {
        auto k = uniform_index(rng, spec.categories);
        v = static_cast<double>(k);
        hit = k < spec.categories / 2;
      }
      ds.table.values.push_back(v);
      if (f == spec.informative) y = hit ? 1 : 0;
    }
    if (uniform01(rng) < spec.noise) y ^= 1;
    ds.labels.push_back(y);
  }
  return ds;
}

/// Writes a dataset back out as CSV (useful for feeding synthetic data to the CLI).
inline void write_csv(std::ostream& out, const Dataset& ds) {
  const auto& s = ds.schema;
  for (const auto& f : s.features) out << f.name << ',';
  out << s.label_column << '\n';
  std::string negative = "0";
  for (const auto& v : s.label_values)
    if (v != s.positive_label) negative = v;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t f = 0; f < s.d(); ++f) {
      const double v = ds.table.at(r, f);
      if (s.features[f].kind == FeatureKind::numeric) out << format_double(v);
      else out << s.features[f].categories[static_cast<std::size_t>(v)];
      out << ',';
    }
    out << (ds.labels[r] ? s.positive_label : negative) << '\n';
  }
}

}  // namespace fbfs
