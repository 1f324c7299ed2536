/*
 * Copyright 2026 The flipaudit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "flipaudit/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::data {
namespace {

using nlohmann::json;

std::string Trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<double> ParseDouble(std::string_view text) {
  const std::string s = Trim(text);
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureSchema

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns, LabelSpec label,
                             std::string id_column)
    : columns_(std::move(columns)),
      label_(std::move(label)),
      id_column_(std::move(id_column)) {
  Build();
}

void FeatureSchema::Build() {
  features_.clear();
  groups_.clear();
  raw_.clear();
  std::set<std::string> seen;
  for (const ColumnSpec& col : columns_) {
    if (col.name.empty()) throw Error(ErrorCode::kSchema, "empty column name");
    if (!seen.insert(col.name).second) {
      throw Error(ErrorCode::kSchema, "duplicate column '" + col.name + "'");
    }
    if (col.scale_weight &&
        !(std::isfinite(*col.scale_weight) && *col.scale_weight > 0.0)) {
      throw Error(ErrorCode::kSchema,
                  "scale_weight of '" + col.name + "' must be finite and > 0");
    }
    if (col.lower && col.upper && *col.lower > *col.upper) {
      throw Error(ErrorCode::kSchema, "bounds of '" + col.name + "' are empty");
    }
    if (!col.categorical) {
      Feature f;
      f.name = col.name;
      f.source = col.name;
      f.lower = col.lower;
      f.upper = col.upper;
      f.integer_valued = col.integer_valued;
      f.scale_weight = col.scale_weight.value_or(1.0);
      f.scale_group = col.scale_group;
      raw_.push_back({col.name, false, features_.size()});
      features_.push_back(std::move(f));
      continue;
    }
    if (col.levels.size() < 2) {
      throw Error(ErrorCode::kSchema, "categorical column '" + col.name +
                                          "' needs at least two levels");
    }
    std::set<std::string> level_set(col.levels.begin(), col.levels.end());
    if (level_set.size() != col.levels.size()) {
      throw Error(ErrorCode::kSchema,
                  "categorical column '" + col.name + "' repeats a level");
    }
    CategoricalGroup g;
    g.name = col.name;
    g.levels = col.levels;
    for (const std::string& level : col.levels) {
      Feature f;
      f.name = col.name + "=" + level;
      f.source = col.name;
      f.kind = FeatureKind::kBinaryInGroup;
      f.group = groups_.size();
      f.lower = 0.0;
      f.upper = 1.0;
      f.integer_valued = true;
      f.scale_weight = col.scale_weight.value_or(1.0);
      f.scale_group = col.scale_group;
      g.members.push_back(features_.size());
      features_.push_back(std::move(f));
    }
    raw_.push_back({col.name, true, groups_.size()});
    groups_.push_back(std::move(g));
  }
}

FeatureSchema FeatureSchema::FromJson(const json& j) {
  try {
    std::vector<ColumnSpec> columns;
    for (const json& jf : j.at("features")) {
      ColumnSpec c;
      c.name = jf.at("name").get<std::string>();
      const std::string kind = jf.value("kind", std::string("continuous"));
      if (kind == "categorical") {
        c.categorical = true;
        c.levels = jf.at("levels").get<std::vector<std::string>>();
      } else if (kind != "continuous") {
        throw Error(ErrorCode::kSchema,
                    "feature '" + c.name + "' has unknown kind '" + kind + "'");
      }
      if (jf.contains("bounds")) {
        const json& b = jf.at("bounds");
        if (!b.is_array() || b.size() != 2) {
          throw Error(ErrorCode::kSchema,
                      "bounds of '" + c.name + "' must be [lower, upper]");
        }
        if (!b[0].is_null()) c.lower = b[0].get<double>();
        if (!b[1].is_null()) c.upper = b[1].get<double>();
      }
      c.integer_valued = jf.value("integer", false);
      if (jf.contains("scale_weight") && !jf.at("scale_weight").is_null()) {
        c.scale_weight = jf.at("scale_weight").get<double>();
      }
      c.scale_group = jf.value("scale_group", std::string());
      columns.push_back(std::move(c));
    }
    LabelSpec label;
    if (j.contains("label")) {
      label.column = j.at("label").at("name").get<std::string>();
      label.classes =
          j.at("label").at("classes").get<std::vector<std::string>>();
      if (label.classes.size() != 2) {
        throw Error(ErrorCode::kSchema, "label must list exactly two classes");
      }
    }
    return FeatureSchema(std::move(columns), std::move(label),
                         j.value("id_column", std::string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("malformed schema: ") + e.what());
  }
}

FeatureSchema FeatureSchema::Load(const std::string& path) {
  const std::string text = ReadFile(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + " at byte " + std::to_string(e.byte) +
                                       ": " + e.what());
  }
  return FromJson(j);
}

json FeatureSchema::ToJson() const {
  json features = json::array();
  for (const ColumnSpec& c : columns_) {
    json jf;
    jf["name"] = c.name;
    jf["kind"] = c.categorical ? "categorical" : "continuous";
    if (c.categorical) jf["levels"] = c.levels;
    if (c.lower || c.upper) {
      jf["bounds"] = json::array({c.lower ? json(*c.lower) : json(nullptr),
                                  c.upper ? json(*c.upper) : json(nullptr)});
    }
    if (c.integer_valued) jf["integer"] = true;
    if (c.scale_weight) jf["scale_weight"] = *c.scale_weight;
    if (!c.scale_group.empty()) jf["scale_group"] = c.scale_group;
    features.push_back(std::move(jf));
  }
  json j;
  j["features"] = std::move(features);
  if (!label_.column.empty()) {
    j["label"] = {{"name", label_.column}, {"classes", label_.classes}};
  }
  if (!id_column_.empty()) j["id_column"] = id_column_;
  return j;
}

std::optional<size_t> FeatureSchema::FeatureIndex(std::string_view name) const {
  for (size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<size_t> FeatureSchema::GroupIndex(std::string_view name) const {
  for (size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name == name) return i;
  }
  return std::nullopt;
}

size_t FeatureSchema::RequireFeature(std::string_view name) const {
  if (auto i = FeatureIndex(name)) return *i;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown feature '" + std::string(name) + "'");
}

std::vector<std::string> FeatureSchema::FeatureNames() const {
  std::vector<std::string> names;
  names.reserve(features_.size());
  for (const Feature& f : features_) names.push_back(f.name);
  return names;
}

std::vector<double> FeatureSchema::ScaleWeights() const {
  std::vector<double> w;
  w.reserve(features_.size());
  for (const Feature& f : features_) w.push_back(f.scale_weight);
  return w;
}

FeatureSchema FeatureSchema::WithScaleWeights(
    std::span<const double> weights) const {
  if (weights.size() != features_.size()) {
    throw Error(ErrorCode::kShape, "expected " +
                                       std::to_string(features_.size()) +
                                       " scale weights, got " +
                                       std::to_string(weights.size()));
  }
  FeatureSchema out = *this;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (!(std::isfinite(weights[i]) && weights[i] > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "scale weight of '" + features_[i].name +
                      "' must be finite and > 0");
    }
    out.features_[i].scale_weight = weights[i];
  }
  // Mirror into the column specs so ToJson() keeps the weights.
  for (const RawFeature& raw : out.raw_) {
    auto col = std::find_if(out.columns_.begin(), out.columns_.end(),
                            [&](const ColumnSpec& c) { return c.name == raw.name; });
    if (!raw.categorical) {
      col->scale_weight = weights[raw.index];
      continue;
    }
    const auto& members = out.groups_[raw.index].members;
    const double w0 = weights[members.front()];
    if (std::all_of(members.begin(), members.end(),
                    [&](size_t m) { return weights[m] == w0; })) {
      col->scale_weight = w0;
    }
  }
  return out;
}

std::map<std::string, std::vector<std::string>> FeatureSchema::ScaleGroups()
    const {
  std::map<std::string, std::vector<std::string>> out;
  for (const ColumnSpec& c : columns_) {
    if (!c.scale_group.empty()) out[c.scale_group].push_back(c.name);
  }
  return out;
}

std::string FeatureSchema::Hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const Feature& f : features_) {
    mix(f.name);
    mix("\x1f");
    mix(f.kind == FeatureKind::kContinuous ? "c" : "b");
    mix("\x1f");
    mix(f.group ? groups_[*f.group].name : std::string());
    mix("\x1e");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::Validate() const {
  if (features.cols() != schema.size() && features.rows() > 0) {
    throw Error(ErrorCode::kShape,
                "dataset has " + std::to_string(features.cols()) +
                    " columns but the schema has " +
                    std::to_string(schema.size()) + " features");
  }
  if (targets.size() != features.rows() || row_ids.size() != features.rows()) {
    throw Error(ErrorCode::kShape, "labels/row ids do not match row count");
  }
  for (size_t r = 0; r < features.rows(); ++r) {
    const auto x = features.row(r);
    for (size_t c = 0; c < x.size(); ++c) {
      const Feature& f = schema.feature(c);
      if (!std::isfinite(x[c])) {
        throw Error(ErrorCode::kInvalidInput,
                    "non-finite value in row " + row_ids[r] + ", '" + f.name + "'");
      }
      if ((f.lower && x[c] < *f.lower) || (f.upper && x[c] > *f.upper)) {
        throw Error(ErrorCode::kIntegrity, "row " + row_ids[r] + ": '" + f.name +
                                               "' = " + FormatDouble(x[c]) +
                                               " is outside its bounds");
      }
    }
    for (const CategoricalGroup& g : schema.groups()) {
      int active = 0;
      for (size_t m : g.members) {
        if (x[m] == 1.0) {
          ++active;
        } else if (x[m] != 0.0) {
          active = -1000;
        }
      }
      if (active != 1) {
        throw Error(ErrorCode::kIntegrity,
                    "row " + row_ids[r] + ": group '" + g.name +
                        "' does not have exactly one active level");
      }
    }
    const Target& t = targets[r];
    if (!(t[0] >= 0.0 && t[1] >= 0.0 && std::abs(t[0] + t[1] - 1.0) < 1e-12)) {
      throw Error(ErrorCode::kIntegrity,
                  "row " + row_ids[r] + ": target does not sum to 1");
    }
  }
}

std::vector<std::vector<std::string>> ParseCsv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  size_t quote_start = 0;
  // Skip a UTF-8 byte order mark.
  size_t i = text.rfind("\xEF\xBB\xBF", 0) == 0 ? 3 : 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw Error(ErrorCode::kParse, "stray quote at byte " +
                                             std::to_string(i) + " (record " +
                                             std::to_string(records.size() + 1) +
                                             ")");
        }
        in_quotes = true;
        field_started = true;
        quote_start = i;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::kParse, "unterminated quote starting at byte " +
                                       std::to_string(quote_start));
  }
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

Dataset ParseCsvDataset(std::string_view text, const FeatureSchema& schema) {
  const auto records = ParseCsv(text);
  if (records.empty()) throw Error(ErrorCode::kParse, "CSV has no header row");
  const auto& header = records.front();

  std::map<std::string, size_t> position;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string name = Trim(header[c]);
    const bool known =
        std::any_of(schema.columns().begin(), schema.columns().end(),
                    [&](const ColumnSpec& s) { return s.name == name; }) ||
        name == schema.label().column || name == schema.id_column();
    if (!known) {
      throw Error(ErrorCode::kSchema, "unknown column '" + name + "'");
    }
    position[name] = c;
  }
  for (const ColumnSpec& s : schema.columns()) {
    if (!position.contains(s.name)) {
      throw Error(ErrorCode::kSchema, "missing column '" + s.name + "'");
    }
  }
  const bool has_label =
      !schema.label().column.empty() && position.contains(schema.label().column);
  const bool has_id =
      !schema.id_column().empty() && position.contains(schema.id_column());

  Dataset ds;
  ds.schema = schema;
  const size_t n = records.size() - 1;
  ds.features = linalg::Matrix(n, schema.size());
  ds.targets.reserve(n);
  ds.row_ids.reserve(n);
  for (size_t r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    const std::string where = "row " + std::to_string(r + 1);
    if (rec.size() != header.size()) {
      throw Error(ErrorCode::kParse, where + " has " + std::to_string(rec.size()) +
                                         " fields, header has " +
                                         std::to_string(header.size()));
    }
    auto x = ds.features.row(r);
    for (const RawFeature& raw : schema.raw_features()) {
      const std::string cell = Trim(rec[position[raw.name]]);
      if (!raw.categorical) {
        const auto v = ParseDouble(cell);
        if (!v) {
          throw Error(ErrorCode::kParse, where + ", column '" + raw.name +
                                             "': cannot parse '" + cell + "'");
        }
        x[raw.index] = *v;
        continue;
      }
      const CategoricalGroup& g = schema.groups()[raw.index];
      auto it = std::find(g.levels.begin(), g.levels.end(), cell);
      if (it == g.levels.end()) {
        throw Error(ErrorCode::kIntegrity, where + ", column '" + raw.name +
                                               "': '" + cell +
                                               "' is not a declared level");
      }
      x[g.members[it - g.levels.begin()]] = 1.0;
    }
    Target t{1.0, 0.0};
    if (has_label) {
      const std::string cell = Trim(rec[position[schema.label().column]]);
      const auto& classes = schema.label().classes;
      if (cell == classes[0]) {
        t = HardTarget(0);
      } else if (cell == classes[1]) {
        t = HardTarget(1);
      } else if (cell.rfind("soft:", 0) == 0) {
        const auto p = ParseDouble(std::string_view(cell).substr(5));
        if (!p || *p < 0.0 || *p > 1.0) {
          throw Error(ErrorCode::kParse, where + ": bad soft label '" + cell + "'");
        }
        t = {1.0 - *p, *p};
      } else {
        throw Error(ErrorCode::kParse, where + ", column '" +
                                           schema.label().column +
                                           "': unknown class '" + cell + "'");
      }
    }
    ds.targets.push_back(t);
    ds.row_ids.push_back(has_id ? Trim(rec[position[schema.id_column()]])
                                : std::to_string(r));
  }
  ds.Validate();
  return ds;
}

Dataset LoadCsv(const std::string& path, const FeatureSchema& schema) {
  return ParseCsvDataset(ReadFile(path), schema);
}

Dataset LoadCsv(const std::string& path, const std::string& schema_path) {
  return LoadCsv(path, FeatureSchema::Load(schema_path));
}

// ---------------------------------------------------------------------------
// Row-level transformations

Dataset Subset(const Dataset& dataset, std::span<const size_t> rows) {
  Dataset out;
  out.schema = dataset.schema;
  out.features = dataset.features.SelectRows(rows);
  out.targets.reserve(rows.size());
  out.row_ids.reserve(rows.size());
  for (size_t r : rows) {
    out.targets.push_back(dataset.targets.at(r));
    out.row_ids.push_back(dataset.row_ids.at(r));
  }
  if (rows.empty()) out.features = linalg::Matrix(0, dataset.schema.size());
  return out;
}

Dataset Concat(const Dataset& a, const Dataset& b) {
  if (a.schema.Hash() != b.schema.Hash()) {
    throw Error(ErrorCode::kSchema, "cannot concatenate datasets with different schemas");
  }
  Dataset out = a;
  for (size_t r = 0; r < b.size(); ++r) out.features.AppendRow(b.row(r));
  out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
  out.row_ids.insert(out.row_ids.end(), b.row_ids.begin(), b.row_ids.end());
  return out;
}

std::pair<Dataset, Dataset> Split(const Dataset& dataset, double test_fraction,
                                  uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "test fraction must lie in (0, 1), got " +
                    FormatDouble(test_fraction));
  }
  const size_t n = dataset.size();
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.Shuffle(perm);
  const size_t n_test =
      static_cast<size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<size_t> test(perm.begin(), perm.begin() + n_test);
  std::vector<size_t> train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {Subset(dataset, train), Subset(dataset, test)};
}

std::vector<std::pair<Dataset, Dataset>> KFold(const Dataset& dataset,
                                               size_t folds, uint64_t seed) {
  const size_t n = dataset.size();
  if (folds < 2 || folds > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "fold count must lie in [2, rows], got " + std::to_string(folds));
  }
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.Shuffle(perm);
  std::vector<std::pair<Dataset, Dataset>> out;
  for (size_t k = 0; k < folds; ++k) {
    const size_t lo = k * n / folds;
    const size_t hi = (k + 1) * n / folds;
    std::vector<size_t> test(perm.begin() + lo, perm.begin() + hi);
    std::vector<size_t> train(perm.begin(), perm.begin() + lo);
    train.insert(train.end(), perm.begin() + hi, perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    out.emplace_back(Subset(dataset, train), Subset(dataset, test));
  }
  return out;
}

Dataset DropFeatures(const Dataset& dataset,
                     std::span<const std::string> names) {
  const FeatureSchema& schema = dataset.schema;
  std::set<size_t> drop;
  for (const std::string& name : names) {
    if (auto g = schema.GroupIndex(name)) {
      const auto& m = schema.groups()[*g].members;
      drop.insert(m.begin(), m.end());
    } else if (auto f = schema.FeatureIndex(name)) {
      drop.insert(*f);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown feature '" + name + "'");
    }
  }
  std::set<std::string> dropped_columns;
  for (const RawFeature& raw : schema.raw_features()) {
    if (!raw.categorical) {
      if (drop.contains(raw.index)) dropped_columns.insert(raw.name);
      continue;
    }
    const auto& m = schema.groups()[raw.index].members;
    const size_t hit = std::count_if(m.begin(), m.end(),
                                     [&](size_t i) { return drop.contains(i); });
    if (hit == m.size()) {
      dropped_columns.insert(raw.name);
    } else if (hit > 0) {
      throw Error(ErrorCode::kIntegrity,
                  "cannot drop part of categorical group '" + raw.name + "'");
    }
  }
  std::vector<ColumnSpec> columns;
  for (const ColumnSpec& c : schema.columns()) {
    if (!dropped_columns.contains(c.name)) columns.push_back(c);
  }
  std::vector<size_t> keep;
  std::vector<double> weights;
  for (size_t i = 0; i < schema.size(); ++i) {
    if (!drop.contains(i)) {
      keep.push_back(i);
      weights.push_back(schema.feature(i).scale_weight);
    }
  }
  Dataset out = dataset;
  out.schema = FeatureSchema(std::move(columns), schema.label(), schema.id_column())
                   .WithScaleWeights(weights);
  out.features = dataset.features.SelectColumns(keep);
  return out;
}

// ---------------------------------------------------------------------------
// Group filters

GroupFilter GroupFilter::Parse(std::string_view text,
                               const FeatureSchema& schema) {
  GroupFilter filter;
  std::string s(text);
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = Trim(part);
    if (part.empty()) continue;
    const size_t pos = part.find_first_of("=<>");
    if (pos == std::string::npos || pos == 0 || pos + 1 == part.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "malformed filter clause '" + part + "'");
    }
    Clause c;
    c.name = Trim(part.substr(0, pos));
    c.value = Trim(part.substr(pos + 1));
    c.op = part[pos] == '=' ? Op::kEquals : part[pos] == '<' ? Op::kLess : Op::kGreater;
    if (auto g = schema.GroupIndex(c.name)) {
      const auto& levels = schema.groups()[*g].levels;
      if (c.op != Op::kEquals) {
        throw Error(ErrorCode::kInvalidArgument,
                    "categorical '" + c.name + "' only supports '='");
      }
      if (std::find(levels.begin(), levels.end(), c.value) == levels.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "'" + c.value + "' is not a level of '" + c.name + "'");
      }
    } else if (schema.FeatureIndex(c.name)) {
      if (!ParseDouble(c.value)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "filter value '" + c.value + "' is not a number");
      }
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  "filter names unknown feature '" + c.name + "'");
    }
    filter.clauses_.push_back(std::move(c));
  }
  return filter;
}

bool GroupFilter::Matches(const FeatureSchema& schema,
                          std::span<const double> row) const {
  for (const Clause& c : clauses_) {
    if (auto g = schema.GroupIndex(c.name)) {
      const auto& grp = schema.groups()[*g];
      const size_t level =
          std::find(grp.levels.begin(), grp.levels.end(), c.value) -
          grp.levels.begin();
      if (level >= grp.levels.size() || row[grp.members[level]] != 1.0) {
        return false;
      }
      continue;
    }
    const auto idx = schema.FeatureIndex(c.name);
    const auto v = ParseDouble(c.value);
    if (!idx || !v) return false;
    const double x = row[*idx];
    switch (c.op) {
      case Op::kEquals:
        if (x != *v) return false;
        break;
      case Op::kLess:
        if (!(x < *v)) return false;
        break;
      case Op::kGreater:
        if (!(x > *v)) return false;
        break;
    }
  }
  return true;
}

std::vector<size_t> GroupFilter::MatchingRows(const Dataset& dataset) const {
  std::vector<size_t> rows;
  for (size_t r = 0; r < dataset.size(); ++r) {
    if (Matches(dataset.schema, dataset.row(r))) rows.push_back(r);
  }
  return rows;
}

Dataset Undersample(const Dataset& dataset, const GroupFilter& filter,
                    double keep_fraction, uint64_t seed) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "keep fraction must lie in [0, 1], got " +
                    FormatDouble(keep_fraction));
  }
  std::vector<size_t> matching = filter.MatchingRows(dataset);
  const size_t keep = static_cast<size_t>(
      std::floor(keep_fraction * static_cast<double>(matching.size()) + 1e-9));
  Rng rng(seed);
  rng.Shuffle(matching);
  std::vector<char> removed(dataset.size(), 0);
  for (size_t i = keep; i < matching.size(); ++i) removed[matching[i]] = 1;
  std::vector<size_t> rows;
  for (size_t r = 0; r < dataset.size(); ++r) {
    if (!removed[r]) rows.push_back(r);
  }
  return Subset(dataset, rows);
}

std::vector<double> FlipBinaryFeature(const FeatureSchema& schema,
                                      std::span<const double> row,
                                      std::string_view target) {
  std::vector<double> out(row.begin(), row.end());
  std::optional<size_t> g = schema.GroupIndex(target);
  if (!g) {
    if (auto f = schema.FeatureIndex(target)) g = schema.feature(*f).group;
  }
  if (g) {
    const auto& m = schema.groups()[*g].members;
    if (m.size() != 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "group '" + schema.groups()[*g].name + "' has " +
                      std::to_string(m.size()) + " levels; only 2 can be flipped");
    }
    std::swap(out[m[0]], out[m[1]]);
    return out;
  }
  const size_t f = schema.RequireFeature(target);
  if (out[f] != 0.0 && out[f] != 1.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature '" + std::string(target) + "' is not binary");
  }
  out[f] = 1.0 - out[f];
  return out;
}

Dataset FlipBinaryFeature(const Dataset& dataset, std::string_view target) {
  Dataset out = dataset;
  for (size_t r = 0; r < dataset.size(); ++r) {
    const auto flipped = FlipBinaryFeature(dataset.schema, dataset.row(r), target);
    std::copy(flipped.begin(), flipped.end(), out.features.row(r).begin());
  }
  return out;
}

FeatureSchema FitScaleWeights(const Dataset& train) {
  const FeatureSchema& schema = train.schema;
  std::vector<double> weights = schema.ScaleWeights();
  for (const RawFeature& raw : schema.raw_features()) {
    if (raw.categorical) continue;
    const auto col = std::find_if(
        schema.columns().begin(), schema.columns().end(),
        [&](const ColumnSpec& c) { return c.name == raw.name; });
    if (col->scale_weight || train.size() == 0) continue;
    double lo = train.features(0, raw.index);
    double hi = lo;
    for (size_t r = 1; r < train.size(); ++r) {
      lo = std::min(lo, train.features(r, raw.index));
      hi = std::max(hi, train.features(r, raw.index));
    }
    const double range = hi - lo;
    weights[raw.index] = range > 0.0 ? 1.0 / (range * range) : 1.0;
  }
  return schema.WithScaleWeights(weights);
}

double WeightedDistance(const FeatureSchema& schema, std::span<const double> a,
                        std::span<const double> b) {
  if (a.size() != schema.size() || b.size() != schema.size()) {
    throw Error(ErrorCode::kShape, "distance operands do not match the schema");
  }
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += schema.feature(i).scale_weight * d * d;
  }
  return std::sqrt(sum);
}

std::string ToCsv(const Dataset& dataset) {
  const FeatureSchema& schema = dataset.schema;
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  std::vector<std::string> header;
  if (!schema.id_column().empty()) header.push_back(schema.id_column());
  for (const RawFeature& raw : schema.raw_features()) header.push_back(raw.name);
  if (!schema.label().column.empty()) header.push_back(schema.label().column);
  for (size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << quote(header[i]);
  }
  out << "\n";
  for (size_t r = 0; r < dataset.size(); ++r) {
    std::vector<std::string> cells;
    if (!schema.id_column().empty()) cells.push_back(dataset.row_ids[r]);
    const auto x = dataset.row(r);
    for (const RawFeature& raw : schema.raw_features()) {
      if (!raw.categorical) {
        cells.push_back(FormatDouble(x[raw.index]));
        continue;
      }
      const auto& g = schema.groups()[raw.index];
      for (size_t k = 0; k < g.members.size(); ++k) {
        if (x[g.members[k]] == 1.0) cells.push_back(g.levels[k]);
      }
    }
    if (!schema.label().column.empty()) {
      const Target& t = dataset.targets[r];
      if (t == HardTarget(0)) {
        cells.push_back(schema.label().classes[0]);
      } else if (t == HardTarget(1)) {
        cells.push_back(schema.label().classes[1]);
      } else {
        cells.push_back("soft:" + FormatDouble(t[1]));
      }
    }
    for (size_t i = 0; i < cells.size(); ++i) {
      out << (i ? "," : "") << quote(cells[i]);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace flipaudit::data
