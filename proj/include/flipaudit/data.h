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

#ifndef FLIPAUDIT_DATA_H_
#define FLIPAUDIT_DATA_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flipaudit/linalg.h"
#include "json.hpp"

namespace flipaudit::data {

enum class FeatureKind { kContinuous, kBinaryInGroup };

// Raw-column description as it appears in a schema file. A categorical
// column expands into one binary feature per level.
struct ColumnSpec {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;
  std::optional<double> lower;
  std::optional<double> upper;
  bool integer_valued = false;
  std::optional<double> scale_weight;
  // Features sharing a measurement scale ("months", "dollars", ...).
  std::string scale_group;
};

struct LabelSpec {
  std::string column;
  // classes[0] is the class scored by z1.
  std::vector<std::string> classes;
};

// One encoded column.
struct Feature {
  std::string name;    // "age", or "sex=Male" for a categorical level.
  std::string source;  // Raw column name.
  FeatureKind kind = FeatureKind::kContinuous;
  std::optional<size_t> group;  // Index into FeatureSchema::groups().
  std::optional<double> lower;
  std::optional<double> upper;
  bool integer_valued = false;
  double scale_weight = 1.0;  // w_i in sum_i w_i (a_i - b_i)^2.
  std::string scale_group;
};

// One-hot block: exactly one member is 1 in every row.
struct CategoricalGroup {
  std::string name;
  std::vector<std::string> levels;
  std::vector<size_t> members;  // Encoded feature index per level.
};

// A user-facing feature: either one continuous column or one whole
// categorical group.
struct RawFeature {
  std::string name;
  bool categorical = false;
  size_t index = 0;  // Feature index, or group index when categorical.
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<ColumnSpec> columns, LabelSpec label = {},
                std::string id_column = {});

  static FeatureSchema FromJson(const nlohmann::json& j);
  static FeatureSchema Load(const std::string& path);
  nlohmann::json ToJson() const;

  size_t size() const { return features_.size(); }
  const std::vector<Feature>& features() const { return features_; }
  const Feature& feature(size_t i) const { return features_.at(i); }
  const std::vector<CategoricalGroup>& groups() const { return groups_; }
  const std::vector<RawFeature>& raw_features() const { return raw_; }
  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const LabelSpec& label() const { return label_; }
  const std::string& id_column() const { return id_column_; }

  std::optional<size_t> FeatureIndex(std::string_view name) const;
  std::optional<size_t> GroupIndex(std::string_view name) const;
  // Throws kInvalidArgument naming `name` when it is not a feature.
  size_t RequireFeature(std::string_view name) const;

  std::vector<std::string> FeatureNames() const;
  std::vector<double> ScaleWeights() const;
  // Copy with the given per-feature weights (all finite and > 0).
  FeatureSchema WithScaleWeights(std::span<const double> weights) const;

  // Scale-group name -> raw feature names, in schema order.
  std::map<std::string, std::vector<std::string>> ScaleGroups() const;

  // Hex digest of the encoded layout (feature names, kinds and groups).
  std::string Hash() const;

 private:
  void Build();

  std::vector<ColumnSpec> columns_;
  LabelSpec label_;
  std::string id_column_;
  std::vector<Feature> features_;
  std::vector<CategoricalGroup> groups_;
  std::vector<RawFeature> raw_;
};

// Per-row training target (t0, t1) with t0 + t1 = 1. Hard labels are
// (1, 0) for class 0 and (0, 1) for class 1; (0.5, 0.5) is a flip label.
using Target = std::array<double, 2>;

inline Target HardTarget(int label) {
  return label == 0 ? Target{1.0, 0.0} : Target{0.0, 1.0};
}

struct Dataset {
  FeatureSchema schema;
  linalg::Matrix features;
  std::vector<Target> targets;
  std::vector<std::string> row_ids;

  size_t size() const { return features.rows(); }
  std::span<const double> row(size_t i) const { return features.row(i); }
  // Hard class index (argmax of the target; ties go to class 0).
  int Label(size_t i) const { return targets[i][1] > targets[i][0] ? 1 : 0; }

  // Throws kShape / kIntegrity when a dataset invariant is broken.
  void Validate() const;
};

// RFC-4180 reader: returns header + records. Throws kParse.
std::vector<std::vector<std::string>> ParseCsv(std::string_view text);

Dataset LoadCsv(const std::string& path, const std::string& schema_path);
Dataset LoadCsv(const std::string& path, const FeatureSchema& schema);
Dataset ParseCsvDataset(std::string_view text, const FeatureSchema& schema);

// Random partition; the test part has round(test_fraction * size) rows.
std::pair<Dataset, Dataset> Split(const Dataset& dataset, double test_fraction,
                                  uint64_t seed);

// k (train, test) folds over one random permutation.
std::vector<std::pair<Dataset, Dataset>> KFold(const Dataset& dataset,
                                               size_t folds, uint64_t seed);

Dataset Subset(const Dataset& dataset, std::span<const size_t> rows);
Dataset Concat(const Dataset& a, const Dataset& b);

// Removes features by encoded name or whole categorical group name.
// A strict subset of a group is an integrity error.
Dataset DropFeatures(const Dataset& dataset,
                     std::span<const std::string> names);

// Conjunction of clauses "name=value", "name<value", "name>value".
class GroupFilter {
 public:
  enum class Op { kEquals, kLess, kGreater };
  struct Clause {
    std::string name;
    Op op = Op::kEquals;
    std::string value;
  };

  GroupFilter() = default;
  // Parses "age<35,sex=Female". Throws kInvalidArgument for unknown
  // names or malformed clauses.
  static GroupFilter Parse(std::string_view text, const FeatureSchema& schema);

  bool Matches(const FeatureSchema& schema, std::span<const double> row) const;
  std::vector<size_t> MatchingRows(const Dataset& dataset) const;
  const std::vector<Clause>& clauses() const { return clauses_; }

 private:
  std::vector<Clause> clauses_;
};

// Keeps floor(keep_fraction * matches) randomly chosen matching rows and
// every non-matching row, in original order.
Dataset Undersample(const Dataset& dataset, const GroupFilter& filter,
                    double keep_fraction, uint64_t seed);

// Inverts a 0/1 continuous feature or swaps the active member of a
// two-level group in every row.
Dataset FlipBinaryFeature(const Dataset& dataset, std::string_view target);
std::vector<double> FlipBinaryFeature(const FeatureSchema& schema,
                                      std::span<const double> row,
                                      std::string_view target);

// Fills in default scale weights from the data: 1 / (max - min)^2 for
// continuous features without an explicit weight, 1 for one-hot members.
FeatureSchema FitScaleWeights(const Dataset& train);

// sqrt(sum_i w_i (a_i - b_i)^2).
double WeightedDistance(const FeatureSchema& schema, std::span<const double> a,
                        std::span<const double> b);

// Writes the dataset back as CSV with raw (decoded) columns.
std::string ToCsv(const Dataset& dataset);

}  // namespace flipaudit::data

#endif  // FLIPAUDIT_DATA_H_
