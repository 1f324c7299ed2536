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

#ifndef FLIPAUDIT_EXPLAIN_H_
#define FLIPAUDIT_EXPLAIN_H_

// Per-input explanation reports built from constrained and unconstrained
// flip points.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flipaudit/data.h"
#include "flipaudit/flipsolve.h"
#include "flipaudit/model.h"
#include "json.hpp"

namespace flipaudit::explain {

inline constexpr int kReportVersion = 1;

// Before and after values of one raw feature.
struct FeatureChange {
  std::string feature;
  bool categorical = false;
  double before = 0.0;
  double after = 0.0;
  std::string from_level;
  std::string to_level;

  bool operator==(const FeatureChange&) const = default;
};

enum class EntryKind { kSingle, kPair, kGroup, kCustom, kUnconstrained };

struct ReportEntry {
  EntryKind kind = EntryKind::kSingle;
  std::string name;  // Scale-group name for kGroup, else the joined features.
  std::vector<std::string> features;
  flipsolve::FlipStatus status = flipsolve::FlipStatus::kNoFlipExists;
  double distance = 0.0;
  double residual = 0.0;
  std::vector<double> flip_point;
  std::vector<FeatureChange> changes;
  // Solver failure message; such entries belong to no section.
  std::string error;

  bool failed() const { return !error.empty(); }
  bool operator==(const ReportEntry&) const = default;
};

struct Timing {
  double singles_seconds = 0.0;
  double pairs_seconds = 0.0;
  double groups_seconds = 0.0;
  double custom_seconds = 0.0;
  double unconstrained_seconds = 0.0;
  double total_seconds = 0.0;

  bool operator==(const Timing&) const = default;
};

struct ExplanationReport {
  int report_version = kReportVersion;
  std::string row_id;
  std::vector<std::string> feature_names;
  std::vector<double> input;
  int decision = 0;
  std::string decision_class;
  double z1 = 0.5;
  double z2 = 0.5;
  std::vector<ReportEntry> entries;
  std::optional<ReportEntry> closest;
  Timing timing;

  // Feature sets that cannot flip the decision.
  std::vector<const ReportEntry*> SectionA() const;
  // Feature sets with a flip point on the boundary, closest first within
  // each kind.
  std::vector<const ReportEntry*> SectionB() const;
  // Discrete-only changes that change the class without a boundary point.
  std::vector<const ReportEntry*> DiscreteChanges() const;
  std::vector<const ReportEntry*> Unresolved() const;

  bool operator==(const ExplanationReport&) const = default;
};

struct ExplainOptions {
  bool singles = true;
  bool pairs = false;
  bool groups = true;
  bool unconstrained = true;
  // Extra feature subsets, each solved as one constraint.
  std::vector<std::vector<std::string>> custom;
  // Restrict the single and pair sweeps to these raw features.
  std::vector<std::string> features;
  bool enforce_integer = false;
  flipsolve::SolverOptions solver;
  int threads = 1;
  // Scaled change below which the closest-overall table omits a feature.
  double change_threshold = 1e-3;
  std::string row_id;
};

// Throws kShape when x does not match the model, and kInvalidArgument for
// unknown names in `scale_groups` or the options.
ExplanationReport BuildReport(const model::MlpModel& model,
                              const data::FeatureSchema& schema,
                              std::span<const double> x,
                              const std::map<std::string, std::vector<std::string>>& scale_groups,
                              const ExplainOptions& options = {});

// Every rendered flip point is re-scored through `model`.
std::string RenderText(const ExplanationReport& report, const model::MlpModel& model,
                       size_t max_pairs = 10);

nlohmann::json RenderJson(const ExplanationReport& report);
// Throws kParse or kSchema.
ExplanationReport ParseReportJson(const nlohmann::json& j);

}  // namespace flipaudit::explain

#endif  // FLIPAUDIT_EXPLAIN_H_
