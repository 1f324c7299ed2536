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

#ifndef FLIPAUDIT_DEBIAS_H_
#define FLIPAUDIT_DEBIAS_H_

// Boundary-derived training data that counteracts a feature the model
// leans on, and before/after comparisons of the retrained model.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flipaudit/audit.h"
#include "flipaudit/data.h"
#include "flipaudit/flipsolve.h"
#include "flipaudit/model.h"
#include "json.hpp"

namespace flipaudit::debias {

enum class LabelMode {
  kSameLabel,  // Flip points keep their source row's label.
  kFlipLabel,  // Flip points are taught with target (1/2, 1/2).
};

std::string_view LabelModeName(LabelMode mode);
// Accepts "same-label" and "flip-label". Throws kInvalidArgument.
LabelMode ParseLabelMode(std::string_view name);

// Rows labelled `increase_label` qualify when their flip point has a
// larger value of `feature`; rows with the other label qualify when it
// has a smaller one.
struct SelectionRule {
  std::string feature;
  int increase_label = 1;
  LabelMode mode = LabelMode::kSameLabel;
};

struct SelectOptions {
  // Defaults to freeing `feature` alone.
  std::optional<flipsolve::FlipConstraint> constraint;
  flipsolve::SolverOptions solver;
  int threads = 1;
};

struct AugmentationPlan {
  SelectionRule rule;
  std::string constraint;  // Label of the constraint used for the flips.
  data::Dataset rows;      // Flip points with their training targets.
  std::vector<std::string> source_ids;
  size_t examined = 0;
  size_t flipped = 0;
  // Set when nothing qualifies.
  std::string warning;

  size_t size() const { return rows.size(); }
  nlohmann::json ToJson() const;
};

// Throws kInvalidArgument when `feature` is not a continuous feature.
AugmentationPlan SelectCounteractingFlips(const model::MlpModel& model,
                                          const data::Dataset& dataset,
                                          const SelectionRule& rule,
                                          const SelectOptions& options = {});

struct AugmentResult {
  data::Dataset augmented;
  model::TrainResult training;
};

// Trains a fresh model on dataset + plan rows with the given seed policy.
AugmentResult AugmentAndRetrain(const data::Dataset& dataset, const AugmentationPlan& plan,
                                const std::vector<size_t>& layer_sizes,
                                const model::TrainConfig& config);

struct ModelSummary {
  audit::InfluenceRanking ranking;
  std::vector<std::string> feature_names;
  std::vector<double> first_loadings;
  size_t feature_rank = 0;     // 1-based rank of the audited feature.
  size_t feature_pc_rank = 0;  // 1-based rank by |first-PC loading|.
  double feature_loading = 0.0;
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  size_t directions = 0;

  nlohmann::json ToJson() const;
};

// Ranking and first principal component of the flip directions of
// `model` on `audit_data`, plus accuracies.
ModelSummary Summarize(const model::MlpModel& model, const data::Dataset& audit_data,
                       const data::Dataset& test, const std::string& feature,
                       const audit::BuildOptions& options);

struct ComparisonBundle {
  std::string feature;
  AugmentationPlan plan;
  size_t original_rows = 0;
  size_t augmented_rows = 0;
  ModelSummary before;
  ModelSummary after;

  nlohmann::json ToJson() const;
};

std::string RenderText(const ComparisonBundle& bundle, size_t top = 12);

}  // namespace flipaudit::debias

#endif  // FLIPAUDIT_DEBIAS_H_
