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

#include "flipaudit/debias.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::debias {
namespace {

using flipsolve::FlipResult;
using nlohmann::json;

std::string Percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

}  // namespace

std::string_view LabelModeName(LabelMode mode) {
  return mode == LabelMode::kSameLabel ? "same-label" : "flip-label";
}

LabelMode ParseLabelMode(std::string_view name) {
  if (name == "same-label") return LabelMode::kSameLabel;
  if (name == "flip-label") return LabelMode::kFlipLabel;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown label mode '" + std::string(name) + "' (same-label or flip-label)");
}

json AugmentationPlan::ToJson() const {
  return {{"feature", rule.feature},
          {"increase_label", rule.increase_label},
          {"label_mode", LabelModeName(rule.mode)},
          {"constraint", constraint},
          {"examined", examined},
          {"flipped", flipped},
          {"selected", size()},
          {"source_ids", source_ids},
          {"warning", warning}};
}

AugmentationPlan SelectCounteractingFlips(const model::MlpModel& model,
                                          const data::Dataset& dataset,
                                          const SelectionRule& rule,
                                          const SelectOptions& options) {
  const auto& schema = dataset.schema;
  const auto index = schema.FeatureIndex(rule.feature);
  if (!index || schema.feature(*index).kind != data::FeatureKind::kContinuous) {
    throw Error(ErrorCode::kInvalidArgument,
                "'" + rule.feature + "' is not a continuous feature");
  }
  if (rule.increase_label != 0 && rule.increase_label != 1) {
    throw Error(ErrorCode::kInvalidArgument, "increase_label must be 0 or 1");
  }
  const flipsolve::FlipSolver solver(model, schema, options.solver);
  const bool along_feature = !options.constraint.has_value();
  std::vector<FlipResult> flips(dataset.size());
  ParallelFor(dataset.size(), options.threads, [&](size_t r) {
    flips[r] = along_feature ? solver.Flip1d(dataset.row(r), rule.feature)
                             : solver.ClosestFlip(dataset.row(r), *options.constraint);
  });

  AugmentationPlan plan;
  plan.rule = rule;
  plan.constraint = along_feature ? rule.feature : options.constraint->Label();
  plan.examined = dataset.size();
  plan.rows.schema = schema;
  plan.rows.features = linalg::Matrix(0, schema.size());
  for (size_t r = 0; r < dataset.size(); ++r) {
    if (!flips[r].converged()) continue;
    ++plan.flipped;
    const double delta = flips[r].flip_point[*index] - dataset.row(r)[*index];
    const int label = dataset.Label(r);
    const bool qualifies =
        label == rule.increase_label ? delta > 0.0 : delta < 0.0;
    if (!qualifies) continue;
    plan.rows.features.AppendRow(flips[r].flip_point);
    plan.rows.targets.push_back(rule.mode == LabelMode::kSameLabel ? data::HardTarget(label)
                                                                   : data::Target{0.5, 0.5});
    plan.rows.row_ids.push_back(dataset.row_ids[r] + "~flip");
    plan.source_ids.push_back(dataset.row_ids[r]);
  }
  if (plan.size() == 0) {
    plan.warning = "no row has a counteracting flip along '" + rule.feature + "'";
  }
  return plan;
}

AugmentResult AugmentAndRetrain(const data::Dataset& dataset, const AugmentationPlan& plan,
                                const std::vector<size_t>& layer_sizes,
                                const model::TrainConfig& config) {
  AugmentResult out;
  out.augmented = plan.size() == 0 ? dataset : data::Concat(dataset, plan.rows);
  out.training = model::Train(out.augmented, layer_sizes, config);
  return out;
}

json ModelSummary::ToJson() const {
  json loadings = json::array();
  for (size_t i = 0; i < feature_names.size(); ++i) {
    loadings.push_back({{"feature", feature_names[i]}, {"loading", first_loadings[i]}});
  }
  return {{"ranking", ranking.ToJson()},
          {"first_component", loadings},
          {"feature_rank", feature_rank},
          {"feature_pc_rank", feature_pc_rank},
          {"feature_loading", feature_loading},
          {"test_accuracy", test_accuracy},
          {"train_accuracy", train_accuracy},
          {"directions", directions}};
}

ModelSummary Summarize(const model::MlpModel& model, const data::Dataset& audit_data,
                       const data::Dataset& test, const std::string& feature,
                       const audit::BuildOptions& options) {
  const auto index = audit_data.schema.FeatureIndex(feature);
  if (!index) throw Error(ErrorCode::kInvalidArgument, "unknown feature '" + feature + "'");
  const audit::DirectionMatrix dirs = audit::BuildDirections(model, audit_data, options);
  ModelSummary s;
  s.directions = dirs.size();
  s.ranking = audit::RankInfluence(dirs);
  s.feature_rank = s.ranking.RankOf(feature);
  if (dirs.size() >= 2) {
    const audit::PcaSummary pca = audit::PcaDirections(dirs);
    s.feature_names = pca.feature_names;
    s.first_loadings = pca.first_loadings;
    s.feature_loading = pca.first_loadings[*index];
    s.feature_pc_rank = 1;
    for (double v : pca.first_loadings) {
      s.feature_pc_rank += std::abs(v) > std::abs(s.feature_loading);
    }
  }
  s.train_accuracy = model::Accuracy(model, audit_data);
  s.test_accuracy = test.size() == 0 ? 0.0 : model::Accuracy(model, test);
  return s;
}

json ComparisonBundle::ToJson() const {
  return {{"feature", feature},
          {"plan", plan.ToJson()},
          {"original_rows", original_rows},
          {"augmented_rows", augmented_rows},
          {"before", before.ToJson()},
          {"after", after.ToJson()}};
}

std::string RenderText(const ComparisonBundle& bundle, size_t top) {
  std::ostringstream out;
  out << "Counteracting flips along " << bundle.feature << ": " << bundle.plan.size()
      << " selected of " << bundle.plan.examined << " rows (" << bundle.plan.flipped
      << " flipped), " << LabelModeName(bundle.plan.rule.mode) << "\n";
  if (!bundle.plan.warning.empty()) out << "warning: " << bundle.plan.warning << "\n";
  out << "training rows " << bundle.original_rows << " -> " << bundle.augmented_rows << "\n\n";
  out << "                     before      after\n";
  char line[160];
  std::snprintf(line, sizeof(line), "influence rank   %10zu %10zu\n", bundle.before.feature_rank,
                bundle.after.feature_rank);
  out << line;
  std::snprintf(line, sizeof(line), "first-PC rank    %10zu %10zu\n",
                bundle.before.feature_pc_rank, bundle.after.feature_pc_rank);
  out << line;
  std::snprintf(line, sizeof(line), "first-PC loading %10.4f %10.4f\n",
                bundle.before.feature_loading, bundle.after.feature_loading);
  out << line;
  out << "test accuracy    " << std::string(10 - Percent(bundle.before.test_accuracy).size(), ' ')
      << Percent(bundle.before.test_accuracy) << " "
      << std::string(10 - Percent(bundle.after.test_accuracy).size(), ' ')
      << Percent(bundle.after.test_accuracy) << "\n\n";
  out << "Influence ranking before / after\n";
  const size_t n = std::max(bundle.before.ranking.features.size(),
                            bundle.after.ranking.features.size());
  for (size_t i = 0; i < n && i < top; ++i) {
    auto at = [i](const audit::InfluenceRanking& r) {
      return i < r.features.size() ? r.features[i] : std::string();
    };
    std::snprintf(line, sizeof(line), "  %2zu. %-28s %s\n", i + 1, at(bundle.before.ranking).c_str(),
                  at(bundle.after.ranking).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace flipaudit::debias
