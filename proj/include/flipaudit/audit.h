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

#ifndef FLIPAUDIT_AUDIT_H_
#define FLIPAUDIT_AUDIT_H_

// Group-level analysis of flip directions: the matrix F = B - D of
// directions from inputs to their flip points, the feature ranking read off
// its pivoted QR, its principal components, per-feature change frequencies
// and the binary-feature swap audit.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/data.h"
#include "flipaudit/flipsolve.h"
#include "flipaudit/linalg.h"
#include "flipaudit/model.h"
#include "json.hpp"

namespace flipaudit::audit {

// Provenance of one row of a direction matrix.
struct DirectionRow {
  std::string row_id;
  int label = 0;
  int predicted = 0;
  bool correct = true;
  flipsolve::FlipStatus status = flipsolve::FlipStatus::kConverged;
  double distance = 0.0;
};

struct DirectionMatrix {
  std::vector<std::string> feature_names;
  std::vector<double> scale_weights;
  linalg::Matrix inputs;       // D
  linalg::Matrix flip_points;  // B
  linalg::Matrix directions;   // F = B - D
  std::vector<DirectionRow> rows;
  // Inputs whose flip did not converge; not part of the matrices.
  std::vector<DirectionRow> excluded;

  size_t size() const { return rows.size(); }
  // Converged rows over all attempted rows.
  double coverage() const;

  DirectionMatrix Filter(const std::function<bool(const DirectionRow&)>& keep) const;
  DirectionMatrix Correct(bool correct) const;
  // Rows predicted as `from_class`, i.e. flips from that class to the other.
  DirectionMatrix Orientation(int from_class) const;

  nlohmann::json ToJson() const;
};

struct BuildOptions {
  flipsolve::FlipConstraint constraint = flipsolve::FlipConstraint::All();
  flipsolve::SolverOptions solver;
  int threads = 1;
  // Random subset of at most this many rows (0 keeps every row).
  size_t max_rows = 0;
  uint64_t seed = 1;
};

// Flip points for the rows of `dataset` (or a seeded sample of them).
DirectionMatrix BuildDirections(const model::MlpModel& model,
                                const data::Dataset& dataset,
                                const BuildOptions& options);

struct InfluenceRanking {
  std::vector<std::string> features;  // Most influential first.
  std::vector<double> pivots;         // |R(j, j)| per ranked feature.
  std::vector<std::string> zero_influence;
  size_t numerical_rank = 0;
  bool rank_deficient = false;

  // 1-based position of `feature`, or 0 when absent.
  size_t RankOf(const std::string& feature) const;
  nlohmann::json ToJson() const;
};

// Pivoted QR of F with column j scaled by sqrt(scale_weight_j). Throws
// kDegenerateInput for an empty matrix.
InfluenceRanking RankInfluence(const DirectionMatrix& dirs,
                               double tol = linalg::kDefaultRankTolerance);

struct PcaSummary {
  linalg::PcaResult pca;
  std::vector<std::string> feature_names;
  // First component (scaled units), oriented so that most rows of F project
  // onto it positively.
  std::vector<double> first_loadings;
  // Projection of each (uncentred, scaled) row of F on the first component.
  std::vector<double> projections;

  nlohmann::json ToJson(size_t top = 0) const;
};

// Throws kDegenerateInput for fewer than two rows.
PcaSummary PcaDirections(const DirectionMatrix& dirs);

struct FeatureFrequency {
  std::string name;
  bool categorical = false;
  double fraction = 0.0;
  size_t changed = 0;
  size_t increased = 0;
  size_t decreased = 0;
  // Categorical groups: level counts among changed rows.
  std::map<std::string, size_t> entered;
  std::map<std::string, size_t> exited;
  std::string most_common_entry;
  std::string most_common_exit;

  nlohmann::json ToJson() const;
};

// Per raw feature, the fraction of rows whose value moved by more than the
// threshold (scaled units) between input and flip point; for categorical
// groups, the fraction whose active level changed.
std::vector<FeatureFrequency> ChangeFrequency(
    const DirectionMatrix& dirs, const data::FeatureSchema& schema,
    double default_threshold = 1e-3,
    const std::map<std::string, double>& thresholds = {});

// Flip distances of correctly classified and misclassified rows.
struct ProximitySummary {
  size_t correct = 0;
  size_t misclassified = 0;
  double median_correct = 0.0;
  double median_misclassified = 0.0;

  nlohmann::json ToJson() const;
};
ProximitySummary Proximity(const DirectionMatrix& dirs);

struct SwapReport {
  std::string feature;
  size_t rows = 0;
  size_t changed = 0;
  double changed_fraction = 0.0;
  // Signed change of flip distance (swapped minus original) over rows
  // whose class did not change and whose flips converged on both sides.
  size_t compared = 0;
  double mean_distance_change = 0.0;
  double median_distance_change = 0.0;
  std::vector<int> baseline_predictions;
  std::vector<int> swapped_predictions;
  // Over the flip directions of rows whose class changed.
  std::optional<InfluenceRanking> ranking;
  std::optional<PcaSummary> pca;

  nlohmann::json ToJson() const;
};

SwapReport SwapBinaryAudit(const model::MlpModel& model,
                           const data::Dataset& dataset,
                           const std::string& feature,
                           const BuildOptions& options);

// Pivoted-QR ordering of the columns of a data matrix, used to find
// redundant features.
struct RedundancyReport {
  std::vector<std::string> order;  // Most independent first.
  std::vector<double> pivots;      // |R(j, j)| / |R(0, 0)| on unit-norm columns.
  size_t numerical_rank = 0;
  double condition_before = 0.0;
  std::vector<std::string> suggested_drops;
  double condition_after = 0.0;

  nlohmann::json ToJson() const;
};

// Condition numbers use the raw encoded matrix. Suggested drops are the
// trailing continuous columns beyond the numerical rank, or the last
// `drop_count` continuous columns of the ordering when it is non-zero.
RedundancyReport RankRedundant(const data::Dataset& dataset,
                               double tol = linalg::kDefaultRankTolerance,
                               size_t drop_count = 0);

std::string RenderText(const InfluenceRanking& ranking, size_t top = 10);
std::string RenderText(const PcaSummary& pca, size_t top = 10);
std::string RenderText(const std::vector<FeatureFrequency>& freq);
std::string RenderText(const SwapReport& swap);
std::string RenderText(const RedundancyReport& report);

}  // namespace flipaudit::audit

#endif  // FLIPAUDIT_AUDIT_H_
