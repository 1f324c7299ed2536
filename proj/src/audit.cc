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

#include "flipaudit/audit.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::audit {
namespace {

using flipsolve::FlipResult;
using flipsolve::FlipStatus;
using linalg::Matrix;
using nlohmann::json;

std::vector<size_t> SampleRows(size_t n, size_t max_rows, uint64_t seed) {
  std::vector<size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (max_rows == 0 || max_rows >= n) return rows;
  Rng rng(seed);
  rng.Shuffle(rows);
  rows.resize(max_rows);
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<FlipResult> SolveAll(const flipsolve::FlipSolver& solver,
                                 const data::Dataset& dataset,
                                 const std::vector<size_t>& rows,
                                 const BuildOptions& options) {
  std::vector<FlipResult> flips(rows.size());
  ParallelFor(rows.size(), options.threads, [&](size_t k) {
    flips[k] = solver.ClosestFlip(dataset.row(rows[k]), options.constraint);
  });
  return flips;
}

DirectionMatrix Assemble(const model::MlpModel& model, const data::Dataset& dataset,
                         const std::vector<size_t>& rows,
                         const std::vector<FlipResult>& flips) {
  DirectionMatrix dirs;
  dirs.feature_names = dataset.schema.FeatureNames();
  dirs.scale_weights = dataset.schema.ScaleWeights();
  const size_t d = dataset.schema.size();
  dirs.inputs = Matrix(0, d);
  dirs.flip_points = Matrix(0, d);
  dirs.directions = Matrix(0, d);
  for (size_t k = 0; k < rows.size(); ++k) {
    const size_t r = rows[k];
    DirectionRow info;
    info.row_id = dataset.row_ids[r];
    info.label = dataset.Label(r);
    info.predicted = model.Predict(dataset.row(r));
    info.correct = info.label == info.predicted;
    info.status = flips[k].status;
    info.distance = flips[k].distance;
    if (flips[k].status != FlipStatus::kConverged) {
      dirs.excluded.push_back(info);
      continue;
    }
    dirs.inputs.AppendRow(dataset.row(r));
    dirs.flip_points.AppendRow(flips[k].flip_point);
    std::vector<double> f(d);
    for (size_t c = 0; c < d; ++c) f[c] = flips[k].flip_point[c] - dataset.row(r)[c];
    dirs.directions.AppendRow(f);
    dirs.rows.push_back(info);
  }
  return dirs;
}

Matrix Scaled(const DirectionMatrix& dirs) {
  Matrix f = dirs.directions;
  for (size_t r = 0; r < f.rows(); ++r) {
    auto row = f.row(r);
    for (size_t c = 0; c < row.size(); ++c) row[c] *= std::sqrt(dirs.scale_weights[c]);
  }
  return f;
}

std::string Fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

json NumberOrNull(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

// ---------------------------------------------------------------------------
// DirectionMatrix

double DirectionMatrix::coverage() const {
  const size_t total = rows.size() + excluded.size();
  return total == 0 ? 0.0 : static_cast<double>(rows.size()) / static_cast<double>(total);
}

DirectionMatrix DirectionMatrix::Filter(
    const std::function<bool(const DirectionRow&)>& keep) const {
  DirectionMatrix out;
  out.feature_names = feature_names;
  out.scale_weights = scale_weights;
  const size_t d = feature_names.size();
  out.inputs = Matrix(0, d);
  out.flip_points = Matrix(0, d);
  out.directions = Matrix(0, d);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (!keep(rows[r])) continue;
    out.inputs.AppendRow(inputs.row(r));
    out.flip_points.AppendRow(flip_points.row(r));
    out.directions.AppendRow(directions.row(r));
    out.rows.push_back(rows[r]);
  }
  for (const auto& e : excluded) {
    if (keep(e)) out.excluded.push_back(e);
  }
  return out;
}

DirectionMatrix DirectionMatrix::Correct(bool correct) const {
  return Filter([correct](const DirectionRow& r) { return r.correct == correct; });
}

DirectionMatrix DirectionMatrix::Orientation(int from_class) const {
  return Filter([from_class](const DirectionRow& r) { return r.predicted == from_class; });
}

json DirectionMatrix::ToJson() const {
  json rows_json = json::array();
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto& info = rows[r];
    rows_json.push_back({{"row_id", info.row_id},
                         {"label", info.label},
                         {"predicted", info.predicted},
                         {"correct", info.correct},
                         {"status", flipsolve::StatusName(info.status)},
                         {"distance", info.distance},
                         {"direction", std::vector<double>(directions.row(r).begin(),
                                                           directions.row(r).end())}});
  }
  json excluded_json = json::array();
  for (const auto& info : excluded) {
    excluded_json.push_back({{"row_id", info.row_id},
                             {"status", flipsolve::StatusName(info.status)}});
  }
  return {{"feature_names", feature_names},
          {"coverage", coverage()},
          {"rows", rows_json},
          {"excluded", excluded_json}};
}

DirectionMatrix BuildDirections(const model::MlpModel& model,
                                const data::Dataset& dataset,
                                const BuildOptions& options) {
  model.CheckSchema(dataset.schema);
  const flipsolve::FlipSolver solver(model, dataset.schema, options.solver);
  const auto rows = SampleRows(dataset.size(), options.max_rows, options.seed);
  return Assemble(model, dataset, rows, SolveAll(solver, dataset, rows, options));
}

// ---------------------------------------------------------------------------
// Influence ranking

size_t InfluenceRanking::RankOf(const std::string& feature) const {
  const auto it = std::find(features.begin(), features.end(), feature);
  return it == features.end() ? 0 : static_cast<size_t>(it - features.begin()) + 1;
}

json InfluenceRanking::ToJson() const {
  json items = json::array();
  for (size_t i = 0; i < features.size(); ++i) {
    items.push_back({{"feature", features[i]}, {"pivot", pivots[i]}});
  }
  return {{"ranking", items},
          {"zero_influence", zero_influence},
          {"numerical_rank", numerical_rank},
          {"rank_deficient", rank_deficient}};
}

InfluenceRanking RankInfluence(const DirectionMatrix& dirs, double tol) {
  if (dirs.size() == 0 || dirs.feature_names.empty()) {
    throw Error(ErrorCode::kDegenerateInput, "no flip directions to rank");
  }
  const Matrix f = Scaled(dirs);
  const double total = f.FrobeniusNorm();
  InfluenceRanking out;
  for (size_t c = 0; c < f.cols(); ++c) {
    double norm = 0.0;
    for (size_t r = 0; r < f.rows(); ++r) norm += f(r, c) * f(r, c);
    if (std::sqrt(norm) <= 1e-10 * total) out.zero_influence.push_back(dirs.feature_names[c]);
  }
  if (total == 0.0) {
    out.features = dirs.feature_names;
    out.pivots.assign(out.features.size(), 0.0);
    out.rank_deficient = true;
    return out;
  }
  const linalg::PivotedQr qr = linalg::ComputePivotedQr(f);
  const size_t k = std::min(qr.r.rows(), qr.r.cols());
  for (size_t j = 0; j < qr.permutation.size(); ++j) {
    out.features.push_back(dirs.feature_names[qr.permutation[j]]);
    out.pivots.push_back(j < k ? std::abs(qr.r(j, j)) : 0.0);
  }
  out.numerical_rank = linalg::NumericalRankFromQr(qr, tol);
  out.rank_deficient = out.numerical_rank < f.cols();
  return out;
}

// ---------------------------------------------------------------------------
// PCA

json PcaSummary::ToJson(size_t top) const {
  std::vector<size_t> order(first_loadings.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(first_loadings[a]) > std::abs(first_loadings[b]);
  });
  if (top > 0 && order.size() > top) order.resize(top);
  json loadings = json::array();
  for (size_t i : order) {
    loadings.push_back({{"feature", feature_names[i]}, {"loading", first_loadings[i]}});
  }
  size_t positive = 0;
  for (double p : projections) positive += p > 0.0;
  return {{"explained_variance", pca.explained_variance},
          {"first_component", loadings},
          {"positive_projections", positive},
          {"rows", projections.size()}};
}

PcaSummary PcaDirections(const DirectionMatrix& dirs) {
  const Matrix f = Scaled(dirs);
  PcaSummary out;
  out.pca = linalg::ComputePca(f);
  out.feature_names = dirs.feature_names;
  auto first = out.pca.components.row(0);
  std::vector<double> proj(f.rows());
  size_t positive = 0;
  size_t negative = 0;
  for (size_t r = 0; r < f.rows(); ++r) {
    double s = 0.0;
    for (size_t c = 0; c < f.cols(); ++c) s += f(r, c) * first[c];
    proj[r] = s;
    positive += s > 0.0;
    negative += s < 0.0;
  }
  if (negative > positive) {
    for (double& v : first) v = -v;
    for (double& p : proj) p = -p;
  }
  out.first_loadings.assign(first.begin(), first.end());
  out.projections = std::move(proj);
  return out;
}

// ---------------------------------------------------------------------------
// Change frequency

json FeatureFrequency::ToJson() const {
  json j = {{"feature", name},
            {"categorical", categorical},
            {"fraction", fraction},
            {"changed", changed}};
  if (categorical) {
    j["entered"] = entered;
    j["exited"] = exited;
    j["most_common_entry"] = most_common_entry;
    j["most_common_exit"] = most_common_exit;
  } else {
    j["increased"] = increased;
    j["decreased"] = decreased;
  }
  return j;
}

std::vector<FeatureFrequency> ChangeFrequency(const DirectionMatrix& dirs,
                                              const data::FeatureSchema& schema,
                                              double default_threshold,
                                              const std::map<std::string, double>& thresholds) {
  if (!(default_threshold >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "change threshold must be >= 0");
  }
  for (const auto& [name, t] : thresholds) {
    if (!(t >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "threshold of '" + name + "' must be >= 0");
    }
  }
  if (dirs.feature_names != schema.FeatureNames()) {
    throw Error(ErrorCode::kShape, "direction matrix does not match the schema");
  }
  const size_t n = dirs.size();
  std::vector<FeatureFrequency> out;
  for (const auto& raw : schema.raw_features()) {
    FeatureFrequency f;
    f.name = raw.name;
    f.categorical = raw.categorical;
    if (!raw.categorical) {
      const auto it = thresholds.find(raw.name);
      const double t = it == thresholds.end() ? default_threshold : it->second;
      const double sw = std::sqrt(schema.feature(raw.index).scale_weight);
      for (size_t r = 0; r < n; ++r) {
        const double delta = dirs.directions(r, raw.index);
        if (sw * std::abs(delta) > t) {
          ++f.changed;
          (delta > 0 ? f.increased : f.decreased)++;
        }
      }
    } else {
      const auto& g = schema.groups()[raw.index];
      auto active = [&](std::span<const double> row) {
        size_t best = 0;
        for (size_t k = 1; k < g.members.size(); ++k) {
          if (row[g.members[k]] > row[g.members[best]]) best = k;
        }
        return best;
      };
      for (size_t r = 0; r < n; ++r) {
        const size_t from = active(dirs.inputs.row(r));
        const size_t to = active(dirs.flip_points.row(r));
        if (from == to) continue;
        ++f.changed;
        ++f.exited[g.levels[from]];
        ++f.entered[g.levels[to]];
      }
      auto most = [](const std::map<std::string, size_t>& m) {
        std::string best;
        size_t count = 0;
        for (const auto& [k, v] : m) {
          if (v > count) {
            best = k;
            count = v;
          }
        }
        return best;
      };
      f.most_common_entry = most(f.entered);
      f.most_common_exit = most(f.exited);
    }
    f.fraction = n == 0 ? 0.0 : static_cast<double>(f.changed) / static_cast<double>(n);
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proximity

json ProximitySummary::ToJson() const {
  return {{"correct", correct},
          {"misclassified", misclassified},
          {"median_distance_correct", median_correct},
          {"median_distance_misclassified", median_misclassified}};
}

ProximitySummary Proximity(const DirectionMatrix& dirs) {
  std::vector<double> good, bad;
  for (const auto& r : dirs.rows) (r.correct ? good : bad).push_back(r.distance);
  ProximitySummary s;
  s.correct = good.size();
  s.misclassified = bad.size();
  s.median_correct = good.empty() ? 0.0 : Median(good);
  s.median_misclassified = bad.empty() ? 0.0 : Median(bad);
  return s;
}

// ---------------------------------------------------------------------------
// Swap audit

json SwapReport::ToJson() const {
  json j = {{"feature", feature},
            {"rows", rows},
            {"changed", changed},
            {"changed_fraction", changed_fraction},
            {"compared", compared},
            {"mean_distance_change", mean_distance_change},
            {"median_distance_change", median_distance_change}};
  if (ranking) j["ranking"] = ranking->ToJson();
  if (pca) j["pca"] = pca->ToJson(10);
  return j;
}

SwapReport SwapBinaryAudit(const model::MlpModel& model, const data::Dataset& dataset,
                           const std::string& feature, const BuildOptions& options) {
  model.CheckSchema(dataset.schema);
  const auto rows = SampleRows(dataset.size(), options.max_rows, options.seed);
  const data::Dataset base = data::Subset(dataset, rows);
  const data::Dataset swapped = data::FlipBinaryFeature(base, feature);
  const flipsolve::FlipSolver solver(model, dataset.schema, options.solver);

  std::vector<size_t> all(base.size());
  std::iota(all.begin(), all.end(), 0);
  SwapReport report;
  report.feature = feature;
  report.rows = base.size();
  for (size_t r = 0; r < base.size(); ++r) {
    report.baseline_predictions.push_back(model.Predict(base.row(r)));
    report.swapped_predictions.push_back(model.Predict(swapped.row(r)));
  }
  const auto flips = SolveAll(solver, base, all, options);
  const auto swapped_flips = SolveAll(solver, swapped, all, options);

  std::vector<size_t> changed_rows;
  std::vector<double> deltas;
  for (size_t r = 0; r < base.size(); ++r) {
    if (report.baseline_predictions[r] != report.swapped_predictions[r]) {
      changed_rows.push_back(r);
      continue;
    }
    if (flips[r].converged() && swapped_flips[r].converged()) {
      deltas.push_back(swapped_flips[r].distance - flips[r].distance);
    }
  }
  report.changed = changed_rows.size();
  report.changed_fraction =
      base.size() == 0 ? 0.0
                       : static_cast<double>(report.changed) / static_cast<double>(base.size());
  report.compared = deltas.size();
  if (!deltas.empty()) {
    report.mean_distance_change =
        std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
    report.median_distance_change = Median(deltas);
  }
  if (!changed_rows.empty()) {
    std::vector<FlipResult> changed_flips;
    for (size_t r : changed_rows) changed_flips.push_back(flips[r]);
    const DirectionMatrix dirs = Assemble(model, base, changed_rows, changed_flips);
    if (dirs.size() >= 1) report.ranking = RankInfluence(dirs);
    if (dirs.size() >= 2) report.pca = PcaDirections(dirs);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Redundant features

json RedundancyReport::ToJson() const {
  json items = json::array();
  for (size_t i = 0; i < order.size(); ++i) {
    items.push_back({{"feature", order[i]}, {"relative_pivot", pivots[i]}});
  }
  return {{"ordering", items},
          {"numerical_rank", numerical_rank},
          {"condition_before", NumberOrNull(condition_before)},
          {"suggested_drops", suggested_drops},
          {"condition_after", NumberOrNull(condition_after)}};
}

RedundancyReport RankRedundant(const data::Dataset& dataset, double tol,
                               size_t drop_count) {
  if (dataset.size() == 0) throw Error(ErrorCode::kDegenerateInput, "dataset is empty");
  const Matrix& d = dataset.features;
  RedundancyReport out;
  out.condition_before = linalg::ConditionNumber(d);
  Matrix unit = d;
  for (size_t c = 0; c < unit.cols(); ++c) {
    double norm = 0.0;
    for (size_t r = 0; r < unit.rows(); ++r) norm += unit(r, c) * unit(r, c);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (size_t r = 0; r < unit.rows(); ++r) unit(r, c) /= norm;
  }
  const linalg::PivotedQr qr = linalg::ComputePivotedQr(unit);
  const size_t k = std::min(qr.r.rows(), qr.r.cols());
  const double r00 = std::abs(qr.r(0, 0));
  const auto names = dataset.schema.FeatureNames();
  for (size_t j = 0; j < qr.permutation.size(); ++j) {
    out.order.push_back(names[qr.permutation[j]]);
    out.pivots.push_back(j < k && r00 > 0 ? std::abs(qr.r(j, j)) / r00 : 0.0);
  }
  out.numerical_rank = linalg::NumericalRankFromQr(qr, tol);
  // Trailing continuous columns; one-hot members cannot be dropped alone.
  std::vector<std::string> tail;
  for (size_t j = qr.permutation.size(); j-- > 0;) {
    const auto& f = dataset.schema.feature(qr.permutation[j]);
    if (f.kind != data::FeatureKind::kContinuous) continue;
    if (drop_count > 0 ? tail.size() < drop_count : j >= out.numerical_rank) {
      tail.push_back(f.name);
    }
  }
  out.suggested_drops = tail;
  out.condition_after = out.condition_before;
  if (!tail.empty() && tail.size() < dataset.schema.size()) {
    out.condition_after = linalg::ConditionNumber(data::DropFeatures(dataset, tail).features);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text rendering

std::string RenderText(const InfluenceRanking& ranking, size_t top) {
  std::ostringstream out;
  out << "Influence ranking (pivoted QR of flip directions)\n";
  for (size_t i = 0; i < ranking.features.size() && i < top; ++i) {
    out << "  " << (i + 1) << ". " << ranking.features[i] << "  (pivot "
        << Fixed(ranking.pivots[i], 4) << ")\n";
  }
  out << "  numerical rank " << ranking.numerical_rank << " of " << ranking.features.size()
      << (ranking.rank_deficient ? " (rank deficient)" : "") << "\n";
  if (!ranking.zero_influence.empty()) {
    out << "  no influence:";
    for (const auto& f : ranking.zero_influence) out << " " << f;
    out << "\n";
  }
  return out.str();
}

std::string RenderText(const PcaSummary& pca, size_t top) {
  std::ostringstream out;
  std::vector<size_t> order(pca.first_loadings.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(pca.first_loadings[a]) > std::abs(pca.first_loadings[b]);
  });
  double total = 0.0;
  for (double v : pca.pca.explained_variance) total += v;
  const double share = total > 0 ? pca.pca.explained_variance[0] / total : 0.0;
  out << "First principal component of flip directions (" << Fixed(100.0 * share, 1)
      << "% of variance)\n";
  for (size_t i = 0; i < order.size() && i < top; ++i) {
    const double v = pca.first_loadings[order[i]];
    out << "  " << (v >= 0 ? "+" : "-") << Fixed(std::abs(v), 3) << "  "
        << pca.feature_names[order[i]] << "\n";
  }
  return out.str();
}

std::string RenderText(const std::vector<FeatureFrequency>& freq) {
  std::ostringstream out;
  out << "Change frequency between inputs and flip points\n";
  for (const auto& f : freq) {
    out << "  " << f.name << ": " << Fixed(100.0 * f.fraction, 1) << "%";
    if (f.categorical) {
      if (f.changed > 0) {
        out << " (most often entering " << f.most_common_entry << ", leaving "
            << f.most_common_exit << ")";
      }
    } else if (f.changed > 0) {
      out << " (" << f.increased << " up, " << f.decreased << " down)";
    }
    out << "\n";
  }
  return out.str();
}

std::string RenderText(const SwapReport& swap) {
  std::ostringstream out;
  out << "Swapping " << swap.feature << " on " << swap.rows << " rows\n";
  out << "  predicted class changed for " << swap.changed << " rows ("
      << Fixed(100.0 * swap.changed_fraction, 2) << "%)\n";
  out << "  distance to the boundary over " << swap.compared << " unchanged rows: mean change "
      << Fixed(swap.mean_distance_change, 6) << ", median change "
      << Fixed(swap.median_distance_change, 6) << "\n";
  if (swap.ranking) out << RenderText(*swap.ranking, 5);
  if (swap.pca) out << RenderText(*swap.pca, 5);
  return out.str();
}

std::string RenderText(const RedundancyReport& report) {
  std::ostringstream out;
  out << "Pivoted QR ordering (most independent first)\n";
  for (size_t i = 0; i < report.order.size(); ++i) {
    out << "  " << (i + 1) << ". " << report.order[i] << "  " << report.pivots[i] << "\n";
  }
  out << "numerical rank " << report.numerical_rank << " of " << report.order.size() << "\n";
  out << "condition number " << Fixed(report.condition_before, 2) << "\n";
  if (!report.suggested_drops.empty()) {
    out << "suggested drops:";
    for (const auto& f : report.suggested_drops) out << " " << f;
    out << "\ncondition number after dropping " << Fixed(report.condition_after, 2) << "\n";
  }
  return out.str();
}

}  // namespace flipaudit::audit
