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

#ifndef FLIPAUDIT_FLIPSOLVE_H_
#define FLIPAUDIT_FLIPSOLVE_H_

// Closest points on the decision boundary z1 = 1/2 of a two-class model,
// measured in the weighted norm of the feature schema.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flipaudit/data.h"
#include "flipaudit/model.h"
#include "json.hpp"

namespace flipaudit::flipsolve {

enum class FlipStatus {
  kConverged,
  kNoFlipExists,
  kMaxIterations,
  // Only discrete features move and some assignment changes the predicted
  // class, but no assignment sits on the boundary itself.
  kDecisionChanged,
};

std::string_view StatusName(FlipStatus status);
FlipStatus ParseStatus(std::string_view name);

// Which features may move. Names are continuous feature names or
// categorical group names; naming one level ("sex=Male") frees its group.
struct FlipConstraint {
  bool all = false;
  std::vector<std::string> free_features;
  // Integer-flagged features must take integer values.
  bool enforce_integer = false;
  bool respect_bounds = true;
  // Levels substituted into x for groups that are not free.
  std::map<std::string, std::string> fixed_levels;

  static FlipConstraint All();
  static FlipConstraint Only(std::vector<std::string> names);
  // "all" or a comma-separated list of names.
  static FlipConstraint Parse(std::string_view spec);
  // "all" or the names joined with '+'.
  std::string Label() const;
};

struct FlipResult {
  std::vector<double> flip_point;
  std::vector<double> direction;  // flip_point - x
  double distance = 0.0;          // Weighted norm of direction.
  double residual = 0.0;          // |z1(flip_point) - 1/2|
  FlipStatus status = FlipStatus::kNoFlipExists;
  size_t restarts_used = 0;
  size_t iterations = 0;

  bool converged() const { return status == FlipStatus::kConverged; }
  nlohmann::json ToJson() const;
  static FlipResult FromJson(const nlohmann::json& j);
};

struct SolverOptions {
  // Starts per continuous subproblem: x itself plus restarts - 1 Gaussian
  // perturbations.
  size_t restarts = 8;
  // Standard deviation of the perturbations in scaled units.
  double perturbation = 0.1;
  size_t max_iterations = 5000;
  uint64_t seed = 1;
  // Free categorical groups are enumerated exhaustively when the number
  // of level assignments is at most this; larger products use a local
  // search seeded by the one-hot relaxation.
  size_t exhaustive_limit = 256;
  // With strict_enumeration, products above this are rejected.
  size_t max_combinations = 10000;
  bool strict_enumeration = false;
  // Grid points used to bracket sign changes along one feature.
  size_t scan_points = 4000;
  int threads = 1;
};

struct PairFlip {
  std::string first;
  std::string second;
  FlipResult result;
};

class FlipSolver {
 public:
  // The schema supplies bounds, scale weights and one-hot groups. Throws
  // kShape when it does not match the model.
  FlipSolver(const model::MlpModel& model, const data::FeatureSchema& schema,
             SolverOptions options = {});

  const model::MlpModel& model() const { return *model_; }
  const data::FeatureSchema& schema() const { return *schema_; }
  const SolverOptions& options() const { return options_; }

  // Closest point with z1 = 1/2 when only the constrained features move.
  // Warm starts are extra starting points; any that already lies on the
  // boundary inside the constraint is also a candidate answer.
  FlipResult ClosestFlip(std::span<const double> x,
                         const FlipConstraint& constraint,
                         std::span<const std::vector<double>> warm_starts = {}) const;

  // Nearest sign change of z1 - 1/2 along one continuous feature, found by
  // an outward scan and bisection. Throws kInvalidArgument for one-hot
  // members.
  FlipResult Flip1d(std::span<const double> x, std::string_view feature) const;
  // Interval scanned by Flip1d: the feature bounds, or x +- 10 ranges on
  // unbounded sides (range = 1 / sqrt(scale_weight)).
  std::pair<double, double> ScanInterval(std::span<const double> x,
                                         size_t feature) const;

  // ClosestFlip with each unordered pair of `names` free (all raw features
  // when empty). Pair solves are warm-started from the single-feature
  // flips so a pair is never farther than either of its singles.
  std::vector<PairFlip> FlipPairsSweep(std::span<const double> x,
                                       std::vector<std::string> names = {}) const;

  // Integer version of a relaxed flip: integer-flagged free features take
  // values within +-2 of the relaxed ones and the remaining continuous
  // coordinates are re-solved.
  FlipResult Integerize(std::span<const double> x, const FlipResult& relaxed,
                        const FlipConstraint& constraint) const;

  // |z1(x) - 1/2|.
  double Residual(std::span<const double> x) const;

 private:
  struct Subproblem;
  struct Candidate;

  std::vector<double> Anchor(std::span<const double> x,
                             const FlipConstraint& constraint) const;
  Candidate SolveContinuous(const Subproblem& sub, size_t starts,
                            std::span<const std::vector<double>> warm) const;
  Candidate RunStart(const Subproblem& sub, std::vector<double> u) const;
  Candidate Scan1d(const Subproblem& sub) const;
  Candidate Evaluate(const Subproblem& sub) const;
  Candidate SolveAssignment(const Subproblem& sub, size_t starts,
                            std::span<const std::vector<double>> warm) const;
  FlipResult Finish(std::span<const double> x, const Candidate& c) const;

  const model::MlpModel* model_;
  const data::FeatureSchema* schema_;
  SolverOptions options_;
  std::vector<double> sqrt_w_;
};

}  // namespace flipaudit::flipsolve

#endif  // FLIPAUDIT_FLIPSOLVE_H_
