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

// Acceptance suite. Each criterion prints one line "ACn PASS|FAIL|SKIP: ..."
// and the process exits non-zero when any selected criterion fails.
//
// Usage: acceptance [AC1 ... AC11 | all]
//
// Trained dataset models are cached under FLIPAUDIT_CACHE_DIR so that the
// criteria can run as separate processes without retraining each time. AC7
// always trains from scratch because it measures accuracy and runtime.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flipaudit/audit.h"
#include "flipaudit/data.h"
#include "flipaudit/debias.h"
#include "flipaudit/error.h"
#include "flipaudit/explain.h"
#include "flipaudit/flipsolve.h"
#include "flipaudit/linalg.h"
#include "flipaudit/model.h"
#include "flipaudit/util.h"

namespace flipaudit {
namespace {

namespace fs = std::filesystem;
using flipsolve::FlipConstraint;
using flipsolve::FlipResult;
using flipsolve::FlipSolver;
using flipsolve::FlipStatus;
using linalg::Matrix;
using model::MlpModel;

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome Check(bool ok, const std::string& detail) {
  return {ok ? Verdict::kPass : Verdict::kFail, detail};
}

class Clock {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename... Args>
std::string Str(const Args&... args) {
  std::ostringstream s;
  s << std::setprecision(4);
  (s << ... << args);
  return s.str();
}

std::string DataPath(const std::string& name) {
  return std::string(FLIPAUDIT_DATA_DIR) + "/" + name;
}

// ---------------------------------------------------------------------------
// Shipped datasets and their models.

const std::vector<size_t> kAdultHidden = {40, 32, 24, 20, 16, 14};
const std::vector<size_t> kCreditHidden = {14, 9, 8, 8, 7};

std::vector<size_t> Layers(size_t inputs, const std::vector<size_t>& hidden) {
  std::vector<size_t> layers = {inputs};
  layers.insert(layers.end(), hidden.begin(), hidden.end());
  layers.push_back(2);
  return layers;
}

struct Split {
  data::Dataset train;
  data::Dataset test;
};

Split AdultData() {
  Split s;
  s.train = data::LoadCsv(DataPath("adult_train.csv"), DataPath("adult.schema.json"));
  s.test = data::LoadCsv(DataPath("adult_test.csv"), DataPath("adult.schema.json"));
  s.train.schema = data::FitScaleWeights(s.train);
  s.test.schema = s.train.schema;
  return s;
}

data::Dataset CreditData() {
  data::Dataset d = data::LoadCsv(DataPath("credit.csv"), DataPath("credit.schema.json"));
  d.schema = data::FitScaleWeights(d);
  return d;
}

// Loads `name` from the cache, or trains and stores it. The key embeds the
// training rows so a changed dataset never reuses a stale model.
MlpModel CachedModel(const std::string& name, const data::Dataset& train,
                     const std::vector<size_t>& hidden) {
  const std::string key = Str(name, "_", train.size(), "_", train.schema.Hash().substr(0, 12));
  const fs::path path = fs::path(FLIPAUDIT_CACHE_DIR) / (key + ".json");
  if (fs::exists(path)) {
    MlpModel m = MlpModel::Load(path.string());
    m.CheckSchema(train.schema);
    return m;
  }
  MlpModel m = model::Train(train, Layers(train.schema.size(), hidden), {}).model;
  fs::create_directories(path.parent_path());
  m.Save(path.string());
  return m;
}

MlpModel AdultModel(const Split& adult) {
  return CachedModel("adult", adult.train, kAdultHidden);
}

MlpModel CreditModel(const data::Dataset& credit) {
  return CachedModel("credit", credit, kCreditHidden);
}

// ---------------------------------------------------------------------------
// Random models.

data::FeatureSchema ContinuousSchema(size_t n, std::vector<double> weights = {},
                                     std::optional<double> lower = std::nullopt,
                                     std::optional<double> upper = std::nullopt) {
  std::vector<data::ColumnSpec> cols;
  for (size_t i = 0; i < n; ++i) {
    data::ColumnSpec c;
    c.name = "f" + std::to_string(i);
    if (!weights.empty()) c.scale_weight = weights[i];
    c.lower = lower;
    c.upper = upper;
    cols.push_back(c);
  }
  return data::FeatureSchema(cols);
}

std::vector<double> Normals(size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.Normal();
  return v;
}

MlpModel RandomMlp(size_t inputs, Rng& rng) {
  std::vector<size_t> layers = {inputs};
  const size_t depth = 1 + rng.Index(3);
  for (size_t l = 0; l < depth; ++l) layers.push_back(2 + rng.Index(14));
  layers.push_back(2);
  return MlpModel::Random(layers, rng.Next());
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome Ac1() {
  size_t total = 0;
  size_t converged = 0;
  double worst = 0.0;
  double flip_seconds = 0.0;
  std::map<FlipStatus, size_t> statuses;
  auto run = [&](const FlipSolver& solver, std::span<const double> x) {
    Clock clock;
    const FlipResult r = solver.ClosestFlip(x, FlipConstraint::All());
    flip_seconds += clock.Seconds();
    ++total;
    ++statuses[r.status];
    if (r.converged()) {
      ++converged;
      worst = std::max(worst, r.residual);
    }
  };

  Rng rng(101);
  for (int m = 0; m < 70; ++m) {
    const size_t n = 2 + rng.Index(15);
    const MlpModel model = RandomMlp(n, rng);
    const auto schema = ContinuousSchema(n);
    const FlipSolver solver(model, schema);
    for (int p = 0; p < 10; ++p) run(solver, Normals(n, rng, 2.0));
  }
  const size_t random_flips = total;

  const Split adult = AdultData();
  const MlpModel adult_model = AdultModel(adult);
  const data::Dataset credit = CreditData();
  const MlpModel credit_model = CreditModel(credit);
  for (const auto& [model, dataset] :
       {std::pair{&adult_model, &adult.train}, std::pair{&credit_model, &credit}}) {
    const FlipSolver solver(*model, dataset->schema);
    Rng pick(7);
    for (int i = 0; i < 200; ++i) run(solver, dataset->row(pick.Index(dataset->size())));
  }

  std::ostringstream by_status;
  for (const auto& [status, count] : statuses) {
    by_status << " " << flipsolve::StatusName(status) << "=" << count;
  }
  return Check(total >= 1000 && converged > 0 && worst <= 1e-6 && flip_seconds < 120.0,
               Str(total, " flips (", random_flips, " random-model, ", total - random_flips,
                   " Adult/Credit), ", converged, " converged; max |z1-0.5| ", worst,
                   " (limit 1e-06); statuses", by_status.str(), "; solve time ", flip_seconds,
                   " s (limit 120 s)"));
}

Outcome Ac2() {
  Clock clock;
  Rng rng(202);
  double worst = 0.0;
  size_t converged = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng.Index(20);
    std::vector<double> w(n);
    for (double& v : w) v = std::exp(rng.Uniform(-2.0, 2.0));
    const auto a = Normals(n, rng);
    const double c = rng.Normal();
    Matrix weights(2, n);
    for (size_t i = 0; i < n; ++i) weights(0, i) = a[i];
    const MlpModel model({n, 2}, {weights}, {std::vector<double>{c, 0.0}});
    const auto x = Normals(n, rng, 3.0);
    const FlipResult r =
        FlipSolver(model, ContinuousSchema(n, w)).ClosestFlip(x, FlipConstraint::All());
    double ax = c;
    double norm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      ax += a[i] * x[i];
      norm += a[i] * a[i] / w[i];
    }
    const double expected = std::abs(ax) / std::sqrt(norm);
    if (r.converged()) ++converged;
    const double err = r.converged() ? std::abs(r.distance - expected) / std::max(expected, 1e-300)
                                     : std::numeric_limits<double>::infinity();
    worst = std::max(worst, err);
  }
  const double seconds = clock.Seconds();
  return Check(converged == 100 && worst <= 1e-6 && seconds < 10.0,
               Str("100 linear models, ", converged, " converged; max relative distance error ",
                   worst, " (limit 1e-06); ", seconds, " s (limit 10 s)"));
}

Outcome Ac3() {
  Clock clock;
  Rng rng(303);
  constexpr size_t kGrid = 100000;
  constexpr double kLo = -3.0;
  constexpr double kHi = 3.0;
  const double step = (kHi - kLo) / static_cast<double>(kGrid - 1);
  size_t flips = 0;
  size_t no_flips = 0;
  size_t disagreements = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng.Index(6);
    const MlpModel model = RandomMlp(n, rng);
    const auto schema = ContinuousSchema(n, {}, kLo, kHi);
    const FlipSolver solver(model, schema);
    std::vector<double> x(n);
    for (double& v : x) v = rng.Uniform(kLo, kHi);
    const size_t k = rng.Index(n);
    const FlipResult r = solver.Flip1d(x, schema.feature(k).name);

    const int base = model.Predict(x);
    std::vector<double> probe = x;
    double grid_distance = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < kGrid; ++i) {
      probe[k] = kLo + step * static_cast<double>(i);
      if (model.Predict(probe) != base) {
        grid_distance = std::min(grid_distance, std::abs(probe[k] - x[k]));
      }
    }
    const bool grid_flip = std::isfinite(grid_distance);
    const bool solver_flip = r.status == FlipStatus::kConverged;
    if (grid_flip != solver_flip) {
      ++disagreements;
      continue;
    }
    if (!grid_flip) {
      ++no_flips;
      continue;
    }
    ++flips;
    // The true crossing lies within one grid step inside the first
    // grid point of the other class.
    const double moved = std::abs(r.flip_point[k] - x[k]);
    const double gap = std::max(moved - grid_distance, grid_distance - step - moved);
    worst_gap = std::max(worst_gap, gap);
  }
  const double seconds = clock.Seconds();
  return Check(disagreements == 0 && worst_gap <= 1e-9 && seconds < 30.0,
               Str("100 cases: ", flips, " flip, ", no_flips, " no-flip, ", disagreements,
                   " flip/no-flip disagreements; max excess over grid resolution ", worst_gap,
                   " (grid step ", step, "); ", seconds, " s (limit 30 s)"));
}

Outcome Ac4() {
  constexpr size_t kFeatures = 8;
  constexpr double kSlack = 1e-8;
  const auto schema = ContinuousSchema(kFeatures);
  const MlpModel model = MlpModel::Random({kFeatures, 16, 8, 2}, 404);
  explain::ExplainOptions options;
  options.singles = true;
  options.pairs = true;
  options.groups = false;
  options.unconstrained = true;
  Rng rng(404);
  size_t comparisons = 0;
  size_t violations = 0;
  size_t unconstrained = 0;
  double worst = -std::numeric_limits<double>::infinity();
  auto compare = [&](double smaller, double larger) {
    ++comparisons;
    const double excess = smaller - larger;
    worst = std::max(worst, excess);
    if (excess > kSlack) ++violations;
  };
  for (int i = 0; i < 50; ++i) {
    const auto x = Normals(kFeatures, rng, 1.5);
    const auto report = explain::BuildReport(model, schema, x, {}, options);
    std::map<std::string, double> singles;
    std::vector<const explain::ReportEntry*> pairs;
    for (const auto& e : report.entries) {
      if (e.failed() || e.status != FlipStatus::kConverged) continue;
      if (e.kind == explain::EntryKind::kSingle) singles[e.features.front()] = e.distance;
      if (e.kind == explain::EntryKind::kPair) pairs.push_back(&e);
    }
    for (const auto* p : pairs) {
      for (const auto& f : p->features) {
        if (singles.count(f)) compare(p->distance, singles[f]);
      }
    }
    if (report.closest && !report.closest->failed() &&
        report.closest->status == FlipStatus::kConverged) {
      ++unconstrained;
      for (const auto* p : pairs) compare(report.closest->distance, p->distance);
      for (const auto& [f, d] : singles) compare(report.closest->distance, d);
    }
  }
  return Check(violations == 0 && comparisons > 0,
               Str("50 inputs, ", unconstrained, " converged unconstrained flips, ", comparisons,
                   " subset comparisons, ", violations, " violations; max excess ", worst,
                   " (slack 1e-08)"));
}

Eigen::MatrixXd ToEigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (size_t i = 0; i < m.rows(); ++i) {
    for (size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  }
  return e;
}

Matrix RandomMatrix(size_t rows, size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) m(i, j) = rng.Normal();
  }
  return m;
}

Outcome Ac5() {
  Rng rng(505);
  double worst_reconstruction = 0.0;
  size_t monotonicity_breaks = 0;
  for (int t = 0; t < 100; ++t) {
    const size_t m = 1 + rng.Index(60);
    const size_t n = 1 + rng.Index(20);
    Matrix d = RandomMatrix(m, n, rng);
    if (t % 3 == 0 && n > 2) {
      const size_t r = 1 + rng.Index(n - 1);
      d = RandomMatrix(m, r, rng) * RandomMatrix(r, n, rng);
    }
    const auto qr = linalg::ComputePivotedQr(d);
    const Eigen::MatrixXd e = ToEigen(d);
    Eigen::MatrixXd permuted(m, n);
    for (size_t j = 0; j < n; ++j) permuted.col(j) = e.col(qr.permutation[j]);
    const double err = (ToEigen(qr.q) * ToEigen(qr.r) - permuted).norm() / e.norm();
    worst_reconstruction = std::max(worst_reconstruction, err);
    for (size_t j = 1; j < std::min(m, n); ++j) {
      if (std::abs(qr.r(j, j)) > std::abs(qr.r(j - 1, j - 1))) ++monotonicity_breaks;
    }
  }

  size_t rank_mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const size_t m = 10 + rng.Index(50);
    const size_t n = 3 + rng.Index(15);
    const size_t r = 1 + rng.Index(std::min(m, n) - 1);
    const Matrix d = RandomMatrix(m, r, rng) * RandomMatrix(r, n, rng);
    const size_t qr_rank = linalg::NumericalRankFromQr(linalg::ComputePivotedQr(d));
    const size_t svd_rank = linalg::NumericalRank(d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ToEigen(d));
    const auto& s = svd.singularValues();
    size_t oracle_rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) >= linalg::kDefaultRankTolerance * s(0)) ++oracle_rank;
    }
    if (qr_rank != r || svd_rank != r || oracle_rank != r) ++rank_mismatches;
  }

  double worst_orthonormality = 0.0;
  double worst_value = 0.0;
  double worst_vector = 0.0;
  for (int t = 0; t < 50; ++t) {
    const size_t m = 20 + rng.Index(100);
    const size_t n = 2 + rng.Index(10);
    Matrix f = RandomMatrix(m, n, rng);
    for (size_t j = 0; j < n; ++j) {
      const double scale = std::pow(1.7, static_cast<double>(n - j));
      for (size_t i = 0; i < m; ++i) f(i, j) *= scale;
    }
    const auto pca = linalg::ComputePca(f);
    const Eigen::MatrixXd c = ToEigen(pca.components);
    worst_orthonormality = std::max(
        worst_orthonormality,
        (c * c.transpose() - Eigen::MatrixXd::Identity(c.rows(), c.rows())).cwiseAbs().maxCoeff());

    const Eigen::MatrixXd e = ToEigen(f);
    const Eigen::MatrixXd centred = e.rowwise() - e.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(m - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double top = eig.eigenvalues()(n - 1);
    for (size_t k = 0; k < n; ++k) {
      const Eigen::Index idx = static_cast<Eigen::Index>(n - 1 - k);
      worst_value = std::max(
          worst_value, std::abs(pca.explained_variance[k] - eig.eigenvalues()(idx)) / top);
      const Eigen::VectorXd v = eig.eigenvectors().col(idx);
      const Eigen::VectorXd mine = c.row(static_cast<Eigen::Index>(k)).transpose();
      worst_vector = std::max(worst_vector, std::min((mine - v).norm(), (mine + v).norm()));
    }
  }

  return Check(worst_reconstruction <= 1e-10 && monotonicity_breaks == 0 &&
                   rank_mismatches == 0 && worst_orthonormality <= 1e-10 &&
                   worst_value <= 1e-8 && worst_vector <= 1e-8,
               Str("QR reconstruction ", worst_reconstruction, " (limit 1e-10), ",
                   monotonicity_breaks, " pivot order breaks; ", rank_mismatches,
                   "/100 QR-vs-SVD rank mismatches; PCA orthonormality ", worst_orthonormality,
                   " (limit 1e-10), eigenvalue ", worst_value, " and eigenvector ", worst_vector,
                   " vs Eigen (limit 1e-08)"));
}

Outcome Ac6() {
  Rng rng(606);
  double worst = 0.0;
  constexpr double kStep = 1e-5;
  for (int t = 0; t < 100; ++t) {
    const size_t n = 1 + rng.Index(30);
    const MlpModel model = RandomMlp(n, rng);
    auto x = Normals(n, rng);
    const auto g = model.InputGradient(x);
    for (size_t i = 0; i < n; ++i) {
      const double saved = x[i];
      x[i] = saved + kStep;
      const double up = model.Forward(x).z1;
      x[i] = saved - kStep;
      const double down = model.Forward(x).z1;
      x[i] = saved;
      const double fd = (up - down) / (2.0 * kStep);
      worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return Check(worst <= 1e-5, Str("100 random (model, input) pairs; max gradient error ", worst,
                                  " (limit 1e-05)"));
}

Outcome Ac7() {
  Clock adult_clock;
  const Split adult = AdultData();
  const MlpModel adult_model =
      model::Train(adult.train, Layers(adult.train.schema.size(), kAdultHidden), {}).model;
  const double adult_accuracy = model::Accuracy(adult_model, adult.test);
  const double adult_seconds = adult_clock.Seconds();

  Clock credit_clock;
  const data::Dataset credit = CreditData();
  double credit_mean = 0.0;
  for (const auto& [train, test] : data::KFold(credit, 10, 1)) {
    const MlpModel m =
        model::Train(train, Layers(train.schema.size(), kCreditHidden), {}).model;
    credit_mean += model::Accuracy(m, test) / 10.0;
  }
  const double credit_seconds = credit_clock.Seconds();

  bool ok = adult_accuracy >= 0.84 && adult_seconds < 1200.0 && credit_mean >= 0.79 &&
            credit_seconds < 1200.0;
  std::string fico = "FICO skipped (set FLIPAUDIT_FICO_CSV to the licensed HELOC csv)";
  if (const char* csv = std::getenv("FLIPAUDIT_FICO_CSV"); csv != nullptr && *csv != '\0') {
    const std::string cmd = Str(FLIPAUDIT_SOURCE_DIR, "/scripts/reproduce_fico.sh '", csv, "' '",
                                FLIPAUDIT_BINARY, "'");
    const int status = std::system(cmd.c_str());
    fico = status == 0 ? "FICO reproduction passed" : "FICO reproduction failed";
    ok = ok && status == 0;
  }
  return Check(ok, Str("Adult test accuracy ", adult_accuracy, " (need >= 0.84) in ",
                       adult_seconds, " s; Credit 10-fold mean ", credit_mean,
                       " (need >= 0.79) in ", credit_seconds, " s (limit 1200 s each); ", fico));
}

Outcome Ac8() {
  const Split adult = AdultData();
  const MlpModel model = AdultModel(adult);
  const FlipSolver solver(model, adult.test.schema);
  double worst_flip = 0.0;
  for (size_t i = 0; i < 20; ++i) {
    Clock clock;
    solver.ClosestFlip(adult.test.row(i), FlipConstraint::All());
    worst_flip = std::max(worst_flip, clock.Seconds());
  }
  double worst_report = 0.0;
  const auto groups = adult.test.schema.ScaleGroups();
  for (size_t i = 0; i < 3; ++i) {
    Clock clock;
    explain::BuildReport(model, adult.test.schema, adult.test.row(i), groups, {});
    worst_report = std::max(worst_report, clock.Seconds());
  }
  return Check(worst_flip < 1.0 && worst_report < 30.0,
               Str(adult.test.schema.size(), "-feature Adult model, one thread: slowest of 20 ",
                   "unconstrained flips ", worst_flip, " s (limit 1 s); slowest of 3 reports ",
                   worst_report, " s (limit 30 s)"));
}

Outcome Ac9() {
  const data::Dataset credit = CreditData();
  auto folds = data::KFold(credit, 10, 1);
  data::Dataset train = folds.front().first;
  data::Dataset test = folds.front().second;
  const auto young = data::GroupFilter::Parse("AGE<35", train.schema);
  train = data::Undersample(train, young, 0.3, 1);
  train.schema = data::FitScaleWeights(train);
  test.schema = train.schema;

  const auto layers = Layers(train.schema.size(), kCreditHidden);
  const model::TrainConfig config;
  const MlpModel before = model::Train(train, layers, config).model;
  debias::SelectionRule rule;
  rule.feature = "AGE";
  rule.increase_label = 1;
  const auto plan = debias::SelectCounteractingFlips(before, train, rule);
  const auto result = debias::AugmentAndRetrain(train, plan, layers, config);

  audit::BuildOptions build;
  build.max_rows = 500;
  build.seed = 1;
  const auto s0 = debias::Summarize(before, train, test, "AGE", build);
  const auto s1 = debias::Summarize(result.training.model, train, test, "AGE", build);
  const double drop = s0.test_accuracy - s1.test_accuracy;
  const size_t features = s0.ranking.features.size();
  return Check(s0.feature_rank >= 1 && s0.feature_rank <= 5 && s1.feature_rank > s0.feature_rank &&
                   drop < 0.01,
               Str("Credit fold 1 of 10, AGE<35 kept at 30%: AGE rank ", s0.feature_rank, " -> ",
                   s1.feature_rank, " of ", features, " (need top-5 before, strictly lower after); ",
                   plan.size(), " flip points added; test accuracy ", s0.test_accuracy, " -> ",
                   s1.test_accuracy, " (need drop < 0.01)"));
}

Outcome Ac10() {
  audit::BuildOptions build;
  build.max_rows = 800;
  build.seed = 10;
  const Split adult = AdultData();
  const auto pa = audit::Proximity(audit::BuildDirections(AdultModel(adult), adult.train, build));
  const data::Dataset credit = CreditData();
  const auto pc = audit::Proximity(audit::BuildDirections(CreditModel(credit), credit, build));
  auto line = [](const char* name, const audit::ProximitySummary& p) {
    return Str(name, " median misclassified ", p.median_misclassified, " (", p.misclassified,
               " rows) vs correct ", p.median_correct, " (", p.correct, " rows)");
  };
  return Check(pa.misclassified > 0 && pc.misclassified > 0 &&
                   pa.median_misclassified < pa.median_correct &&
                   pc.median_misclassified < pc.median_correct,
               line("Adult", pa) + "; " + line("Credit", pc));
}

Outcome Ac11() {
  const Split adult = AdultData();
  const MlpModel trained = AdultModel(adult);
  const auto& schema = adult.train.schema;
  const auto& group = schema.groups().at(*schema.GroupIndex("sex"));
  auto weights = trained.weights();
  Matrix& first = weights.front();
  for (size_t i = 0; i < first.rows(); ++i) {
    double mean = 0.0;
    for (size_t m : group.members) mean += first(i, m) / static_cast<double>(group.members.size());
    for (size_t m : group.members) first(i, m) = mean;
  }
  MlpModel inert(trained.layer_sizes(), weights, trained.biases());
  inert.BindSchema(schema);

  audit::BuildOptions build;
  build.max_rows = 200;
  build.seed = 11;
  const auto report = audit::SwapBinaryAudit(inert, adult.train, "sex", build);
  return Check(report.changed == 0 && report.compared > 0 &&
                   std::abs(report.mean_distance_change) <= 1e-8,
               Str("Adult model with tied sex columns, ", report.rows, " rows: ",
                   report.changed, " changed classifications, mean distance change ",
                   report.mean_distance_change, " over ", report.compared,
                   " rows (limit 1e-08)"));
}

int Main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC1", Ac1}, {"AC2", Ac2}, {"AC3", Ac3}, {"AC4", Ac4},   {"AC5", Ac5},  {"AC6", Ac6},
      {"AC7", Ac7}, {"AC8", Ac8}, {"AC9", Ac9}, {"AC10", Ac10}, {"AC11", Ac11}};
  std::vector<std::string> selected(argv + 1, argv + argc);
  if (selected.empty() || (selected.size() == 1 && selected[0] == "all")) {
    selected.clear();
    for (const auto& [name, fn] : criteria) selected.push_back(name);
  }
  int failures = 0;
  for (const auto& want : selected) {
    auto it = std::find_if(criteria.begin(), criteria.end(),
                           [&](const auto& c) { return c.first == want; });
    if (it == criteria.end()) {
      std::cerr << "unknown criterion '" << want << "'\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {Verdict::kFail, Str("error: ", e.what())};
    }
    const char* verdict = o.verdict == Verdict::kPass   ? "PASS"
                          : o.verdict == Verdict::kSkip ? "SKIP"
                                                        : "FAIL";
    std::cout << it->first << " " << verdict << ": " << o.detail << std::endl;
    if (o.verdict == Verdict::kFail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace flipaudit

int main(int argc, char** argv) { return flipaudit::Main(argc, argv); }
