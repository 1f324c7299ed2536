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

#include "flipaudit/explain.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::explain {
namespace {

using flipsolve::FlipStatus;
using linalg::Matrix;
using model::MlpModel;

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::kIo;
}

data::FeatureSchema Continuous(size_t n) {
  std::vector<data::ColumnSpec> cols;
  for (size_t i = 0; i < n; ++i) {
    cols.push_back({.name = "f" + std::to_string(i),
                    .scale_group = i < 2 ? "first" : "rest"});
  }
  return data::FeatureSchema(cols, {.column = "y", .classes = {"good", "bad"}});
}

MlpModel Linear(const std::vector<double>& a, double c) {
  Matrix w(2, a.size());
  for (size_t i = 0; i < a.size(); ++i) w(0, i) = a[i];
  return MlpModel({a.size(), 2}, {w}, {std::vector<double>{c, 0.0}});
}

// Model that only looks at f0, through a bounded first layer: the decision
// flips when f0 crosses 0.5.
MlpModel OnlyFirst(size_t n) {
  std::vector<double> a(n, 0.0);
  a[0] = -1.0;
  return Linear(a, 0.5);
}

TEST(BuildReportTest, InertFeaturesLandInSectionA) {
  const auto schema = Continuous(4);
  const MlpModel m = OnlyFirst(4);
  const std::vector<double> x = {0.2, 1.0, -1.0, 3.0};
  const auto report = BuildReport(m, schema, x, {}, {.row_id = "row 7"});
  EXPECT_EQ(report.report_version, 1);
  EXPECT_EQ(report.decision, 0);
  EXPECT_EQ(report.decision_class, "good");
  const auto b = report.SectionB();
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0]->features, std::vector<std::string>{"f0"});
  EXPECT_NEAR(b[0]->flip_point[0], 0.5, 1e-6);
  ASSERT_EQ(b[0]->changes.size(), 1u);
  EXPECT_EQ(b[0]->changes[0].feature, "f0");
  const auto a = report.SectionA();
  ASSERT_EQ(a.size(), 3u);
  for (const auto* e : a) {
    EXPECT_NE(e->features[0], "f0");
    EXPECT_EQ(e->status, FlipStatus::kNoFlipExists);
  }
  ASSERT_TRUE(report.closest.has_value());
  EXPECT_NEAR(report.closest->distance, 0.3, 1e-6);
  ASSERT_EQ(report.closest->changes.size(), 1u);
  const std::string text = RenderText(report, m);
  EXPECT_NE(text.find("for row 7"), std::string::npos);
  EXPECT_NE(text.find("f0: 0.2 -> 0.5 (+0.3)"), std::string::npos) << text;
  EXPECT_NE(text.find("changing f1 alone"), std::string::npos);
  EXPECT_EQ(text.find("re-check failed"), std::string::npos);
}

TEST(BuildReportTest, SectionsAreDisjointAndSectionBIsOnTheBoundary) {
  Rng rng(4);
  const auto schema = Continuous(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpModel m = MlpModel::Random({5, 6, 2}, 100 + trial, 2.0);
    std::vector<double> x(5);
    for (double& v : x) v = rng.Normal();
    ExplainOptions options;
    options.pairs = true;
    const auto report = BuildReport(m, schema, x, schema.ScaleGroups(), options);
    std::set<std::string> in_a;
    for (const auto* e : report.SectionA()) in_a.insert(e->name);
    for (const auto* e : report.SectionB()) {
      EXPECT_FALSE(in_a.count(e->name)) << e->name;
      EXPECT_LE(e->residual, 1e-6);
      EXPECT_LE(std::abs(m.Forward(e->flip_point).z1 - 0.5), 1e-6);
    }
    // The overall closest flip is no farther than any constrained one.
    ASSERT_TRUE(report.closest.has_value());
    if (!report.closest->failed() && report.closest->status == FlipStatus::kConverged) {
      for (const auto* e : report.SectionB()) {
        EXPECT_LE(report.closest->distance, e->distance + 1e-8);
      }
    }
    size_t groups = 0;
    for (const auto& e : report.entries) groups += e.kind == EntryKind::kGroup;
    EXPECT_EQ(groups, 2u);
  }
}

TEST(BuildReportTest, EmptySectionBIsStated) {
  const auto schema = Continuous(3);
  const MlpModel m = Linear({0.0, 0.0, 0.0}, 1.0);
  const auto report = BuildReport(m, schema, std::vector<double>{1.0, 2.0, 3.0}, {});
  EXPECT_TRUE(report.SectionB().empty());
  const std::string text = RenderText(report, m);
  EXPECT_NE(text.find("No single feature or pair of features can flip the decision"),
            std::string::npos);
  EXPECT_NE(text.find("None of the features alone"), std::string::npos);
}

TEST(BuildReportTest, RenderedPairsAreCappedAndSorted) {
  const auto schema = Continuous(12);
  std::vector<double> a(12);
  for (size_t i = 0; i < 12; ++i) a[i] = 1.0 + 0.1 * static_cast<double>(i);
  const MlpModel m = Linear(a, -1.0);
  ExplainOptions options;
  options.pairs = true;
  const auto report = BuildReport(m, schema, std::vector<double>(12, 0.0), {}, options);
  size_t pairs = 0;
  double last = 0.0;
  for (const auto* e : report.SectionB()) {
    if (e->kind != EntryKind::kPair) continue;
    EXPECT_GE(e->distance, last);
    last = e->distance;
    ++pairs;
  }
  EXPECT_EQ(pairs, 66u);
  const std::string text = RenderText(report, m);
  EXPECT_NE(text.find("closest 10 of 66"), std::string::npos);
  const size_t pairs_at = text.find("Pairs of features");
  ASSERT_NE(pairs_at, std::string::npos);
  EXPECT_NE(text.find("- [f10 + f11] f10: 0.0 -> ", pairs_at), std::string::npos) << text;
  EXPECT_EQ(RenderJson(report)["entries"].size(), 12u + 66u);
}

TEST(BuildReportTest, SolverErrorsAreRecordedPerEntry) {
  std::vector<std::string> levels;
  for (int i = 0; i < 10; ++i) levels.push_back("l" + std::to_string(i));
  data::FeatureSchema schema({{.name = "a", .categorical = true, .levels = levels},
                              {.name = "b", .categorical = true, .levels = levels},
                              {.name = "x"}},
                             {.column = "y", .classes = {"n", "p"}});
  Matrix w(2, 21);
  w(0, 3) = 2.0;
  w(0, 20) = 1.0;
  const MlpModel m({21, 2}, {w}, {std::vector<double>{-0.5, 0.0}});
  std::vector<double> x(21, 0.0);
  x[0] = 1.0;
  x[10] = 1.0;
  ExplainOptions options;
  options.solver.strict_enumeration = true;
  options.solver.max_combinations = 50;
  options.solver.exhaustive_limit = 20;
  options.custom = {{"a", "b"}};
  options.unconstrained = false;
  const auto report = BuildReport(m, schema, x, {}, options);
  ASSERT_EQ(report.entries.size(), 4u);
  EXPECT_FALSE(report.entries[0].failed());
  EXPECT_TRUE(report.entries[3].failed());
  EXPECT_EQ(report.Unresolved().size(), 1u);
  EXPECT_NE(RenderText(report, m).find("Not resolved"), std::string::npos);
}

TEST(BuildReportTest, CategoryChangeWithoutBoundaryPoint) {
  data::FeatureSchema schema({{.name = "c", .categorical = true, .levels = {"p", "q"}},
                              {.name = "x"}},
                             {.column = "y", .classes = {"n", "p"}});
  Matrix w(2, 3);
  w(0, 0) = 1.0;
  w(0, 1) = -1.0;
  w(0, 2) = 0.1;
  const MlpModel m({3, 2}, {w}, {std::vector<double>{0.0, 0.0}});
  const auto report = BuildReport(m, schema, std::vector<double>{1.0, 0.0, 0.0}, {});
  const auto discrete = report.DiscreteChanges();
  ASSERT_EQ(discrete.size(), 1u);
  ASSERT_EQ(discrete[0]->changes.size(), 1u);
  EXPECT_EQ(discrete[0]->changes[0].from_level, "p");
  EXPECT_EQ(discrete[0]->changes[0].to_level, "q");
  EXPECT_NE(RenderText(report, m).find("c: p -> q"), std::string::npos);
}

TEST(BuildReportTest, RenderRescoresFlipPoints) {
  const auto schema = Continuous(2);
  const MlpModel m = OnlyFirst(2);
  auto report = BuildReport(m, schema, std::vector<double>{0.0, 0.0}, {});
  for (auto& e : report.entries) {
    if (e.status == FlipStatus::kConverged) e.flip_point[0] += 0.1;
  }
  EXPECT_NE(RenderText(report, m).find("re-check failed"), std::string::npos);
}

TEST(BuildReportTest, JsonRoundTrip) {
  const auto schema = Continuous(4);
  const MlpModel m = MlpModel::Random({4, 5, 2}, 3, 2.0);
  ExplainOptions options;
  options.pairs = true;
  options.custom = {{"f0", "f3"}};
  const auto report =
      BuildReport(m, schema, std::vector<double>{0.3, -0.2, 0.9, 1.5}, schema.ScaleGroups(),
                  options);
  const auto parsed = ParseReportJson(nlohmann::json::parse(RenderJson(report).dump()));
  EXPECT_EQ(parsed, report);
  auto j = RenderJson(report);
  j["report_version"] = 2;
  EXPECT_EQ(CodeOf([&] { ParseReportJson(j); }), ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([&] { ParseReportJson(nlohmann::json::object()); }), ErrorCode::kParse);
}

TEST(BuildReportTest, Errors) {
  const auto schema = Continuous(3);
  const MlpModel m = OnlyFirst(3);
  EXPECT_EQ(CodeOf([&] { BuildReport(m, schema, std::vector<double>{1.0}, {}); }),
            ErrorCode::kShape);
  EXPECT_EQ(CodeOf([&] {
              BuildReport(m, schema, std::vector<double>{1.0, 2.0, 3.0}, {{"g", {"zz"}}});
            }),
            ErrorCode::kInvalidArgument);
  ExplainOptions options;
  options.custom = {{}};
  EXPECT_EQ(CodeOf([&] {
              BuildReport(m, schema, std::vector<double>{1.0, 2.0, 3.0}, {}, options);
            }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace flipaudit::explain
