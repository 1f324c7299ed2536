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

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <string>

#include "flipaudit/error.h"

namespace flipaudit::data {
namespace {

FeatureSchema ToySchema() {
  ColumnSpec age{.name = "age", .lower = 0.0, .upper = 120.0};
  ColumnSpec sex{.name = "sex", .categorical = true, .levels = {"F", "M"}};
  ColumnSpec hours{.name = "hours", .lower = 0.0, .integer_valued = true};
  return FeatureSchema({age, sex, hours}, {"y", {"no", "yes"}}, "id");
}

constexpr char kToyCsv[] =
    "id,age,sex,hours,y\n"
    "a,30,F,40,no\n"
    "b,45,M,50,yes\n"
    "c,22,\"M\",10,no\n";

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::kIo;
}

TEST(SchemaTest, ExpandsCategoricals) {
  const FeatureSchema s = ToySchema();
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s.FeatureNames(),
            (std::vector<std::string>{"age", "sex=F", "sex=M", "hours"}));
  ASSERT_EQ(s.groups().size(), 1u);
  EXPECT_EQ(s.groups()[0].members, (std::vector<size_t>{1, 2}));
  EXPECT_EQ(s.feature(2).kind, FeatureKind::kBinaryInGroup);
  EXPECT_EQ(*s.feature(2).group, 0u);
}

TEST(SchemaTest, JsonRoundTrip) {
  const FeatureSchema s = ToySchema();
  const FeatureSchema t = FeatureSchema::FromJson(s.ToJson());
  EXPECT_EQ(t.ToJson(), s.ToJson());
  EXPECT_EQ(t.Hash(), s.Hash());
}

TEST(SchemaTest, RejectsBadSchemas) {
  EXPECT_EQ(CodeOf([] {
              FeatureSchema({ColumnSpec{.name = "c", .categorical = true, .levels = {"x"}}});
            }),
            ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([] {
              FeatureSchema({ColumnSpec{.name = "a", .scale_weight = 0.0}});
            }),
            ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([] {
              FeatureSchema::FromJson(nlohmann::json::parse(
                  R"({"features":[{"name":"a","kind":"ordinal"}]})"));
            }),
            ErrorCode::kSchema);
}

TEST(SchemaTest, HashTracksLayout) {
  const FeatureSchema s = ToySchema();
  ColumnSpec other{.name = "other"};
  EXPECT_NE(FeatureSchema({other}).Hash(), s.Hash());
}

TEST(LoadCsvTest, EncodesOneHot) {
  const Dataset ds = ParseCsvDataset(kToyCsv, ToySchema());
  ASSERT_EQ(ds.size(), 3u);
  ASSERT_EQ(ds.features.cols(), 4u);
  EXPECT_EQ(ds.row_ids, (std::vector<std::string>{"a", "b", "c"}));
  for (size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(ds.features(r, 1) + ds.features(r, 2), 1.0);
  }
  EXPECT_EQ(ds.features(1, 0), 45.0);
  EXPECT_EQ(ds.features(2, 2), 1.0);
  EXPECT_EQ(ds.Label(0), 0);
  EXPECT_EQ(ds.Label(1), 1);
}

TEST(LoadCsvTest, Errors) {
  const FeatureSchema s = ToySchema();
  EXPECT_EQ(CodeOf([&] { ParseCsvDataset("id,age,sex,hours,y,zzz\n", s); }),
            ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([&] { ParseCsvDataset("id,age,hours,y\n", s); }),
            ErrorCode::kSchema);
  EXPECT_EQ(CodeOf([&] { ParseCsvDataset("id,age,sex,hours,y\nq,1,X,2,no\n", s); }),
            ErrorCode::kIntegrity);
  EXPECT_EQ(CodeOf([&] { ParseCsvDataset("id,age,sex,hours,y\nq,500,F,2,no\n", s); }),
            ErrorCode::kIntegrity);
  try {
    ParseCsvDataset("id,age,sex,hours,y\nq,1,F,2,no\nr,abc,F,2,no\n", s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'age'"), std::string::npos) << msg;
  }
  EXPECT_EQ(CodeOf([] { ParseCsv("a,\"b\n"); }), ErrorCode::kParse);
}

TEST(LoadCsvTest, Rfc4180Quoting) {
  const auto rec = ParseCsv("a,b\r\n\"x,y\",\"he said \"\"hi\"\"\"\r\n");
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[1][0], "x,y");
  EXPECT_EQ(rec[1][1], "he said \"hi\"");
}

TEST(LoadCsvTest, CsvRoundTrip) {
  Dataset ds = ParseCsvDataset(kToyCsv, ToySchema());
  ds.targets[2] = {0.5, 0.5};
  const Dataset back = ParseCsvDataset(ToCsv(ds), ds.schema);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.targets, ds.targets);
  EXPECT_EQ(back.row_ids, ds.row_ids);
}

TEST(LoadCsvTest, AdultEncodesTo88Columns) {
  const std::string dir = FLIPAUDIT_DATA_DIR;
  const FeatureSchema s = FeatureSchema::Load(dir + "/adult.schema.json");
  EXPECT_EQ(s.size(), 88u);
  const Dataset test = LoadCsv(dir + "/adult_test.csv", s);
  EXPECT_EQ(test.features.cols(), 88u);
  EXPECT_EQ(test.features(0, *s.FeatureIndex("age")), 25.0);
  EXPECT_EQ(test.features(0, *s.FeatureIndex("race=Black")), 1.0);
}

Dataset TenRows() {
  ColumnSpec v{.name = "v"};
  Dataset ds;
  ds.schema = FeatureSchema({v}, {"y", {"0", "1"}});
  ds.features = linalg::Matrix(10, 1);
  for (size_t i = 0; i < 10; ++i) {
    ds.features(i, 0) = static_cast<double>(i);
    ds.targets.push_back(HardTarget(i % 2));
    ds.row_ids.push_back(std::to_string(i));
  }
  return ds;
}

TEST(SplitTest, SizesDisjointDeterministic) {
  const Dataset ds = TenRows();
  const auto [train, test] = Split(ds, 0.2, 42);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::set<std::string> ids(train.row_ids.begin(), train.row_ids.end());
  for (const auto& id : test.row_ids) EXPECT_TRUE(ids.insert(id).second);
  EXPECT_EQ(ids.size(), 10u);
  const auto again = Split(ds, 0.2, 42);
  EXPECT_EQ(again.second.row_ids, test.row_ids);
  EXPECT_EQ(CodeOf([&] { Split(ds, 1.0, 1); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { Split(ds, 0.0, 1); }), ErrorCode::kInvalidArgument);
}

TEST(SplitTest, KFoldPartitions) {
  const Dataset ds = TenRows();
  const auto folds = KFold(ds, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::multiset<std::string> seen;
  for (const auto& [train, test] : folds) {
    EXPECT_EQ(test.size(), 2u);
    EXPECT_EQ(train.size(), 8u);
    seen.insert(test.row_ids.begin(), test.row_ids.end());
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 10u);
}

Dataset ThreeLevel() {
  ColumnSpec a{.name = "a"};
  ColumnSpec c{.name = "c", .categorical = true, .levels = {"x", "y", "z"}};
  ColumnSpec b{.name = "b"};
  return ParseCsvDataset("a,c,b\n1,x,2\n3,z,4\n", FeatureSchema({a, c, b}));
}

TEST(DropFeaturesTest, Behaviour) {
  const Dataset ds = ThreeLevel();
  EXPECT_EQ(DropFeatures(ds, std::vector<std::string>{}).features, ds.features);
  const Dataset no_c = DropFeatures(ds, std::vector<std::string>{"c"});
  EXPECT_EQ(no_c.features.cols(), 2u);
  EXPECT_EQ(no_c.schema.FeatureNames(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(no_c.features(1, 1), 4.0);
  const Dataset no_a = DropFeatures(ds, std::vector<std::string>{"a"});
  EXPECT_EQ(no_a.features.cols(), 4u);
  no_a.Validate();
  EXPECT_EQ(CodeOf([&] { DropFeatures(ds, std::vector<std::string>{"c=y"}); }),
            ErrorCode::kIntegrity);
  EXPECT_EQ(CodeOf([&] { DropFeatures(ds, std::vector<std::string>{"nope"}); }),
            ErrorCode::kInvalidArgument);
}

TEST(UndersampleTest, KeepsFloorFraction) {
  ColumnSpec age{.name = "age"};
  Dataset ds;
  ds.schema = FeatureSchema({age});
  ds.features = linalg::Matrix(150, 1);
  for (size_t i = 0; i < 150; ++i) {
    ds.features(i, 0) = i < 100 ? 20.0 : 50.0;
    ds.targets.push_back(HardTarget(0));
    ds.row_ids.push_back(std::to_string(i));
  }
  const GroupFilter young = GroupFilter::Parse("age<35", ds.schema);
  const Dataset kept = Undersample(ds, young, 0.3, 9);
  EXPECT_EQ(young.MatchingRows(kept).size(), 30u);
  EXPECT_EQ(kept.size(), 80u);
  EXPECT_EQ(Undersample(ds, young, 0.3, 9).row_ids, kept.row_ids);
  EXPECT_EQ(Undersample(ds, young, 1.0, 9).row_ids, ds.row_ids);
  EXPECT_EQ(Undersample(ds, young, 0.0, 9).size(), 50u);
  EXPECT_EQ(Undersample(ds, young, 0.29, 9).size(), 50u + 29u);
  EXPECT_EQ(CodeOf([&] { Undersample(ds, young, 1.5, 9); }),
            ErrorCode::kInvalidArgument);
}

TEST(GroupFilterTest, ParsesClauses) {
  const Dataset ds = ParseCsvDataset(kToyCsv, ToySchema());
  const GroupFilter f = GroupFilter::Parse("sex=M, age>40", ds.schema);
  EXPECT_EQ(f.MatchingRows(ds), (std::vector<size_t>{1}));
  EXPECT_EQ(GroupFilter::Parse("sex=F", ds.schema).MatchingRows(ds),
            (std::vector<size_t>{0}));
  EXPECT_EQ(CodeOf([&] { GroupFilter::Parse("height>3", ds.schema); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { GroupFilter::Parse("sex=Q", ds.schema); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { GroupFilter::Parse("age", ds.schema); }),
            ErrorCode::kInvalidArgument);
}

TEST(FlipBinaryFeatureTest, SwapsTwoLevelGroup) {
  const Dataset ds = ParseCsvDataset(kToyCsv, ToySchema());
  const Dataset flipped = FlipBinaryFeature(ds, "sex");
  for (size_t r = 0; r < ds.size(); ++r) {
    EXPECT_EQ(flipped.features(r, 1), ds.features(r, 2));
    EXPECT_EQ(flipped.features(r, 2), ds.features(r, 1));
    EXPECT_EQ(flipped.features(r, 0), ds.features(r, 0));
  }
  flipped.Validate();
  EXPECT_EQ(FlipBinaryFeature(flipped, "sex").features, ds.features);
  EXPECT_EQ(CodeOf([] { FlipBinaryFeature(ThreeLevel(), "c"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { FlipBinaryFeature(ds, "age"); }),
            ErrorCode::kInvalidArgument);
}

TEST(ScaleWeightTest, FitAndDistance) {
  const Dataset ds = ParseCsvDataset(kToyCsv, ToySchema());
  const FeatureSchema fitted = FitScaleWeights(ds);
  EXPECT_DOUBLE_EQ(fitted.feature(0).scale_weight, 1.0 / (23.0 * 23.0));
  EXPECT_DOUBLE_EQ(fitted.feature(1).scale_weight, 1.0);
  EXPECT_DOUBLE_EQ(fitted.feature(3).scale_weight, 1.0 / (40.0 * 40.0));
  const double d = WeightedDistance(fitted, ds.row(0), ds.row(1));
  EXPECT_NEAR(d * d, 15.0 * 15.0 / 529.0 + 2.0 + 100.0 / 1600.0, 1e-12);
  EXPECT_EQ(WeightedDistance(fitted, ds.row(2), ds.row(2)), 0.0);
  EXPECT_EQ(FeatureSchema::FromJson(fitted.ToJson()).ScaleWeights(),
            fitted.ScaleWeights());
}

}  // namespace
}  // namespace flipaudit::data
