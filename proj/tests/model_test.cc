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

#include "flipaudit/model.h"

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::model {
namespace {

using linalg::Matrix;

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::kIo;
}

std::vector<double> RandomInput(size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.Normal();
  return x;
}

data::Dataset MakeDataset(const std::vector<std::vector<double>>& rows,
                          const std::vector<data::Target>& targets) {
  std::vector<data::ColumnSpec> cols;
  for (size_t c = 0; c < rows[0].size(); ++c) {
    cols.push_back({.name = "x" + std::to_string(c)});
  }
  data::Dataset ds;
  ds.schema = data::FeatureSchema(cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    ds.features.AppendRow(rows[r]);
    ds.row_ids.push_back(std::to_string(r));
  }
  ds.targets = targets;
  return ds;
}

TEST(ForwardTest, ZeroModelIsUndecided) {
  const MlpModel m = MlpModel::Zeros({3, 4, 2});
  const Scores s = m.Forward(std::vector<double>{1, -2, 3});
  EXPECT_EQ(s.z1, 0.5);
  EXPECT_EQ(s.z2, 0.5);
}

TEST(ForwardTest, SingleLayerOnBoundary) {
  const MlpModel m({2, 2}, {Matrix{{1, 0}, {0, 0}}}, {{0, 0}});
  EXPECT_NEAR(m.Forward(std::vector<double>{0, 17.5}).z1, 0.5, 1e-15);
}

TEST(ForwardTest, HandComputedTwoTwoTwo) {
  const MlpModel m({2, 2, 2}, {Matrix{{0.5, -0.25}, {0.1, 0.3}}, Matrix{{1.0, -2.0}, {0.5, 0.75}}},
                   {{0.1, -0.2}, {0.05, -0.05}});
  const std::vector<double> x = {0.4, -1.2};
  const double a1 = std::erf(0.5 * 0.4 - 0.25 * -1.2 + 0.1);
  const double a2 = std::erf(0.1 * 0.4 + 0.3 * -1.2 - 0.2);
  const double l1 = 1.0 * a1 - 2.0 * a2 + 0.05;
  const double l2 = 0.5 * a1 + 0.75 * a2 - 0.05;
  const double z1 = std::exp(l1) / (std::exp(l1) + std::exp(l2));
  const Scores s = m.Forward(x);
  EXPECT_NEAR(s.z1, z1, 1e-12);
  EXPECT_NEAR(s.z2, 1.0 - z1, 1e-12);
}

TEST(ForwardTest, ShapeMismatch) {
  const MlpModel m = MlpModel::Zeros({3, 2});
  EXPECT_EQ(CodeOf([&] { m.Forward(std::vector<double>{1, 2}); }), ErrorCode::kShape);
  EXPECT_EQ(CodeOf([&] { m.InputGradient(std::vector<double>{1, 2, 3, 4}); }),
            ErrorCode::kShape);
  EXPECT_EQ(CodeOf([] { MlpModel({2, 3}, {Matrix(3, 2)}, {{0, 0, 0}}); }),
            ErrorCode::kShape);
}

TEST(ForwardTest, ScoresSumToOne) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const MlpModel m = MlpModel::Random({5, 7, 3, 2}, trial, 3.0);
    const auto x = RandomInput(5, rng);
    const Scores s = m.Forward(x);
    EXPECT_NEAR(s.z1 + s.z2, 1.0, 1e-12);
    EXPECT_GE(s.z1, 0.0);
    EXPECT_LE(s.z1, 1.0);
  }
}

TEST(GradientTest, ZeroModelHasZeroGradient) {
  const MlpModel m = MlpModel::Zeros({3, 4, 2});
  for (double g : m.InputGradient(std::vector<double>{1, 2, 3})) EXPECT_EQ(g, 0.0);
}

TEST(GradientTest, LogisticClosedForm) {
  const MlpModel m({3, 2}, {Matrix{{0.3, -1.0, 2.0}, {0.1, 0.5, -0.5}}}, {{0.2, -0.1}});
  const std::vector<double> x = {1.0, 0.5, -0.25};
  const double z1 = m.Forward(x).z1;
  const auto g = m.InputGradient(x);
  const std::vector<double> a = {0.2, -1.5, 2.5};
  for (size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], z1 * (1 - z1) * a[i], 1e-15);
}

TEST(GradientTest, MatchesCentralDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng.Index(10);
    const MlpModel m = MlpModel::Random({n, 1 + rng.Index(8), 1 + rng.Index(6), 2},
                                        1000 + trial, 1.5);
    auto x = RandomInput(n, rng);
    const auto g = m.InputGradient(x);
    for (size_t i = 0; i < n; ++i) {
      const double h = 1e-5;
      const double orig = x[i];
      x[i] = orig + h;
      const double up = m.Forward(x).z1;
      x[i] = orig - h;
      const double down = m.Forward(x).z1;
      x[i] = orig;
      EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-5) << "trial " << trial;
    }
  }
}

TEST(SerializeTest, RoundTripIsBitExact) {
  MlpModel m = MlpModel::Random({6, 5, 4, 2}, 42, 2.0);
  m.set_feature_schema_hash("abc123");
  const MlpModel back = MlpModel::Parse(m.Serialize());
  EXPECT_EQ(back.feature_schema_hash(), "abc123");
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = RandomInput(6, rng);
    EXPECT_EQ(back.Forward(x).z1, m.Forward(x).z1);
  }
  EXPECT_EQ(back.Serialize(), m.Serialize());
}

TEST(SerializeTest, TruncatedFileIsParseError) {
  const std::string text = MlpModel::Random({3, 2}, 1).Serialize();
  try {
    MlpModel::Parse(text.substr(0, text.size() / 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
}

TEST(SerializeTest, ShapeMismatchNamesLayer) {
  auto j = MlpModel::Random({3, 4, 2}, 1).ToJson();
  j["layer_sizes"] = {3, 5, 2};
  try {
    MlpModel::FromJson(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
  j = MlpModel::Random({3, 4, 2}, 1).ToJson();
  j["weights"][1][0].push_back(1.0);
  try {
    MlpModel::FromJson(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(TrainTest, LearnsXor) {
  const auto ds = MakeDataset({{0, 0}, {0, 1}, {1, 0}, {1, 1}},
                              {data::HardTarget(0), data::HardTarget(1),
                               data::HardTarget(1), data::HardTarget(0)});
  TrainConfig cfg{.epochs = 2000, .batch_size = 4, .learning_rate = 0.1,
                  .seed = 3, .l2_penalty = 0.0, .lr_decay = 0.0};
  const TrainResult r = Train(ds, {2, 2, 2}, cfg);
  EXPECT_EQ(Accuracy(r.model, ds), 1.0);
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(TrainTest, SoftLabelPullsScoreToHalf) {
  const auto ds = MakeDataset({{1.0, -2.0}}, {data::Target{0.5, 0.5}});
  TrainConfig cfg{.epochs = 300, .batch_size = 1, .learning_rate = 0.05,
                  .seed = 4, .lr_decay = 0.0, .standardize = false};
  const TrainResult r = Train(ds, {2, 3, 2}, cfg);
  EXPECT_NEAR(r.model.Forward(ds.row(0)).z1, 0.5, 1e-3);
}

TEST(TrainTest, DeterministicUnderSeed) {
  Rng rng(8);
  std::vector<std::vector<double>> rows;
  std::vector<data::Target> t;
  for (int i = 0; i < 60; ++i) {
    rows.push_back(RandomInput(3, rng));
    t.push_back(data::HardTarget(rows.back()[0] + rows.back()[1] > 0));
  }
  const auto ds = MakeDataset(rows, t);
  TrainConfig cfg{.epochs = 20, .batch_size = 8, .seed = 11};
  const TrainResult a = Train(ds, {3, 4, 2}, cfg);
  const TrainResult b = Train(ds, {3, 4, 2}, cfg);
  EXPECT_EQ(a.model.Serialize(), b.model.Serialize());
  cfg.seed = 12;
  EXPECT_NE(Train(ds, {3, 4, 2}, cfg).model.Serialize(), a.model.Serialize());
  // Late epochs beat the first one.
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());
}

TEST(TrainTest, StandardisationFoldIsExact) {
  Rng rng(9);
  std::vector<std::vector<double>> rows;
  std::vector<data::Target> t;
  for (int i = 0; i < 40; ++i) {
    rows.push_back({1000.0 + 200.0 * rng.Normal(), 0.01 * rng.Normal()});
    t.push_back(data::HardTarget(rows.back()[0] > 1000.0));
  }
  const auto ds = MakeDataset(rows, t);
  const TrainResult r = Train(ds, {2, 3, 2}, {.epochs = 50, .batch_size = 4});
  EXPECT_NEAR(MeanLoss(r.model, ds), r.final_loss, 1e-9);
}

TEST(TrainTest, Errors) {
  data::Dataset empty = MakeDataset({{1.0}}, {data::HardTarget(0)});
  empty = data::Subset(empty, std::vector<size_t>{});
  EXPECT_EQ(CodeOf([&] { Train(empty, {1, 2}, {}); }), ErrorCode::kInvalidInput);
  const auto ds = MakeDataset({{1e150}, {1e150}},
                              {data::HardTarget(0), data::HardTarget(1)});
  TrainConfig wild{.epochs = 5, .batch_size = 1, .learning_rate = 1e300,
                   .standardize = false};
  try {
    Train(ds, {1, 2}, wild);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
    EXPECT_NE(std::string(e.what()).find("at epoch "), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace flipaudit::model
