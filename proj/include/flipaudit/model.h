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

#ifndef FLIPAUDIT_MODEL_H_
#define FLIPAUDIT_MODEL_H_

// Fully connected two-class classifier with erf hidden units and a softmax
// head, plus training and JSON persistence.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flipaudit/data.h"
#include "flipaudit/linalg.h"
#include "json.hpp"

namespace flipaudit::model {

// Softmax scores; z1 scores class 0.
struct Scores {
  double z1 = 0.5;
  double z2 = 0.5;
};

class MlpModel {
 public:
  MlpModel() = default;
  // weights[l] is layer_sizes[l + 1] x layer_sizes[l]. Throws kShape when
  // the shapes do not chain or the last layer is not 2 wide, and
  // kInvalidInput for non-finite parameters.
  MlpModel(std::vector<size_t> layer_sizes, std::vector<linalg::Matrix> weights,
           std::vector<std::vector<double>> biases);

  static MlpModel Zeros(std::vector<size_t> layer_sizes);
  // Uniform in +-sqrt(3 / fan_in) * scale, biases zero.
  static MlpModel Random(std::vector<size_t> layer_sizes, uint64_t seed,
                         double scale = 1.0);

  const std::vector<size_t>& layer_sizes() const { return layer_sizes_; }
  const std::vector<linalg::Matrix>& weights() const { return weights_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }
  size_t input_size() const { return layer_sizes_.front(); }
  size_t num_layers() const { return weights_.size(); }

  // Schema binding. The hash is checked by callers that pair a model with
  // a dataset; names and weights are informational.
  const std::string& feature_schema_hash() const { return schema_hash_; }
  void set_feature_schema_hash(std::string hash) { schema_hash_ = std::move(hash); }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  void set_feature_names(std::vector<std::string> names) {
    feature_names_ = std::move(names);
  }
  const std::vector<double>& scale_weights() const { return scale_weights_; }
  void set_scale_weights(std::vector<double> weights) { scale_weights_ = std::move(weights); }
  // Binds the model to a schema (hash, feature names and scale weights).
  void BindSchema(const data::FeatureSchema& schema);
  // Throws kShape when the model does not match the schema.
  void CheckSchema(const data::FeatureSchema& schema) const;

  Scores Forward(std::span<const double> x) const;
  // Logit difference logit1 - logit2; z1 = 1 / (1 + exp(-margin)).
  double Margin(std::span<const double> x) const;
  // Margin plus its gradient with respect to x (written to `grad`).
  double MarginGradient(std::span<const double> x, std::span<double> grad) const;
  // Exact d z1 / d x.
  std::vector<double> InputGradient(std::span<const double> x) const;
  // 0 when z1 >= 0.5, else 1.
  int Predict(std::span<const double> x) const;

  nlohmann::json ToJson() const;
  // Throws kSchema on inconsistent shapes, naming the layer.
  static MlpModel FromJson(const nlohmann::json& j);
  std::string Serialize() const;
  // Throws kParse with the byte offset for malformed text.
  static MlpModel Parse(std::string_view text);
  void Save(const std::string& path) const;
  static MlpModel Load(const std::string& path);

 private:
  void CheckShapes() const;

  std::vector<size_t> layer_sizes_;
  std::vector<linalg::Matrix> weights_;
  std::vector<std::vector<double>> biases_;
  std::string schema_hash_;
  std::vector<std::string> feature_names_;
  std::vector<double> scale_weights_;
};

struct TrainConfig {
  size_t epochs = 20;
  size_t batch_size = 64;
  double learning_rate = 0.005;
  uint64_t seed = 1;
  double l2_penalty = 1e-3;
  double momentum = 0.9;
  // Learning rate at epoch e is learning_rate / (1 + lr_decay * e).
  double lr_decay = 0.05;
  // Standardize inputs during training; folded back into the first layer.
  bool standardize = true;
};

struct TrainResult {
  MlpModel model;
  // Mean mini-batch loss per epoch.
  std::vector<double> loss_trace;
  // Full-data loss of the initial and final model.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Soft-target cross entropy -sum_i t_i log z_i with L2 on the weights.
// Throws kInvalidInput for an empty dataset and kDivergence (naming the
// epoch) if the loss stops being finite.
TrainResult Train(const data::Dataset& dataset, std::vector<size_t> layer_sizes,
                  const TrainConfig& config);

// Mean cross entropy over the dataset (no regularisation).
double MeanLoss(const MlpModel& model, const data::Dataset& dataset);
// Fraction of rows whose predicted class equals the hard label.
double Accuracy(const MlpModel& model, const data::Dataset& dataset);

}  // namespace flipaudit::model

#endif  // FLIPAUDIT_MODEL_H_
