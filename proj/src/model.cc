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

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::model {
namespace {

using linalg::Matrix;
using nlohmann::json;

constexpr double kTwoOverSqrtPi = 1.1283791670955126;

double Sigmoid(double h) {
  if (h >= 0.0) return 1.0 / (1.0 + std::exp(-h));
  const double e = std::exp(h);
  return e / (1.0 + e);
}

double Softplus(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

// Cross entropy of soft target t against softmax scores with margin h.
double CrossEntropy(double h, const data::Target& t) {
  return t[0] * Softplus(-h) + t[1] * Softplus(h);
}

// Activations of one forward pass. pre[l] / post[l] hold layer l + 1.
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

void RunForward(const std::vector<Matrix>& weights,
                const std::vector<std::vector<double>>& biases,
                std::span<const double> x, Trace& trace) {
  const size_t layers = weights.size();
  trace.pre.resize(layers);
  trace.post.resize(layers);
  std::span<const double> in = x;
  for (size_t l = 0; l < layers; ++l) {
    const Matrix& w = weights[l];
    auto& pre = trace.pre[l];
    auto& post = trace.post[l];
    pre.resize(w.rows());
    post.resize(w.rows());
    for (size_t i = 0; i < w.rows(); ++i) {
      const auto wr = w.row(i);
      double s = biases[l][i];
      for (size_t j = 0; j < wr.size(); ++j) s += wr[j] * in[j];
      pre[i] = s;
      post[i] = l + 1 < layers ? std::erf(s) : s;
    }
    in = post;
  }
}

// Back-propagates an output adjoint (d/dlogit1, d/dlogit2) and returns the
// adjoint of the input. When `grads` is non-null the parameter gradients
// are accumulated into it (weights first, then biases, layer by layer).
std::vector<double> RunBackward(const std::vector<Matrix>& weights,
                                std::span<const double> x, const Trace& trace,
                                double d1, double d2,
                                std::vector<Matrix>* weight_grads,
                                std::vector<std::vector<double>>* bias_grads,
                                bool need_input) {
  const size_t layers = weights.size();
  std::vector<double> delta = {d1, d2};
  std::vector<double> next;
  for (size_t l = layers; l-- > 0;) {
    const Matrix& w = weights[l];
    std::span<const double> in = l == 0 ? x : std::span<const double>(trace.post[l - 1]);
    if (weight_grads) {
      Matrix& gw = (*weight_grads)[l];
      auto& gb = (*bias_grads)[l];
      for (size_t i = 0; i < w.rows(); ++i) {
        const double di = delta[i];
        if (di == 0.0) continue;
        auto gr = gw.row(i);
        for (size_t j = 0; j < gr.size(); ++j) gr[j] += di * in[j];
        gb[i] += di;
      }
    }
    if (l == 0 && !need_input) break;
    next.assign(w.cols(), 0.0);
    for (size_t i = 0; i < w.rows(); ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      const auto wr = w.row(i);
      for (size_t j = 0; j < wr.size(); ++j) next[j] += wr[j] * di;
    }
    if (l > 0) {
      const auto& pre = trace.pre[l - 1];
      for (size_t j = 0; j < next.size(); ++j) {
        next[j] *= kTwoOverSqrtPi * std::exp(-pre[j] * pre[j]);
      }
    }
    delta.swap(next);
  }
  return delta;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MlpModel::MlpModel(std::vector<size_t> layer_sizes,
                   std::vector<Matrix> weights,
                   std::vector<std::vector<double>> biases)
    : layer_sizes_(std::move(layer_sizes)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  CheckShapes();
}

void MlpModel::CheckShapes() const {
  if (layer_sizes_.size() < 2 || layer_sizes_.back() != 2) {
    throw Error(ErrorCode::kShape,
                "layer_sizes needs an input width and a final width of 2");
  }
  if (weights_.size() != layer_sizes_.size() - 1 ||
      biases_.size() != layer_sizes_.size() - 1) {
    throw Error(ErrorCode::kShape, "expected " +
                                       std::to_string(layer_sizes_.size() - 1) +
                                       " weight and bias layers");
  }
  for (size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].rows() != layer_sizes_[l + 1] ||
        weights_[l].cols() != layer_sizes_[l] ||
        biases_[l].size() != layer_sizes_[l + 1]) {
      throw Error(ErrorCode::kShape,
                  "layer " + std::to_string(l) + ": weights are " +
                      std::to_string(weights_[l].rows()) + "x" +
                      std::to_string(weights_[l].cols()) + " with " +
                      std::to_string(biases_[l].size()) +
                      " biases, layer_sizes imply " +
                      std::to_string(layer_sizes_[l + 1]) + "x" +
                      std::to_string(layer_sizes_[l]));
    }
    if (!weights_[l].AllFinite() ||
        !std::all_of(biases_[l].begin(), biases_[l].end(),
                     [](double v) { return std::isfinite(v); })) {
      throw Error(ErrorCode::kInvalidInput,
                  "layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

MlpModel MlpModel::Zeros(std::vector<size_t> layer_sizes) {
  std::vector<Matrix> w;
  std::vector<std::vector<double>> b;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    w.emplace_back(layer_sizes[l + 1], layer_sizes[l]);
    b.emplace_back(layer_sizes[l + 1], 0.0);
  }
  return MlpModel(std::move(layer_sizes), std::move(w), std::move(b));
}

MlpModel MlpModel::Random(std::vector<size_t> layer_sizes, uint64_t seed,
                          double scale) {
  MlpModel m = Zeros(layer_sizes);
  Rng rng(seed);
  for (size_t l = 0; l < m.weights_.size(); ++l) {
    const double a = scale * std::sqrt(3.0 / static_cast<double>(layer_sizes[l]));
    Matrix& w = m.weights_[l];
    for (size_t i = 0; i < w.rows(); ++i) {
      for (double& v : w.row(i)) v = rng.Uniform(-a, a);
    }
  }
  return m;
}

void MlpModel::BindSchema(const data::FeatureSchema& schema) {
  if (schema.size() != input_size()) CheckSchema(schema);
  schema_hash_ = schema.Hash();
  feature_names_ = schema.FeatureNames();
  scale_weights_ = schema.ScaleWeights();
}

void MlpModel::CheckSchema(const data::FeatureSchema& schema) const {
  if (schema.size() != input_size()) {
    throw Error(ErrorCode::kShape, "model expects " +
                                       std::to_string(input_size()) +
                                       " inputs but the schema has " +
                                       std::to_string(schema.size()));
  }
  if (!schema_hash_.empty() && schema_hash_ != schema.Hash()) {
    throw Error(ErrorCode::kShape,
                "model was trained on a different feature layout");
  }
}

double MlpModel::Margin(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.size()) +
                                       " features, model expects " +
                                       std::to_string(input_size()));
  }
  Trace trace;
  RunForward(weights_, biases_, x, trace);
  return trace.post.back()[0] - trace.post.back()[1];
}

Scores MlpModel::Forward(std::span<const double> x) const {
  const double h = Margin(x);
  return {Sigmoid(h), Sigmoid(-h)};
}

int MlpModel::Predict(std::span<const double> x) const {
  return Margin(x) >= 0.0 ? 0 : 1;
}

double MlpModel::MarginGradient(std::span<const double> x,
                                std::span<double> grad) const {
  if (x.size() != input_size() || grad.size() != input_size()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.size()) +
                                       " features, model expects " +
                                       std::to_string(input_size()));
  }
  Trace trace;
  RunForward(weights_, biases_, x, trace);
  const auto g = RunBackward(weights_, x, trace, 1.0, -1.0, nullptr, nullptr, true);
  std::copy(g.begin(), g.end(), grad.begin());
  return trace.post.back()[0] - trace.post.back()[1];
}

std::vector<double> MlpModel::InputGradient(std::span<const double> x) const {
  std::vector<double> g(input_size());
  const double h = MarginGradient(x, g);
  const double z1 = Sigmoid(h);
  const double s = z1 * (1.0 - z1);
  for (double& v : g) v *= s;
  return g;
}

json MlpModel::ToJson() const {
  json j;
  j["layer_sizes"] = layer_sizes_;
  json w = json::array();
  for (const Matrix& m : weights_) {
    json rows = json::array();
    for (size_t r = 0; r < m.rows(); ++r) {
      rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    w.push_back(std::move(rows));
  }
  j["weights"] = std::move(w);
  j["biases"] = biases_;
  j["activation"] = "erf";
  j["feature_schema_hash"] = schema_hash_;
  if (!feature_names_.empty()) j["feature_names"] = feature_names_;
  if (!scale_weights_.empty()) j["scale_weights"] = scale_weights_;
  return j;
}

MlpModel MlpModel::FromJson(const json& j) {
  MlpModel m;
  try {
    m.layer_sizes_ = j.at("layer_sizes").get<std::vector<size_t>>();
    const std::string activation = j.value("activation", std::string("erf"));
    if (activation != "erf") {
      throw Error(ErrorCode::kSchema, "unsupported activation '" + activation + "'");
    }
    const json& jw = j.at("weights");
    const json& jb = j.at("biases");
    if (!jw.is_array() || !jb.is_array()) {
      throw Error(ErrorCode::kSchema, "weights and biases must be arrays");
    }
    if (m.layer_sizes_.size() < 2 || m.layer_sizes_.back() != 2) {
      throw Error(ErrorCode::kSchema,
                  "layer_sizes must have at least two entries and end in 2");
    }
    if (jw.size() != m.layer_sizes_.size() - 1 ||
        jb.size() != m.layer_sizes_.size() - 1) {
      throw Error(ErrorCode::kSchema,
                  "layer_sizes implies " +
                      std::to_string(m.layer_sizes_.size() - 1) +
                      " layers but the file has " + std::to_string(jw.size()) +
                      " weight and " + std::to_string(jb.size()) + " bias arrays");
    }
    for (size_t l = 0; l < jw.size(); ++l) {
      const size_t out = m.layer_sizes_[l + 1];
      const size_t in = m.layer_sizes_[l];
      const std::string where = "layer " + std::to_string(l);
      if (!jw[l].is_array() || jw[l].size() != out) {
        throw Error(ErrorCode::kSchema, where + ": expected " +
                                            std::to_string(out) + " weight rows");
      }
      Matrix w(out, in);
      for (size_t r = 0; r < out; ++r) {
        const auto row = jw[l][r].get<std::vector<double>>();
        if (row.size() != in) {
          throw Error(ErrorCode::kSchema,
                      where + ": weight row " + std::to_string(r) + " has " +
                          std::to_string(row.size()) + " entries, expected " +
                          std::to_string(in));
        }
        std::copy(row.begin(), row.end(), w.row(r).begin());
      }
      auto b = jb[l].get<std::vector<double>>();
      if (b.size() != out) {
        throw Error(ErrorCode::kSchema, where + ": expected " +
                                            std::to_string(out) + " biases, got " +
                                            std::to_string(b.size()));
      }
      m.weights_.push_back(std::move(w));
      m.biases_.push_back(std::move(b));
    }
    m.schema_hash_ = j.value("feature_schema_hash", std::string());
    if (j.contains("feature_names")) {
      m.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    }
    if (j.contains("scale_weights")) {
      m.scale_weights_ = j.at("scale_weights").get<std::vector<double>>();
      if (m.scale_weights_.size() != m.input_size()) {
        throw Error(ErrorCode::kSchema, "scale_weights has " +
                                            std::to_string(m.scale_weights_.size()) +
                                            " entries, the model takes " +
                                            std::to_string(m.input_size()) + " inputs");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("malformed model: ") + e.what());
  }
  try {
    m.CheckShapes();
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchema, e.what());
  }
  return m;
}

std::string MlpModel::Serialize() const { return ToJson().dump(1) + "\n"; }

MlpModel MlpModel::Parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, "model file is malformed at byte " +
                                       std::to_string(e.byte) + ": " + e.what());
  }
  return FromJson(j);
}

void MlpModel::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << Serialize();
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

MlpModel MlpModel::Load(const std::string& path) { return Parse(ReadFile(path)); }

// ---------------------------------------------------------------------------
// Training

double MeanLoss(const MlpModel& model, const data::Dataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  double sum = 0.0;
  for (size_t r = 0; r < dataset.size(); ++r) {
    sum += CrossEntropy(model.Margin(dataset.row(r)), dataset.targets[r]);
  }
  return sum / static_cast<double>(dataset.size());
}

double Accuracy(const MlpModel& model, const data::Dataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  size_t correct = 0;
  for (size_t r = 0; r < dataset.size(); ++r) {
    correct += model.Predict(dataset.row(r)) == dataset.Label(r);
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrainResult Train(const data::Dataset& dataset, std::vector<size_t> layer_sizes,
                  const TrainConfig& config) {
  const size_t n = dataset.size();
  if (n == 0) throw Error(ErrorCode::kInvalidInput, "training set is empty");
  if (config.epochs == 0 || config.batch_size == 0 ||
      !(config.learning_rate > 0.0) || !(config.l2_penalty >= 0.0) ||
      !(config.momentum >= 0.0 && config.momentum < 1.0) ||
      !(config.lr_decay >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid training configuration");
  }
  if (layer_sizes.empty() || layer_sizes.front() != dataset.features.cols()) {
    throw Error(ErrorCode::kShape, "first layer width must equal the " +
                                       std::to_string(dataset.features.cols()) +
                                       " dataset features");
  }
  const size_t d = dataset.features.cols();

  // Standardised copy of the inputs.
  std::vector<double> mean(d, 0.0);
  std::vector<double> scale(d, 1.0);
  if (config.standardize) {
    for (size_t r = 0; r < n; ++r) {
      const auto x = dataset.row(r);
      for (size_t c = 0; c < d; ++c) mean[c] += x[c];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (size_t r = 0; r < n; ++r) {
      const auto x = dataset.row(r);
      for (size_t c = 0; c < d; ++c) var[c] += (x[c] - mean[c]) * (x[c] - mean[c]);
    }
    for (size_t c = 0; c < d; ++c) {
      const double s = std::sqrt(var[c] / static_cast<double>(n));
      scale[c] = s > 1e-12 ? s : 1.0;
    }
  }
  Matrix xs(n, d);
  for (size_t r = 0; r < n; ++r) {
    const auto x = dataset.row(r);
    auto out = xs.row(r);
    for (size_t c = 0; c < d; ++c) out[c] = (x[c] - mean[c]) / scale[c];
  }

  MlpModel init = MlpModel::Random(layer_sizes, config.seed);
  std::vector<Matrix> w = init.weights();
  std::vector<std::vector<double>> b = init.biases();
  std::vector<Matrix> vw, gw;
  std::vector<std::vector<double>> vb, gb;
  for (size_t l = 0; l < w.size(); ++l) {
    vw.emplace_back(w[l].rows(), w[l].cols());
    gw.emplace_back(w[l].rows(), w[l].cols());
    vb.emplace_back(b[l].size(), 0.0);
    gb.emplace_back(b[l].size(), 0.0);
  }

  auto full_loss = [&]() {
    Trace t;
    double sum = 0.0;
    for (size_t r = 0; r < n; ++r) {
      RunForward(w, b, xs.row(r), t);
      sum += CrossEntropy(t.post.back()[0] - t.post.back()[1], dataset.targets[r]);
    }
    return sum / static_cast<double>(n);
  };

  TrainResult result;
  result.initial_loss = full_loss();
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Trace trace;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    const double lr =
        config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(epoch));
    double epoch_loss = 0.0;
    for (size_t start = 0; start < n; start += config.batch_size) {
      const size_t stop = std::min(n, start + config.batch_size);
      for (size_t l = 0; l < w.size(); ++l) {
        std::fill(gb[l].begin(), gb[l].end(), 0.0);
        for (size_t i = 0; i < gw[l].rows(); ++i) {
          auto row = gw[l].row(i);
          std::fill(row.begin(), row.end(), 0.0);
        }
      }
      for (size_t k = start; k < stop; ++k) {
        const size_t r = order[k];
        const auto x = xs.row(r);
        RunForward(w, b, x, trace);
        const double h = trace.post.back()[0] - trace.post.back()[1];
        const data::Target& t = dataset.targets[r];
        epoch_loss += CrossEntropy(h, t);
        const double dh = Sigmoid(h) - t[0];
        RunBackward(w, x, trace, dh, -dh, &gw, &gb, false);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (size_t l = 0; l < w.size(); ++l) {
        auto we = w[l].row(0).data();
        auto ve = vw[l].row(0).data();
        auto ge = gw[l].row(0).data();
        const size_t count = w[l].rows() * w[l].cols();
        for (size_t i = 0; i < count; ++i) {
          const double g = ge[i] * inv + config.l2_penalty * we[i];
          ve[i] = config.momentum * ve[i] - lr * g;
          we[i] += ve[i];
        }
        for (size_t i = 0; i < b[l].size(); ++i) {
          vb[l][i] = config.momentum * vb[l][i] - lr * gb[l][i] * inv;
          b[l][i] += vb[l][i];
        }
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::kDivergence,
                  "training loss became non-finite at epoch " +
                      std::to_string(epoch + 1));
    }
    result.loss_trace.push_back(epoch_loss);
  }
  result.final_loss = full_loss();
  if (!std::isfinite(result.final_loss)) {
    throw Error(ErrorCode::kDivergence,
                "training loss became non-finite at epoch " +
                    std::to_string(config.epochs));
  }

  // Fold the standardisation into the first layer: W' = W diag(1/s),
  // b' = b - W' mean.
  Matrix& w0 = w[0];
  for (size_t i = 0; i < w0.rows(); ++i) {
    auto row = w0.row(i);
    double shift = 0.0;
    for (size_t c = 0; c < d; ++c) {
      row[c] /= scale[c];
      shift += row[c] * mean[c];
    }
    b[0][i] -= shift;
  }
  result.model = MlpModel(std::move(layer_sizes), std::move(w), std::move(b));
  result.model.BindSchema(dataset.schema);
  return result;
}

}  // namespace flipaudit::model
