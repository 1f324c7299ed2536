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

#include "flipaudit/cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "flipaudit/audit.h"
#include "flipaudit/data.h"
#include "flipaudit/debias.h"
#include "flipaudit/error.h"
#include "flipaudit/explain.h"
#include "flipaudit/flipsolve.h"
#include "flipaudit/model.h"
#include "flipaudit/util.h"
#include "json.hpp"

namespace flipaudit::cli {
namespace {

using nlohmann::json;

void WriteFile(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  f << content;
  f.close();
  if (!f) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

// JSON goes to --output when given (text summary to `out`), else to `out`.
void Emit(const CliConfig& c, const json& artifact, const std::string& text,
          std::ostream& out) {
  if (c.output_path.empty()) {
    out << artifact.dump(2) << "\n";
  } else {
    WriteFile(c.output_path, artifact.dump(2) + "\n");
    out << text;
  }
}

int Threads(const CliConfig& c) { return c.threads > 0 ? c.threads : DefaultThreadCount(); }

flipsolve::SolverOptions Solver(const CliConfig& c) {
  flipsolve::SolverOptions s;
  s.seed = c.seed;
  s.restarts = c.restarts;
  return s;
}

model::TrainConfig Training(const CliConfig& c) {
  model::TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.l2_penalty = c.l2_penalty;
  t.lr_decay = c.lr_decay;
  t.seed = c.seed;
  return t;
}

std::vector<size_t> Layers(const CliConfig& c, size_t inputs) {
  std::vector<size_t> layers = {inputs};
  layers.insert(layers.end(), c.hidden.begin(), c.hidden.end());
  layers.push_back(2);
  return layers;
}

class Clock {
 public:
  Clock() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string Fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

data::Dataset LoadData(const std::string& path, const CliConfig& c) {
  data::Dataset d = data::LoadCsv(path, c.schema_path);
  if (!c.drop_features.empty()) d = data::DropFeatures(d, c.drop_features);
  return d;
}

// Training rows (filtered, with fitted scale weights) and the held-out rows.
struct TrainTest {
  data::Dataset train;
  data::Dataset test;
};

TrainTest LoadTraining(const CliConfig& c, std::ostream& err) {
  TrainTest t;
  t.train = LoadData(c.data_path, c);
  if (c.test_fraction > 0.0) {
    if (!c.test_path.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--test and --test-fraction are exclusive");
    }
    std::tie(t.train, t.test) = data::Split(t.train, c.test_fraction, c.seed);
  } else if (!c.test_path.empty()) {
    t.test = LoadData(c.test_path, c);
  }
  if (!c.filter.empty()) {
    const auto filter = data::GroupFilter::Parse(c.filter, t.train.schema);
    const size_t before = t.train.size();
    t.train = data::Undersample(t.train, filter, c.keep, c.seed);
    err << "under-sampled '" << c.filter << "' to " << c.keep << ": " << before << " -> "
        << t.train.size() << " rows\n";
  }
  t.train.schema = data::FitScaleWeights(t.train);
  t.test.schema = t.train.schema;
  return t;
}

// Model plus a dataset whose schema carries the model's scale weights.
struct Loaded {
  model::MlpModel model;
  data::Dataset data;
};

Loaded LoadModelAndData(const CliConfig& c) {
  Loaded l;
  l.model = model::MlpModel::Load(c.model_path);
  l.data = LoadData(c.data_path, c);
  l.model.CheckSchema(l.data.schema);
  if (l.model.scale_weights().size() == l.data.schema.size()) {
    l.data.schema = l.data.schema.WithScaleWeights(l.model.scale_weights());
  } else {
    l.data.schema = data::FitScaleWeights(l.data);
  }
  return l;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

audit::BuildOptions Build(const CliConfig& c) {
  audit::BuildOptions b;
  b.constraint = flipsolve::FlipConstraint::Parse(c.constraint);
  b.constraint.enforce_integer = c.integer;
  b.solver = Solver(c);
  b.threads = Threads(c);
  b.max_rows = c.max_rows;
  b.seed = c.seed;
  return b;
}

int RunTrain(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const auto [train, test] = LoadTraining(c, err);
  const auto layers = Layers(c, train.schema.size());
  const auto config = Training(c);
  json summary = {{"rows", train.size()}};
  if (c.folds > 0) {
    std::vector<double> accuracies;
    size_t k = 0;
    for (const auto& [tr, te] : data::KFold(train, c.folds, c.seed)) {
      Clock clock;
      const auto r = model::Train(tr, layers, config);
      accuracies.push_back(model::Accuracy(r.model, te));
      err << "fold " << ++k << ": test accuracy " << Fixed(accuracies.back(), 4) << " ("
          << Fixed(clock.Seconds(), 1) << " s)\n";
    }
    double mean = 0.0;
    for (double a : accuracies) mean += a / static_cast<double>(accuracies.size());
    summary["fold_accuracies"] = accuracies;
    summary["mean_fold_accuracy"] = mean;
  }
  Clock clock;
  const auto result = model::Train(train, layers, config);
  err << "trained " << layers.size() - 1 << " layers in " << Fixed(clock.Seconds(), 1)
      << " s, loss " << result.initial_loss << " -> " << result.final_loss << "\n";
  result.model.Save(c.output_path);
  std::ostringstream line;
  summary["train_accuracy"] = model::Accuracy(result.model, train);
  line << "train_accuracy " << Fixed(summary["train_accuracy"].get<double>(), 4);
  if (test.size() > 0) {
    summary["test_rows"] = test.size();
    summary["test_accuracy"] = model::Accuracy(result.model, test);
    line << " test_accuracy " << Fixed(summary["test_accuracy"].get<double>(), 4);
  }
  if (summary.contains("mean_fold_accuracy")) {
    line << " mean_fold_accuracy " << Fixed(summary["mean_fold_accuracy"].get<double>(), 4);
  }
  out << line.str() << "\n";
  if (!c.json_path.empty()) WriteFile(c.json_path, summary.dump(2) + "\n");
  return 0;
}

int RunExplain(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const Loaded l = LoadModelAndData(c);
  size_t row = 0;
  if (!c.row_id.empty()) {
    const auto it = std::find(l.data.row_ids.begin(), l.data.row_ids.end(), c.row_id);
    if (it == l.data.row_ids.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no row with id '" + c.row_id + "'");
    }
    row = static_cast<size_t>(it - l.data.row_ids.begin());
  } else if (c.index) {
    row = *c.index;
  }
  if (row >= l.data.size()) {
    throw Error(ErrorCode::kInvalidArgument, "row index " + std::to_string(row) +
                                                 " is out of range for " +
                                                 std::to_string(l.data.size()) + " rows");
  }
  explain::ExplainOptions options;
  options.singles = c.singles;
  options.pairs = c.pairs;
  options.groups = c.groups;
  options.enforce_integer = c.integer;
  options.solver = Solver(c);
  options.threads = Threads(c);
  options.change_threshold = c.threshold;
  options.row_id = "row " + l.data.row_ids[row];
  for (const auto& s : c.subsets) options.custom.push_back(SplitList(s));
  const auto report = explain::BuildReport(l.model, l.data.schema, l.data.row(row),
                                           l.data.schema.ScaleGroups(), options);
  err << "report built in " << Fixed(report.timing.total_seconds, 2) << " s\n";
  const std::string text = explain::RenderText(report, l.model);
  if (c.output_path.empty()) {
    out << text;
  } else {
    WriteFile(c.output_path, text);
  }
  if (!c.json_path.empty()) WriteFile(c.json_path, explain::RenderJson(report).dump(2) + "\n");
  return 0;
}

std::map<std::string, double> Thresholds(const CliConfig& c) {
  std::map<std::string, double> out;
  for (const auto& item : c.thresholds) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "threshold '" + item + "' is not name=value");
    }
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "threshold '" + item + "' has no number");
    }
  }
  return out;
}

int RunAudit(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const Loaded l = LoadModelAndData(c);
  Clock clock;
  audit::DirectionMatrix dirs = audit::BuildDirections(l.model, l.data, Build(c));
  err << "computed " << dirs.size() << " flip directions (" << dirs.excluded.size()
      << " excluded) in " << Fixed(clock.Seconds(), 1) << " s\n";
  if (c.rows == "correct") {
    dirs = dirs.Correct(true);
  } else if (c.rows == "misclassified") {
    dirs = dirs.Correct(false);
  } else if (c.rows != "all") {
    throw Error(ErrorCode::kInvalidArgument, "--rows must be all, correct or misclassified");
  }
  json artifact = {{"rows", dirs.size()},
                   {"excluded", dirs.excluded.size()},
                   {"coverage", dirs.coverage()},
                   {"constraint", c.constraint}};
  std::string text;
  const auto ranking = audit::RankInfluence(dirs);
  artifact["ranking"] = ranking.ToJson();
  text += audit::RenderText(ranking, 15);
  if (dirs.size() >= 2) {
    const auto pca = audit::PcaDirections(dirs);
    artifact["pca"] = pca.ToJson();
    text += audit::RenderText(pca, 10);
  }
  const auto freq = audit::ChangeFrequency(dirs, l.data.schema, c.threshold, Thresholds(c));
  json fj = json::array();
  for (const auto& f : freq) fj.push_back(f.ToJson());
  artifact["change_frequency"] = fj;
  text += audit::RenderText(freq);
  const auto prox = audit::Proximity(dirs);
  artifact["proximity"] = prox.ToJson();
  text += "Median distance to the boundary: correct " + Fixed(prox.median_correct, 4) +
          ", misclassified " + Fixed(prox.median_misclassified, 4) + "\n";
  Emit(c, artifact, text, out);
  return 0;
}

int RunSwapAudit(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const Loaded l = LoadModelAndData(c);
  Clock clock;
  const auto report = audit::SwapBinaryAudit(l.model, l.data, c.feature, Build(c));
  err << "swap audit finished in " << Fixed(clock.Seconds(), 1) << " s\n";
  Emit(c, report.ToJson(), audit::RenderText(report), out);
  return 0;
}

int RunRankRedundant(const CliConfig& c, std::ostream& out, std::ostream&) {
  data::Dataset d = LoadData(c.data_path, c);
  if (c.test_fraction > 0.0) d = data::Split(d, c.test_fraction, c.seed).first;
  const auto report = audit::RankRedundant(d, c.tolerance, c.drop);
  Emit(c, report.ToJson(), audit::RenderText(report), out);
  return 0;
}

int RunDebias(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const auto [train, test] = LoadTraining(c, err);
  const auto layers = Layers(c, train.schema.size());
  const auto config = Training(c);

  model::MlpModel before;
  if (!c.model_path.empty()) {
    before = model::MlpModel::Load(c.model_path);
    before.CheckSchema(train.schema);
  } else {
    Clock clock;
    before = model::Train(train, layers, config).model;
    err << "trained the baseline in " << Fixed(clock.Seconds(), 1) << " s\n";
  }

  debias::SelectionRule rule;
  rule.feature = c.feature;
  rule.mode = debias::ParseLabelMode(c.label_mode);
  const auto& classes = train.schema.label().classes;
  rule.increase_label = 1;
  if (!c.increase_class.empty()) {
    const auto it = std::find(classes.begin(), classes.end(), c.increase_class);
    if (it == classes.end()) {
      throw Error(ErrorCode::kInvalidArgument, "unknown class '" + c.increase_class + "'");
    }
    rule.increase_label = static_cast<int>(it - classes.begin());
  }
  debias::SelectOptions select;
  select.solver = Solver(c);
  select.threads = Threads(c);
  if (c.constraint != "all" && c.constraint != c.feature) {
    select.constraint = flipsolve::FlipConstraint::Parse(c.constraint);
  }
  Clock clock;
  const auto plan = debias::SelectCounteractingFlips(before, train, rule, select);
  err << "selected " << plan.size() << " counteracting flips in " << Fixed(clock.Seconds(), 1)
      << " s\n";
  if (!plan.warning.empty()) err << "warning: " << plan.warning << "\n";
  const auto result = debias::AugmentAndRetrain(train, plan, layers, config);
  if (!c.json_path.empty()) result.training.model.Save(c.json_path);

  audit::BuildOptions build = Build(c);
  build.constraint = flipsolve::FlipConstraint::All();
  debias::ComparisonBundle bundle;
  bundle.feature = c.feature;
  bundle.plan = plan;
  bundle.original_rows = train.size();
  bundle.augmented_rows = result.augmented.size();
  bundle.before = debias::Summarize(before, train, test, c.feature, build);
  bundle.after = debias::Summarize(result.training.model, train, test, c.feature, build);
  Emit(c, bundle.ToJson(), debias::RenderText(bundle), out);
  return 0;
}

void CommonFlags(CLI::App* sub, CliConfig& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice");
  sub->add_option("--threads", c.threads, "Worker threads (default: all cores)");
  sub->add_option("--drop-features", c.drop_features,
                  "Comma-separated features or groups removed after loading")
      ->delimiter(',');
}

void FlipFlags(CLI::App* sub, CliConfig& c) {
  sub->add_option("--restarts", c.restarts, "Solver starts per subproblem");
  sub->add_flag("--integer", c.integer, "Keep integer-valued features integral");
}

void TrainFlags(CLI::App* sub, CliConfig& c) {
  sub->add_option("--hidden", c.hidden, "Hidden layer widths, e.g. 40,32,24")->delimiter(',');
  sub->add_option("--epochs", c.epochs);
  sub->add_option("--batch-size", c.batch_size);
  sub->add_option("--learning-rate", c.learning_rate);
  sub->add_option("--l2", c.l2_penalty);
  sub->add_option("--lr-decay", c.lr_decay);
  sub->add_option("--filter", c.filter, "Rows to under-sample, e.g. \"AGE<35\"");
  sub->add_option("--keep", c.keep, "Fraction of filtered rows kept")->check(CLI::Range(0.0, 1.0));
}

}  // namespace

ParseResult ParseArgs(int argc, const char* const* argv) {
  CliConfig c;
  CLI::App app{"Flip-point auditing and explanation for small neural classifiers", "flipaudit"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model and print its accuracy");
  train->add_option("--data", c.data_path, "Training CSV")->required();
  train->add_option("--schema", c.schema_path, "Schema JSON")->required();
  train->add_option("--output", c.output_path, "Model JSON to write")->required();
  train->add_option("--test", c.test_path, "Held-out CSV");
  train->add_option("--test-fraction", c.test_fraction, "Hold out this random fraction")
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--folds", c.folds, "Also report k-fold cross-validation");
  train->add_option("--json", c.json_path, "Accuracy summary JSON");
  TrainFlags(train, c);
  CommonFlags(train, c);

  auto* explain = app.add_subcommand("explain", "Explanation report for one row");
  explain->add_option("--model", c.model_path)->required();
  explain->add_option("--data", c.data_path)->required();
  explain->add_option("--schema", c.schema_path)->required();
  explain->add_option("--index", c.index, "Row index (default 0)");
  explain->add_option("--row-id", c.row_id, "Row id instead of an index");
  explain->add_option("--output", c.output_path, "Text report file (default: stdout)");
  explain->add_option("--json", c.json_path, "JSON report file");
  explain->add_flag("--pairs", c.pairs, "Also sweep feature pairs");
  explain->add_flag("!--no-groups", c.groups, "Skip the scale-group sweep");
  explain->add_flag("!--no-singles", c.singles, "Skip the single-feature sweep");
  explain->add_option("--subset", c.subsets, "Extra comma-separated feature set (repeatable)");
  explain->add_option("--threshold", c.threshold, "Smallest listed change, scaled units");
  FlipFlags(explain, c);
  CommonFlags(explain, c);

  auto* audit = app.add_subcommand("audit", "Influence ranking, PCA and change frequency");
  audit->add_option("--model", c.model_path)->required();
  audit->add_option("--data", c.data_path)->required();
  audit->add_option("--schema", c.schema_path)->required();
  audit->add_option("--output", c.output_path, "JSON file (default: stdout)");
  audit->add_option("--constraint", c.constraint, "\"all\" or comma-separated features");
  audit->add_option("--max-rows", c.max_rows, "Audit a random subset of rows");
  audit->add_option("--rows", c.rows, "all, correct or misclassified");
  audit->add_option("--threshold", c.threshold, "Change threshold, scaled units");
  audit->add_option("--feature-threshold", c.thresholds, "Per-feature name=value (repeatable)");
  FlipFlags(audit, c);
  CommonFlags(audit, c);

  auto* swap = app.add_subcommand("swap-audit", "Swap a binary feature and compare");
  swap->add_option("--model", c.model_path)->required();
  swap->add_option("--data", c.data_path)->required();
  swap->add_option("--schema", c.schema_path)->required();
  swap->add_option("--feature", c.feature, "0/1 feature or two-level group")->required();
  swap->add_option("--output", c.output_path, "JSON file (default: stdout)");
  swap->add_option("--constraint", c.constraint);
  swap->add_option("--max-rows", c.max_rows);
  FlipFlags(swap, c);
  CommonFlags(swap, c);

  auto* redundant = app.add_subcommand("rank-redundant", "Pivoted QR ordering of features");
  redundant->add_option("--data", c.data_path)->required();
  redundant->add_option("--schema", c.schema_path)->required();
  redundant->add_option("--output", c.output_path, "JSON file (default: stdout)");
  redundant->add_option("--tolerance", c.tolerance, "Relative rank tolerance");
  redundant->add_option("--test-fraction", c.test_fraction,
                        "Analyse only the training part of this split")
      ->check(CLI::Range(0.0, 1.0));
  redundant->add_option("--drop", c.drop, "Suggest this many drops instead of the rank gap");
  CommonFlags(redundant, c);

  auto* debias = app.add_subcommand("debias", "Counteracting-flip augmentation and retraining");
  debias->add_option("--data", c.data_path, "Training CSV")->required();
  debias->add_option("--schema", c.schema_path)->required();
  debias->add_option("--feature", c.feature, "Continuous feature to counteract")->required();
  debias->add_option("--test", c.test_path, "Held-out CSV for accuracy");
  debias->add_option("--test-fraction", c.test_fraction, "Hold out this random fraction")
      ->check(CLI::Range(0.0, 1.0));
  debias->add_option("--model", c.model_path, "Baseline model (default: train one)");
  debias->add_option("--output", c.output_path, "Comparison JSON (default: stdout)");
  debias->add_option("--json", c.json_path, "Retrained model JSON");
  debias->add_option("--label-mode", c.label_mode, "same-label or flip-label");
  debias->add_option("--increase-class", c.increase_class,
                     "Class whose rows qualify when the flip increases the feature");
  debias->add_option("--constraint", c.constraint, "Features free in the flips (default: the feature)");
  debias->add_option("--max-rows", c.max_rows, "Rows used for the before/after ranking");
  TrainFlags(debias, c);
  FlipFlags(debias, c);
  CommonFlags(debias, c);

  ParseResult result;
  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    result.exit_code = 2;
    result.message = std::string("flipaudit: unknown subcommand '") + argv[1] +
                     "'\nRun with --help for usage.\n";
    return result;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    result.message = app.help();
    return result;
  } catch (const CLI::CallForAllHelp&) {
    result.message = app.help("", CLI::AppFormatMode::All);
    return result;
  } catch (const CLI::ParseError& e) {
    result.exit_code = 2;
    std::string where;
    for (const auto* sub : app.get_subcommands()) where = " " + sub->get_name();
    result.message = std::string("flipaudit") + where + ": " + e.what() +
                     "\nRun with --help for usage.\n";
    return result;
  }
  c.command = app.get_subcommands().front()->get_name();
  result.config = c;
  return result;
}

int Run(const CliConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.command == "train") return RunTrain(config, out, err);
    if (config.command == "explain") return RunExplain(config, out, err);
    if (config.command == "audit") return RunAudit(config, out, err);
    if (config.command == "swap-audit") return RunSwapAudit(config, out, err);
    if (config.command == "rank-redundant") return RunRankRedundant(config, out, err);
    if (config.command == "debias") return RunDebias(config, out, err);
    err << "flipaudit: unknown command '" << config.command << "'\n";
    return 2;
  } catch (const std::exception& e) {
    err << "flipaudit " << config.command << ": " << e.what() << "\n";
    return 1;
  }
}

int Main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const ParseResult parsed = ParseArgs(argc, argv);
  if (!parsed.config) {
    (parsed.exit_code == 0 ? out : err) << parsed.message;
    return parsed.exit_code;
  }
  return Run(*parsed.config, out, err);
}

}  // namespace flipaudit::cli
