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

#ifndef FLIPAUDIT_CLI_H_
#define FLIPAUDIT_CLI_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace flipaudit::cli {

struct CliConfig {
  std::string command;

  std::string data_path;
  std::string schema_path;
  std::string model_path;
  std::string output_path;
  std::string test_path;
  std::string json_path;
  uint64_t seed = 1;
  int threads = 0;  // 0: one per core.
  std::vector<std::string> drop_features;
  double test_fraction = 0.0;

  // Training.
  std::vector<size_t> hidden = {16, 8};
  size_t epochs = 20;
  size_t batch_size = 64;
  double learning_rate = 0.005;
  double l2_penalty = 1e-3;
  double lr_decay = 0.05;
  size_t folds = 0;
  std::string filter;
  double keep = 1.0;

  // Flip computations.
  std::string constraint = "all";
  bool integer = false;
  size_t restarts = 8;
  size_t max_rows = 0;

  // explain
  std::optional<size_t> index;
  std::string row_id;
  bool pairs = false;
  bool groups = true;
  bool singles = true;
  std::vector<std::string> subsets;

  // audit
  double threshold = 1e-3;
  std::vector<std::string> thresholds;  // name=value
  std::string rows = "all";             // all | correct | misclassified

  // swap-audit and debias
  std::string feature;

  // rank-redundant
  double tolerance = 1e-8;
  size_t drop = 0;

  // debias
  std::string label_mode = "same-label";
  std::string increase_class;
};

struct ParseResult {
  std::optional<CliConfig> config;
  int exit_code = 0;
  std::string message;
};

// Usage errors (unknown subcommand, missing or unknown flag) give no
// config and a nonzero exit code; --help gives no config and exit code 0.
ParseResult ParseArgs(int argc, const char* const* argv);

// Runs one subcommand. Artifacts go to files or `out`; progress and
// errors go to `err`. Returns 0 iff the requested artifact was written.
int Run(const CliConfig& config, std::ostream& out, std::ostream& err);

int Main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flipaudit::cli

#endif  // FLIPAUDIT_CLI_H_
