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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::explain {
namespace {

using flipsolve::FlipConstraint;
using flipsolve::FlipResult;
using flipsolve::FlipStatus;
using nlohmann::json;

constexpr double kResidualTolerance = 1e-6;

double SecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string_view KindName(EntryKind kind) {
  switch (kind) {
    case EntryKind::kSingle:
      return "single";
    case EntryKind::kPair:
      return "pair";
    case EntryKind::kGroup:
      return "group";
    case EntryKind::kCustom:
      return "custom";
    case EntryKind::kUnconstrained:
      return "unconstrained";
  }
  return "single";
}

EntryKind ParseKind(const std::string& name) {
  for (EntryKind k : {EntryKind::kSingle, EntryKind::kPair, EntryKind::kGroup,
                      EntryKind::kCustom, EntryKind::kUnconstrained}) {
    if (KindName(k) == name) return k;
  }
  throw Error(ErrorCode::kSchema, "unknown report entry kind '" + name + "'");
}

size_t ActiveLevel(const data::CategoricalGroup& g, std::span<const double> row) {
  size_t best = 0;
  for (size_t k = 1; k < g.members.size(); ++k) {
    if (row[g.members[k]] > row[g.members[best]]) best = k;
  }
  return best;
}

// Raw features whose value differs between x and p; continuous changes
// at or below `threshold` in scaled units are left out.
std::vector<FeatureChange> Changes(const data::FeatureSchema& schema, std::span<const double> x,
                                   std::span<const double> p, double threshold) {
  std::vector<FeatureChange> out;
  for (const auto& raw : schema.raw_features()) {
    FeatureChange c;
    c.feature = raw.name;
    c.categorical = raw.categorical;
    if (!raw.categorical) {
      const double sw = std::sqrt(schema.feature(raw.index).scale_weight);
      c.before = x[raw.index];
      c.after = p[raw.index];
      if (c.after == c.before || sw * std::abs(c.after - c.before) <= threshold) continue;
    } else {
      const auto& g = schema.groups()[raw.index];
      const size_t from = ActiveLevel(g, x);
      const size_t to = ActiveLevel(g, p);
      if (from == to) continue;
      c.from_level = g.levels[from];
      c.to_level = g.levels[to];
    }
    out.push_back(std::move(c));
  }
  return out;
}

void CheckName(const data::FeatureSchema& schema, const std::string& name) {
  if (!schema.FeatureIndex(name) && !schema.GroupIndex(name)) {
    throw Error(ErrorCode::kInvalidArgument, "unknown feature '" + name + "'");
  }
}

std::string Join(const std::vector<std::string>& names, const char* sep) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += sep;
    out += names[i];
  }
  return out;
}

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string DescribeChange(const FeatureChange& c) {
  if (c.categorical) return c.feature + ": " + c.from_level + " -> " + c.to_level;
  return c.feature + ": " + Format("%.1f", c.before) + " -> " + Format("%.1f", c.after) + " (" +
         Format("%+.1f", c.after - c.before) + ")";
}

json ChangeToJson(const FeatureChange& c) {
  json j = {{"feature", c.feature}, {"categorical", c.categorical}};
  if (c.categorical) {
    j["from_level"] = c.from_level;
    j["to_level"] = c.to_level;
  } else {
    j["before"] = c.before;
    j["after"] = c.after;
  }
  return j;
}

FeatureChange ChangeFromJson(const json& j) {
  FeatureChange c;
  c.feature = j.at("feature").get<std::string>();
  c.categorical = j.at("categorical").get<bool>();
  if (c.categorical) {
    c.from_level = j.at("from_level").get<std::string>();
    c.to_level = j.at("to_level").get<std::string>();
  } else {
    c.before = j.at("before").get<double>();
    c.after = j.at("after").get<double>();
  }
  return c;
}

json EntryToJson(const ReportEntry& e) {
  json changes = json::array();
  for (const auto& c : e.changes) changes.push_back(ChangeToJson(c));
  json j = {{"kind", KindName(e.kind)},
            {"name", e.name},
            {"features", e.features},
            {"status", flipsolve::StatusName(e.status)},
            {"distance", e.distance},
            {"residual", e.residual},
            {"flip_point", e.flip_point},
            {"changes", changes}};
  if (e.failed()) j["error"] = e.error;
  return j;
}

ReportEntry EntryFromJson(const json& j) {
  ReportEntry e;
  e.kind = ParseKind(j.at("kind").get<std::string>());
  e.name = j.at("name").get<std::string>();
  e.features = j.at("features").get<std::vector<std::string>>();
  e.status = flipsolve::ParseStatus(j.at("status").get<std::string>());
  e.distance = j.at("distance").get<double>();
  e.residual = j.at("residual").get<double>();
  e.flip_point = j.at("flip_point").get<std::vector<double>>();
  for (const auto& c : j.at("changes")) e.changes.push_back(ChangeFromJson(c));
  e.error = j.value("error", std::string());
  return e;
}

}  // namespace

std::vector<const ReportEntry*> ExplanationReport::SectionA() const {
  std::vector<const ReportEntry*> out;
  for (const auto& e : entries) {
    if (!e.failed() && e.status == FlipStatus::kNoFlipExists) out.push_back(&e);
  }
  return out;
}

std::vector<const ReportEntry*> ExplanationReport::SectionB() const {
  std::vector<const ReportEntry*> out;
  for (const auto& e : entries) {
    if (!e.failed() && e.status == FlipStatus::kConverged) out.push_back(&e);
  }
  std::stable_sort(out.begin(), out.end(), [](const ReportEntry* a, const ReportEntry* b) {
    if (a->kind != b->kind) return a->kind < b->kind;
    return a->distance < b->distance;
  });
  return out;
}

std::vector<const ReportEntry*> ExplanationReport::DiscreteChanges() const {
  std::vector<const ReportEntry*> out;
  for (const auto& e : entries) {
    if (!e.failed() && e.status == FlipStatus::kDecisionChanged) out.push_back(&e);
  }
  std::stable_sort(out.begin(), out.end(), [](const ReportEntry* a, const ReportEntry* b) {
    if (a->kind != b->kind) return a->kind < b->kind;
    return a->distance < b->distance;
  });
  return out;
}

std::vector<const ReportEntry*> ExplanationReport::Unresolved() const {
  std::vector<const ReportEntry*> out;
  for (const auto& e : entries) {
    if (e.failed() || e.status == FlipStatus::kMaxIterations) out.push_back(&e);
  }
  return out;
}

ExplanationReport BuildReport(const model::MlpModel& model, const data::FeatureSchema& schema,
                              std::span<const double> x,
                              const std::map<std::string, std::vector<std::string>>& scale_groups,
                              const ExplainOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const flipsolve::FlipSolver solver(model, schema, options.solver);
  if (x.size() != schema.size()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.size()) +
                                       " values, the schema has " +
                                       std::to_string(schema.size()));
  }
  for (const auto& [group, members] : scale_groups) {
    if (members.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "scale group '" + group + "' is empty");
    }
    for (const auto& m : members) CheckName(schema, m);
  }
  for (const auto& subset : options.custom) {
    if (subset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty custom feature set");
    for (const auto& m : subset) CheckName(schema, m);
  }
  std::vector<std::string> names = options.features;
  if (names.empty()) {
    for (const auto& raw : schema.raw_features()) names.push_back(raw.name);
  }
  for (const auto& m : names) CheckName(schema, m);

  ExplanationReport report;
  report.row_id = options.row_id;
  report.feature_names = schema.FeatureNames();
  report.input.assign(x.begin(), x.end());
  const model::Scores scores = model.Forward(x);
  report.z1 = scores.z1;
  report.z2 = scores.z2;
  report.decision = model.Predict(x);
  const auto& classes = schema.label().classes;
  report.decision_class = static_cast<size_t>(report.decision) < classes.size()
                              ? classes[report.decision]
                              : std::to_string(report.decision);

  auto solve = [&](EntryKind kind, std::string name, std::vector<std::string> features,
                   std::span<const std::vector<double>> warm, double threshold) {
    ReportEntry e;
    e.kind = kind;
    e.name = std::move(name);
    e.features = features;
    try {
      FlipConstraint c = kind == EntryKind::kUnconstrained ? FlipConstraint::All()
                                                           : FlipConstraint::Only(features);
      c.enforce_integer = options.enforce_integer;
      const FlipResult r = solver.ClosestFlip(x, c, warm);
      e.status = r.status;
      e.distance = r.distance;
      e.residual = r.residual;
      e.flip_point = r.flip_point;
      e.changes = Changes(schema, x, r.flip_point, threshold);
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    return e;
  };
  auto usable = [](const ReportEntry& e) {
    return !e.failed() &&
           (e.status == FlipStatus::kConverged || e.status == FlipStatus::kDecisionChanged);
  };

  std::vector<ReportEntry> singles;
  if (options.singles || options.pairs) {
    auto t = std::chrono::steady_clock::now();
    singles.resize(names.size());
    ParallelFor(names.size(), options.threads, [&](size_t i) {
      singles[i] = solve(EntryKind::kSingle, names[i], {names[i]}, {}, 0.0);
    });
    report.timing.singles_seconds = SecondsSince(t);
    if (options.singles) report.entries = singles;
  }
  if (options.pairs) {
    auto t = std::chrono::steady_clock::now();
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < names.size(); ++i) {
      for (size_t j = i + 1; j < names.size(); ++j) pairs.emplace_back(i, j);
    }
    std::vector<ReportEntry> out(pairs.size());
    ParallelFor(pairs.size(), options.threads, [&](size_t p) {
      const auto [i, j] = pairs[p];
      std::vector<std::vector<double>> warm;
      for (size_t s : {i, j}) {
        if (usable(singles[s])) warm.push_back(singles[s].flip_point);
      }
      out[p] = solve(EntryKind::kPair, names[i] + " + " + names[j], {names[i], names[j]},
                     warm, 0.0);
    });
    report.entries.insert(report.entries.end(), out.begin(), out.end());
    report.timing.pairs_seconds = SecondsSince(t);
  }
  if (options.groups && !scale_groups.empty()) {
    auto t = std::chrono::steady_clock::now();
    std::vector<std::pair<std::string, std::vector<std::string>>> groups(scale_groups.begin(),
                                                                         scale_groups.end());
    std::vector<ReportEntry> out(groups.size());
    ParallelFor(groups.size(), options.threads, [&](size_t g) {
      out[g] = solve(EntryKind::kGroup, groups[g].first, groups[g].second, {}, 0.0);
    });
    report.entries.insert(report.entries.end(), out.begin(), out.end());
    report.timing.groups_seconds = SecondsSince(t);
  }
  if (!options.custom.empty()) {
    auto t = std::chrono::steady_clock::now();
    std::vector<ReportEntry> out(options.custom.size());
    ParallelFor(options.custom.size(), options.threads, [&](size_t k) {
      out[k] = solve(EntryKind::kCustom, Join(options.custom[k], " + "), options.custom[k], {},
                     0.0);
    });
    report.entries.insert(report.entries.end(), out.begin(), out.end());
    report.timing.custom_seconds = SecondsSince(t);
  }
  if (options.unconstrained) {
    auto t = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> warm;
    for (const auto& e : report.entries) {
      if (usable(e)) warm.push_back(e.flip_point);
    }
    report.closest =
        solve(EntryKind::kUnconstrained, "all", {}, warm, options.change_threshold);
    report.timing.unconstrained_seconds = SecondsSince(t);
  }
  report.timing.total_seconds = SecondsSince(start);
  return report;
}

std::string RenderText(const ExplanationReport& report, const model::MlpModel& model,
                       size_t max_pairs) {
  if (model.input_size() != report.input.size()) {
    throw Error(ErrorCode::kShape, "report and model have different input sizes");
  }
  // Re-score a candidate and return a note when it fails the check.
  auto verify = [&](const ReportEntry& e) -> std::string {
    if (e.flip_point.size() != report.input.size()) return "  [no flip point]";
    if (e.status == FlipStatus::kDecisionChanged) {
      return model.Predict(e.flip_point) != report.decision ? ""
                                                            : "  [re-check failed: same class]";
    }
    const double r = std::abs(model.Forward(e.flip_point).z1 - 0.5);
    return r <= kResidualTolerance ? "" : "  [re-check failed: residual " + Format("%.2g", r) + "]";
  };
  auto describe = [](const ReportEntry& e) {
    std::string s;
    for (size_t i = 0; i < e.changes.size(); ++i) {
      if (i > 0) s += ", ";
      s += DescribeChange(e.changes[i]);
    }
    return s.empty() ? std::string("no visible change") : s;
  };

  auto label = [](const ReportEntry& e) {
    return e.kind == EntryKind::kSingle ? std::string() : "[" + e.name + "] ";
  };

  std::ostringstream out;
  out << "Explanation report";
  if (!report.row_id.empty()) out << " for " << report.row_id;
  out << "\n";
  out << "Model decision: " << report.decision_class << " (score "
      << Format("%.4f", report.decision == 0 ? report.z1 : report.z2) << ")\n\n";

  const auto a = report.SectionA();
  out << "A. Changes that will NOT change the decision\n";
  if (a.empty()) out << "   (every feature set examined can flip the decision)\n";
  bool all_singles_fail = true;
  bool any_single = false;
  for (const auto& e : report.entries) {
    if (e.kind != EntryKind::kSingle) continue;
    any_single = true;
    all_singles_fail = all_singles_fail && !e.failed() && e.status == FlipStatus::kNoFlipExists;
  }
  if (any_single && all_singles_fail) {
    out << "   None of the features alone can flip the decision.\n";
  }
  for (const auto* e : a) {
    out << "   - changing " << (e->kind == EntryKind::kGroup ? e->name + " (" +
                                                                  Join(e->features, ", ") + ")"
                                                            : Join(e->features, " and "))
        << (e->features.size() == 1 ? " alone" : " together") << "\n";
  }

  out << "\nB. Changes that WILL change the decision\n";
  const auto b = report.SectionB();
  const auto discrete = report.DiscreteChanges();
  bool any_single_or_pair = false;
  for (const auto* e : b) {
    any_single_or_pair =
        any_single_or_pair || e->kind == EntryKind::kSingle || e->kind == EntryKind::kPair;
  }
  for (const auto* e : discrete) {
    any_single_or_pair =
        any_single_or_pair || e->kind == EntryKind::kSingle || e->kind == EntryKind::kPair;
  }
  if (!any_single_or_pair) {
    out << "   No single feature or pair of features can flip the decision.\n";
  }
  const char* headings[] = {"Single features", "Pairs of features", "Scale groups",
                            "Custom feature sets"};
  for (EntryKind kind : {EntryKind::kSingle, EntryKind::kPair, EntryKind::kGroup,
                         EntryKind::kCustom}) {
    std::vector<const ReportEntry*> rows;
    for (const auto* e : b) {
      if (e->kind == kind) rows.push_back(e);
    }
    if (rows.empty()) continue;
    out << "   " << headings[static_cast<int>(kind)];
    if (kind == EntryKind::kPair && rows.size() > max_pairs) {
      out << " (closest " << max_pairs << " of " << rows.size() << ")";
      rows.resize(max_pairs);
    }
    out << ":\n";
    for (const auto* e : rows) {
      out << "   - " << label(*e) << describe(*e) << "  [distance "
          << Format("%.4f", e->distance) << "]" << verify(*e) << "\n";
    }
  }
  if (!discrete.empty()) {
    out << "   Category changes that switch the decision without a boundary point:\n";
    size_t pairs = 0;
    for (const auto* e : discrete) {
      if (e->kind == EntryKind::kPair && ++pairs > max_pairs) continue;
      out << "   - " << label(*e) << describe(*e) << verify(*e) << "\n";
    }
    if (pairs > max_pairs) out << "   (" << pairs - max_pairs << " more pairs in the JSON report)\n";
  }

  out << "\nC. Closest change overall";
  if (!report.closest || report.closest->failed()) {
    out << "\n   not computed";
    if (report.closest) out << ": " << report.closest->error;
    out << "\n";
  } else {
    const ReportEntry& c = *report.closest;
    out << " (" << flipsolve::StatusName(c.status) << ", distance "
        << Format("%.4f", c.distance) << ")" << verify(c) << "\n";
    size_t width = 7;
    for (const auto& ch : c.changes) width = std::max(width, ch.feature.size());
    char line[512];
    std::snprintf(line, sizeof(line), "   %-*s  %14s  %14s  %10s\n", static_cast<int>(width),
                  "feature", "before", "after", "change");
    out << line;
    for (const auto& ch : c.changes) {
      if (ch.categorical) {
        std::snprintf(line, sizeof(line), "   %-*s  %14s  %14s\n", static_cast<int>(width),
                      ch.feature.c_str(), ch.from_level.c_str(), ch.to_level.c_str());
      } else {
        std::snprintf(line, sizeof(line), "   %-*s  %14.1f  %14.1f  %+10.1f\n",
                      static_cast<int>(width), ch.feature.c_str(), ch.before, ch.after,
                      ch.after - ch.before);
      }
      out << line;
    }
  }

  const auto unresolved = report.Unresolved();
  if (!unresolved.empty()) {
    out << "\nNot resolved\n";
    for (const auto* e : unresolved) {
      out << "   - " << e->name << ": " << (e->failed() ? e->error : std::string(flipsolve::StatusName(e->status)))
          << "\n";
    }
  }
  out << "\nComputed in " << Format("%.2f", report.timing.total_seconds) << " s\n";
  return out.str();
}

json RenderJson(const ExplanationReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) entries.push_back(EntryToJson(e));
  return {{"report_version", report.report_version},
          {"row_id", report.row_id},
          {"feature_names", report.feature_names},
          {"input", report.input},
          {"decision", report.decision},
          {"decision_class", report.decision_class},
          {"z1", report.z1},
          {"z2", report.z2},
          {"entries", entries},
          {"closest", report.closest ? EntryToJson(*report.closest) : json(nullptr)},
          {"timing",
           {{"singles_seconds", report.timing.singles_seconds},
            {"pairs_seconds", report.timing.pairs_seconds},
            {"groups_seconds", report.timing.groups_seconds},
            {"custom_seconds", report.timing.custom_seconds},
            {"unconstrained_seconds", report.timing.unconstrained_seconds},
            {"total_seconds", report.timing.total_seconds}}}};
}

ExplanationReport ParseReportJson(const json& j) {
  ExplanationReport r;
  try {
    r.report_version = j.at("report_version").get<int>();
    if (r.report_version != kReportVersion) {
      throw Error(ErrorCode::kSchema,
                  "unsupported report_version " + std::to_string(r.report_version));
    }
    r.row_id = j.at("row_id").get<std::string>();
    r.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    r.input = j.at("input").get<std::vector<double>>();
    r.decision = j.at("decision").get<int>();
    r.decision_class = j.at("decision_class").get<std::string>();
    r.z1 = j.at("z1").get<double>();
    r.z2 = j.at("z2").get<double>();
    for (const auto& e : j.at("entries")) r.entries.push_back(EntryFromJson(e));
    if (!j.at("closest").is_null()) r.closest = EntryFromJson(j.at("closest"));
    const json& t = j.at("timing");
    r.timing.singles_seconds = t.at("singles_seconds").get<double>();
    r.timing.pairs_seconds = t.at("pairs_seconds").get<double>();
    r.timing.groups_seconds = t.at("groups_seconds").get<double>();
    r.timing.custom_seconds = t.at("custom_seconds").get<double>();
    r.timing.unconstrained_seconds = t.at("unconstrained_seconds").get<double>();
    r.timing.total_seconds = t.at("total_seconds").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed report: ") + e.what());
  }
  if (r.input.size() != r.feature_names.size()) {
    throw Error(ErrorCode::kSchema, "report input does not match its feature names");
  }
  return r;
}

}  // namespace flipaudit::explain
