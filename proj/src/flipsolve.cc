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

#include "flipaudit/flipsolve.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "flipaudit/error.h"
#include "flipaudit/util.h"

namespace flipaudit::flipsolve {
namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();
// Residual below which a point counts as on the boundary.
constexpr double kConvergedResidual = 1e-8;
// Residual below which the input itself is returned.
constexpr double kOnBoundary = 1e-10;

double ResidualOf(double h) { return 0.5 * std::abs(std::tanh(0.5 * h)); }

int Rank(FlipStatus s) {
  switch (s) {
    case FlipStatus::kConverged:
      return 0;
    case FlipStatus::kDecisionChanged:
      return 1;
    case FlipStatus::kMaxIterations:
      return 2;
    case FlipStatus::kNoFlipExists:
      return 3;
  }
  return 3;
}

double NormInf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

uint64_t MixSeed(uint64_t seed, std::span<const size_t> indices) {
  uint64_t h = seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull;
  for (size_t i : indices) {
    h ^= i + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

}  // namespace

std::string_view StatusName(FlipStatus status) {
  switch (status) {
    case FlipStatus::kConverged:
      return "converged";
    case FlipStatus::kNoFlipExists:
      return "no-flip-exists";
    case FlipStatus::kMaxIterations:
      return "max-iterations";
    case FlipStatus::kDecisionChanged:
      return "decision-changed";
  }
  return "unknown";
}

FlipStatus ParseStatus(std::string_view name) {
  for (FlipStatus s : {FlipStatus::kConverged, FlipStatus::kNoFlipExists,
                       FlipStatus::kMaxIterations, FlipStatus::kDecisionChanged}) {
    if (StatusName(s) == name) return s;
  }
  throw Error(ErrorCode::kParse, "unknown flip status '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// FlipConstraint

FlipConstraint FlipConstraint::All() {
  FlipConstraint c;
  c.all = true;
  return c;
}

FlipConstraint FlipConstraint::Only(std::vector<std::string> names) {
  FlipConstraint c;
  c.free_features = std::move(names);
  return c;
}

FlipConstraint FlipConstraint::Parse(std::string_view spec) {
  std::string s(spec);
  if (s == "all") return All();
  FlipConstraint c;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto b = part.find_first_not_of(" \t");
    const auto e = part.find_last_not_of(" \t");
    if (b != std::string::npos) c.free_features.push_back(part.substr(b, e - b + 1));
  }
  if (c.free_features.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "constraint names no features");
  }
  return c;
}

std::string FlipConstraint::Label() const {
  if (all) return "all";
  std::string out;
  for (const auto& n : free_features) out += (out.empty() ? "" : "+") + n;
  return out;
}

// ---------------------------------------------------------------------------
// FlipResult

json FlipResult::ToJson() const {
  return json{{"flip_point", flip_point},
              {"distance", distance},
              {"direction", direction},
              {"residual", residual},
              {"status", StatusName(status)},
              {"restarts_used", restarts_used},
              {"iterations", iterations}};
}

FlipResult FlipResult::FromJson(const json& j) {
  FlipResult r;
  try {
    r.flip_point = j.at("flip_point").get<std::vector<double>>();
    r.direction = j.at("direction").get<std::vector<double>>();
    r.distance = j.at("distance").get<double>();
    r.residual = j.at("residual").get<double>();
    r.status = ParseStatus(j.at("status").get<std::string>());
    r.restarts_used = j.value("restarts_used", size_t{0});
    r.iterations = j.value("iterations", size_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed flip result: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Solver internals

struct FlipSolver::Subproblem {
  std::vector<double> anchor;  // Distances are measured from here.
  std::vector<double> base;    // Coordinates that do not move.
  std::vector<size_t> free;    // Coordinates that move.
  std::vector<double> lo;      // Raw bounds per free coordinate.
  std::vector<double> hi;
};

struct FlipSolver::Candidate {
  std::vector<double> point;
  double h = 0.0;
  double residual = kInf;
  double dist2 = kInf;
  FlipStatus status = FlipStatus::kNoFlipExists;
  size_t iterations = 0;
  size_t starts = 0;

  bool BetterThan(const Candidate& o) const {
    if (Rank(status) != Rank(o.status)) return Rank(status) < Rank(o.status);
    return dist2 < o.dist2;
  }
};

FlipSolver::FlipSolver(const model::MlpModel& model,
                       const data::FeatureSchema& schema, SolverOptions options)
    : model_(&model), schema_(&schema), options_(options) {
  if (schema.size() != model.input_size()) {
    throw Error(ErrorCode::kShape, "model expects " +
                                       std::to_string(model.input_size()) +
                                       " features, schema has " +
                                       std::to_string(schema.size()));
  }
  if (options_.restarts == 0 || options_.max_iterations == 0 ||
      options_.scan_points < 2) {
    throw Error(ErrorCode::kInvalidArgument, "invalid solver options");
  }
  for (const auto& f : schema.features()) sqrt_w_.push_back(std::sqrt(f.scale_weight));
}

double FlipSolver::Residual(std::span<const double> x) const {
  return ResidualOf(model_->Margin(x));
}

std::vector<double> FlipSolver::Anchor(std::span<const double> x,
                                       const FlipConstraint& constraint) const {
  std::vector<double> anchor(x.begin(), x.end());
  for (const auto& [group, level] : constraint.fixed_levels) {
    const auto g = schema_->GroupIndex(group);
    if (!g) {
      throw Error(ErrorCode::kInvalidArgument, "unknown group '" + group + "'");
    }
    const auto& grp = schema_->groups()[*g];
    const auto it = std::find(grp.levels.begin(), grp.levels.end(), level);
    if (it == grp.levels.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "'" + level + "' is not a level of '" + group + "'");
    }
    for (size_t k = 0; k < grp.members.size(); ++k) {
      anchor[grp.members[k]] = grp.levels[k] == level ? 1.0 : 0.0;
    }
  }
  return anchor;
}

FlipResult FlipSolver::Finish(std::span<const double> x, const Candidate& c) const {
  FlipResult r;
  r.status = c.status;
  r.iterations = c.iterations;
  r.restarts_used = c.starts;
  if (c.point.empty() || c.status == FlipStatus::kNoFlipExists) {
    r.flip_point.assign(x.begin(), x.end());
  } else {
    r.flip_point = c.point;
  }
  r.direction.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) r.direction[i] = r.flip_point[i] - x[i];
  r.distance = data::WeightedDistance(*schema_, r.flip_point, x);
  r.residual = Residual(r.flip_point);
  return r;
}

FlipSolver::Candidate FlipSolver::Evaluate(const Subproblem& sub) const {
  Candidate c;
  c.point = sub.base;
  c.h = model_->Margin(c.point);
  c.residual = ResidualOf(c.h);
  const double d = data::WeightedDistance(*schema_, c.point, sub.anchor);
  c.dist2 = d * d;
  const double h0 = model_->Margin(sub.anchor);
  if (c.residual <= kConvergedResidual) {
    c.status = FlipStatus::kConverged;
  } else if ((c.h >= 0.0) != (h0 >= 0.0)) {
    c.status = FlipStatus::kDecisionChanged;
  } else {
    c.status = FlipStatus::kNoFlipExists;
  }
  return c;
}

FlipSolver::Candidate FlipSolver::RunStart(const Subproblem& sub,
                                           std::vector<double> v) const {
  const size_t n = sub.free.size();
  const size_t cap = options_.max_iterations;
  std::vector<double> sw(n), a(n), lo(n), hi(n);
  for (size_t k = 0; k < n; ++k) {
    const size_t i = sub.free[k];
    sw[k] = sqrt_w_[i];
    a[k] = sw[k] * sub.anchor[i];
    lo[k] = sw[k] * sub.lo[k];
    hi[k] = sw[k] * sub.hi[k];
  }
  auto project = [&](std::vector<double>& u) {
    for (size_t k = 0; k < n; ++k) u[k] = std::clamp(u[k], lo[k], hi[k]);
  };
  std::vector<double> full = sub.base;
  std::vector<double> gfull(full.size());
  auto eval = [&](const std::vector<double>& u, std::vector<double>& g) {
    for (size_t k = 0; k < n; ++k) full[sub.free[k]] = u[k] / sw[k];
    const double h = model_->MarginGradient(full, gfull);
    for (size_t k = 0; k < n; ++k) g[k] = gfull[sub.free[k]] / sw[k];
    return h;
  };

  project(v);
  std::vector<double> g(n), gn(n), grad(n), gradn(n), vn(n), trial(n);
  double h = eval(v, g);
  const double g2 = Dot(g, g);
  double mu = std::clamp(10.0 / std::max(g2, 1e-12), 1e-6, 1e12);
  double lambda = 0.0;
  double omega = 1e-4;
  size_t iters = 0;
  double prev_violation = std::abs(h);

  auto phi_of = [&](const std::vector<double>& u, double hv) {
    double s = 0.0;
    for (size_t k = 0; k < n; ++k) s += (u[k] - a[k]) * (u[k] - a[k]);
    return 0.5 * s + lambda * hv + 0.5 * mu * hv * hv;
  };
  auto grad_of = [&](const std::vector<double>& u, double hv,
                     const std::vector<double>& gv, std::vector<double>& out) {
    for (size_t k = 0; k < n; ++k) out[k] = u[k] - a[k] + (lambda + mu * hv) * gv[k];
  };
  auto projected_gradient = [&](const std::vector<double>& u,
                                const std::vector<double>& gr) {
    double m = 0.0;
    for (size_t k = 0; k < n; ++k) {
      m = std::max(m, std::abs(std::clamp(u[k] - gr[k], lo[k], hi[k]) - u[k]));
    }
    return m;
  };
  // Projected descent slope of |h|; zero at infeasible stationary points.
  auto infeasibility_gradient = [&]() {
    const double s = h > 0.0 ? 1.0 : -1.0;
    double m = 0.0;
    for (size_t k = 0; k < n; ++k) {
      m = std::max(m, std::abs(std::clamp(v[k] - s * g[k], lo[k], hi[k]) - v[k]));
    }
    return m;
  };

  bool stationary_infeasible = false;
  for (int outer = 0; outer < 200 && iters < cap; ++outer) {
    double phi = phi_of(v, h);
    grad_of(v, h, g, grad);
    double alpha = 1.0 / (1.0 + mu * Dot(g, g));
    double pg = projected_gradient(v, grad);
    while (iters < cap && pg > omega) {
      bool accepted = false;
      double hn = h;
      double phin = phi;
      for (int bt = 0; bt < 60; ++bt) {
        for (size_t k = 0; k < n; ++k) {
          vn[k] = std::clamp(v[k] - alpha * grad[k], lo[k], hi[k]);
          trial[k] = vn[k] - v[k];
        }
        if (NormInf(trial) <= 1e-15 * (1.0 + NormInf(v))) break;
        hn = eval(vn, gn);
        phin = phi_of(vn, hn);
        if (phin <= phi + 1e-4 * Dot(grad, trial)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++iters;
      if (!accepted) break;
      grad_of(vn, hn, gn, gradn);
      double ss = 0.0;
      double sy = 0.0;
      for (size_t k = 0; k < n; ++k) {
        ss += trial[k] * trial[k];
        sy += trial[k] * (gradn[k] - grad[k]);
      }
      alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-14, 1e14) : std::min(alpha * 4.0, 1e14);
      v.swap(vn);
      g.swap(gn);
      grad.swap(gradn);
      h = hn;
      phi = phin;
      pg = projected_gradient(v, grad);
      if (std::sqrt(ss) <= 1e-13) break;
    }
    if (ResidualOf(h) <= 1e-10 && pg <= 1e-7) break;
    if (ResidualOf(h) > kConvergedResidual &&
        infeasibility_gradient() <= 1e-6 * std::max(1.0, std::abs(h))) {
      stationary_infeasible = true;
      break;
    }
    lambda += mu * h;
    if (std::abs(h) > 0.25 * prev_violation) mu = std::min(mu * 10.0, 1e16);
    prev_violation = std::abs(h);
    omega = std::max(omega * 0.1, 1e-10);
  }

  // Feasibility polish: Gauss-Newton steps on h along the free gradient.
  for (int it = 0; it < 60 && !stationary_infeasible; ++it) {
    if (ResidualOf(h) <= 1e-14) break;
    std::vector<double> gp = g;
    for (size_t k = 0; k < n; ++k) {
      const double step = -h * g[k];
      if ((v[k] <= lo[k] && step < 0.0) || (v[k] >= hi[k] && step > 0.0)) gp[k] = 0.0;
    }
    const double gp2 = Dot(gp, gp);
    if (gp2 == 0.0) break;
    double t = 1.0;
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      for (size_t k = 0; k < n; ++k) {
        vn[k] = std::clamp(v[k] - t * h / gp2 * gp[k], lo[k], hi[k]);
      }
      const double hn = eval(vn, gn);
      if (std::abs(hn) < std::abs(h)) {
        v.swap(vn);
        g.swap(gn);
        h = hn;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }

  Candidate c;
  c.point = sub.base;
  for (size_t k = 0; k < n; ++k) c.point[sub.free[k]] = v[k] / sw[k];
  c.h = model_->Margin(c.point);
  c.residual = ResidualOf(c.h);
  const double d = data::WeightedDistance(*schema_, c.point, sub.anchor);
  c.dist2 = d * d;
  c.iterations = iters;
  c.starts = 1;
  if (c.residual <= kConvergedResidual) {
    c.status = iters < cap ? FlipStatus::kConverged : FlipStatus::kMaxIterations;
  } else if (stationary_infeasible ||
             infeasibility_gradient() <= 1e-6 * std::max(1.0, std::abs(h))) {
    c.status = FlipStatus::kNoFlipExists;
  } else {
    c.status = FlipStatus::kMaxIterations;
  }
  return c;
}

FlipSolver::Candidate FlipSolver::SolveContinuous(
    const Subproblem& sub, size_t starts,
    std::span<const std::vector<double>> warm) const {
  const size_t n = sub.free.size();
  Candidate best;
  size_t total_iters = 0;
  size_t used = 0;
  auto consider = [&](Candidate c) {
    total_iters += c.iterations;
    if (c.BetterThan(best)) best = std::move(c);
  };
  std::vector<double> a(n);
  for (size_t k = 0; k < n; ++k) a[k] = sqrt_w_[sub.free[k]] * sub.anchor[sub.free[k]];

  for (const auto& w : warm) {
    if (w.size() != sub.base.size()) continue;
    Subproblem s = sub;
    Candidate direct;
    direct.point = sub.base;
    for (size_t k = 0; k < n; ++k) {
      direct.point[sub.free[k]] = std::clamp(w[sub.free[k]], sub.lo[k], sub.hi[k]);
    }
    direct.h = model_->Margin(direct.point);
    direct.residual = ResidualOf(direct.h);
    const double d = data::WeightedDistance(*schema_, direct.point, sub.anchor);
    direct.dist2 = d * d;
    if (direct.residual <= kConvergedResidual) {
      direct.status = FlipStatus::kConverged;
      consider(direct);
    }
    std::vector<double> v(n);
    for (size_t k = 0; k < n; ++k) v[k] = sqrt_w_[sub.free[k]] * direct.point[sub.free[k]];
    consider(RunStart(sub, v));
    ++used;
  }
  Rng rng(MixSeed(options_.seed, sub.free));
  for (size_t s = 0; s < starts; ++s) {
    std::vector<double> v = a;
    if (s > 0) {
      for (double& x : v) x += options_.perturbation * rng.Normal();
    }
    consider(RunStart(sub, v));
    ++used;
  }
  best.iterations = total_iters;
  best.starts = used;
  return best;
}

FlipSolver::Candidate FlipSolver::Scan1d(const Subproblem& sub) const {
  const size_t i = sub.free.front();
  const double x0 = sub.base[i];
  const double reach = 10.0 / sqrt_w_[i];
  const double lo = std::min(std::isfinite(sub.lo.front()) ? sub.lo.front() : x0 - reach, x0);
  const double hi = std::max(std::isfinite(sub.hi.front()) ? sub.hi.front() : x0 + reach, x0);
  std::vector<double> p = sub.base;
  auto h_at = [&](double t) {
    p[i] = t;
    return model_->Margin(p);
  };
  const double h0 = h_at(x0);
  const bool positive = h0 >= 0.0;
  auto crosses = [&](double hv) { return hv == 0.0 || (hv >= 0.0) != positive; };

  Candidate c;
  c.starts = 1;
  auto finish = [&](double t, FlipStatus status) {
    c.point = sub.base;
    c.point[i] = t;
    c.h = model_->Margin(c.point);
    c.residual = ResidualOf(c.h);
    const double d = data::WeightedDistance(*schema_, c.point, sub.anchor);
    c.dist2 = d * d;
    c.status = status;
    return c;
  };
  if (ResidualOf(h0) <= kOnBoundary) return finish(x0, FlipStatus::kConverged);
  if (!(hi > lo)) return finish(x0, FlipStatus::kNoFlipExists);

  const double range = 1.0 / sqrt_w_[i];
  const double tol = 1e-9 * range;
  auto bisect = [&](double inside, double outside) {
    double h_in = h_at(inside);
    double h_out = h_at(outside);
    for (int it = 0; it < 400; ++it) {
      const double width = std::abs(outside - inside);
      const double best_res = std::min(ResidualOf(h_in), ResidualOf(h_out));
      if (width <= tol && best_res <= 1e-12) break;
      const double mid = 0.5 * (inside + outside);
      if (mid == inside || mid == outside) break;
      const double hm = h_at(mid);
      ++c.iterations;
      if (crosses(hm)) {
        outside = mid;
        h_out = hm;
      } else {
        inside = mid;
        h_in = hm;
      }
    }
    return ResidualOf(h_out) <= ResidualOf(h_in) ? outside : inside;
  };

  const double step = (hi - lo) / static_cast<double>(options_.scan_points);
  double prev_r = x0;
  double prev_l = x0;
  for (size_t k = 1;; ++k) {
    const bool r_open = prev_r < hi;
    const bool l_open = prev_l > lo;
    if (!r_open && !l_open) break;
    std::optional<double> best_t;
    if (r_open) {
      const double t = std::min(hi, x0 + static_cast<double>(k) * step);
      ++c.iterations;
      if (crosses(h_at(t))) best_t = bisect(prev_r, t);
      prev_r = t;
    }
    if (l_open) {
      const double t = std::max(lo, x0 - static_cast<double>(k) * step);
      ++c.iterations;
      if (crosses(h_at(t))) {
        const double cand = bisect(prev_l, t);
        if (!best_t || std::abs(cand - x0) < std::abs(*best_t - x0)) best_t = cand;
      }
      prev_l = t;
    }
    if (best_t) {
      finish(*best_t, FlipStatus::kConverged);
      if (c.residual > kConvergedResidual) c.status = FlipStatus::kMaxIterations;
      return c;
    }
  }
  return finish(x0, FlipStatus::kNoFlipExists);
}

FlipSolver::Candidate FlipSolver::SolveAssignment(
    const Subproblem& sub, size_t starts,
    std::span<const std::vector<double>> warm) const {
  Candidate c;
  if (sub.free.empty()) return Evaluate(sub);
  if (sub.free.size() == 1 &&
      schema_->feature(sub.free.front()).kind == data::FeatureKind::kContinuous) {
    c = Scan1d(sub);
    const bool unbounded = !std::isfinite(sub.lo.front()) || !std::isfinite(sub.hi.front());
    if (c.status == FlipStatus::kNoFlipExists && unbounded) {
      Candidate wide = SolveContinuous(sub, starts, warm);
      if (wide.status == FlipStatus::kConverged) c = std::move(wide);
    }
  } else {
    c = SolveContinuous(sub, starts, warm);
  }
  if (c.status != FlipStatus::kConverged && sub.base != sub.anchor) {
    Candidate at_base = Evaluate(sub);
    if (at_base.BetterThan(c)) {
      at_base.iterations = c.iterations;
      at_base.starts = c.starts;
      return at_base;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Public operations

FlipResult FlipSolver::Flip1d(std::span<const double> x,
                              std::string_view feature) const {
  if (x.size() != schema_->size()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.size()) +
                                       " features, expected " +
                                       std::to_string(schema_->size()));
  }
  const size_t i = schema_->RequireFeature(feature);
  if (schema_->feature(i).kind != data::FeatureKind::kContinuous) {
    throw Error(ErrorCode::kInvalidArgument,
                "'" + std::string(feature) +
                    "' is categorical; use level enumeration instead");
  }
  Subproblem sub;
  sub.anchor.assign(x.begin(), x.end());
  sub.base = sub.anchor;
  sub.free = {i};
  const auto [lo, hi] = ScanInterval(x, i);
  sub.lo = {lo};
  sub.hi = {hi};
  return Finish(x, Scan1d(sub));
}

std::pair<double, double> FlipSolver::ScanInterval(std::span<const double> x,
                                                   size_t feature) const {
  const data::Feature& f = schema_->feature(feature);
  const double range = 1.0 / sqrt_w_[feature];
  double lo = f.lower ? *f.lower : x[feature] - 10.0 * range;
  double hi = f.upper ? *f.upper : x[feature] + 10.0 * range;
  return {std::min(lo, x[feature]), std::max(hi, x[feature])};
}

FlipResult FlipSolver::ClosestFlip(std::span<const double> x,
                                   const FlipConstraint& constraint,
                                   std::span<const std::vector<double>> warm) const {
  if (x.size() != schema_->size()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.size()) +
                                       " features, expected " +
                                       std::to_string(schema_->size()));
  }
  if (!constraint.all && constraint.free_features.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "constraint frees no features");
  }
  const std::vector<double> anchor = Anchor(x, constraint);

  // Resolve free continuous coordinates and free groups.
  std::set<size_t> cont;
  std::set<size_t> groups;
  if (constraint.all) {
    for (const auto& raw : schema_->raw_features()) {
      (raw.categorical ? groups : cont).insert(raw.index);
    }
  } else {
    for (const std::string& name : constraint.free_features) {
      if (auto g = schema_->GroupIndex(name)) {
        groups.insert(*g);
      } else if (auto f = schema_->FeatureIndex(name)) {
        const auto& feat = schema_->feature(*f);
        if (feat.group) {
          groups.insert(*feat.group);
        } else {
          cont.insert(*f);
        }
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown feature '" + name + "'");
      }
    }
  }
  for (const auto& [group, level] : constraint.fixed_levels) {
    if (groups.contains(*schema_->GroupIndex(group))) {
      throw Error(ErrorCode::kInvalidArgument,
                  "group '" + group + "' is both free and fixed");
    }
  }

  if (ResidualOf(model_->Margin(anchor)) <= kOnBoundary) {
    Candidate c;
    c.point = anchor;
    c.status = FlipStatus::kConverged;
    return Finish(anchor, c);
  }

  if (constraint.enforce_integer) {
    FlipConstraint relaxed_constraint = constraint;
    relaxed_constraint.enforce_integer = false;
    const FlipResult relaxed = ClosestFlip(x, relaxed_constraint, warm);
    return Integerize(x, relaxed, constraint);
  }

  auto make_sub = [&](const std::vector<double>& base,
                      const std::vector<size_t>& free_coords) {
    Subproblem s;
    s.anchor = anchor;
    s.base = base;
    s.free = free_coords;
    for (size_t i : free_coords) {
      const auto& f = schema_->feature(i);
      if (f.kind == data::FeatureKind::kBinaryInGroup) {
        s.lo.push_back(0.0);
        s.hi.push_back(1.0);
      } else if (constraint.respect_bounds) {
        s.lo.push_back(f.lower.value_or(-kInf));
        s.hi.push_back(f.upper.value_or(kInf));
      } else {
        s.lo.push_back(-kInf);
        s.hi.push_back(kInf);
      }
    }
    return s;
  };
  const std::vector<size_t> cont_free(cont.begin(), cont.end());
  const size_t restarts = options_.restarts;

  if (groups.empty()) {
    return Finish(anchor, SolveAssignment(make_sub(anchor, cont_free), restarts, warm));
  }

  const std::vector<size_t> group_list(groups.begin(), groups.end());
  auto level_of = [&](const std::vector<double>& p, size_t g) {
    const auto& m = schema_->groups()[g].members;
    size_t best = 0;
    for (size_t k = 1; k < m.size(); ++k) {
      if (p[m[k]] > p[m[best]]) best = k;
    }
    return best;
  };
  auto apply = [&](std::vector<double> p, const std::vector<size_t>& levels) {
    for (size_t gi = 0; gi < group_list.size(); ++gi) {
      const auto& m = schema_->groups()[group_list[gi]].members;
      for (size_t k = 0; k < m.size(); ++k) p[m[k]] = k == levels[gi] ? 1.0 : 0.0;
    }
    return p;
  };
  // Warm starts whose one-hot assignment matches `levels`.
  auto matching_warm = [&](const std::vector<size_t>& levels,
                           const std::vector<double>* extra) {
    std::vector<std::vector<double>> out;
    if (extra) out.push_back(*extra);
    for (const auto& w : warm) {
      if (w.size() != anchor.size()) continue;
      bool ok = true;
      for (size_t gi = 0; gi < group_list.size() && ok; ++gi) {
        const auto& m = schema_->groups()[group_list[gi]].members;
        ok = w[m[levels[gi]]] == 1.0;
      }
      if (ok) out.push_back(w);
    }
    return out;
  };

  std::vector<size_t> original(group_list.size());
  double product = 1.0;
  for (size_t gi = 0; gi < group_list.size(); ++gi) {
    original[gi] = level_of(anchor, group_list[gi]);
    product *= static_cast<double>(schema_->groups()[group_list[gi]].levels.size());
  }
  const bool exhaustive =
      product <= static_cast<double>(options_.exhaustive_limit) ||
      (cont_free.empty() && product <= static_cast<double>(options_.max_combinations));
  if (!exhaustive && options_.strict_enumeration &&
      product > static_cast<double>(options_.max_combinations)) {
    throw Error(ErrorCode::kInvalidArgument,
                "constraint frees " + std::to_string(static_cast<uint64_t>(product)) +
                    " categorical combinations; narrow the constraint");
  }

  Candidate best;
  size_t total_iters = 0;
  size_t total_starts = 0;
  auto consider = [&](const Candidate& c) {
    total_iters += c.iterations;
    total_starts += c.starts;
    if (c.BetterThan(best)) best = c;
  };

  if (exhaustive) {
    std::vector<size_t> levels(group_list.size(), 0);
    std::vector<std::pair<Candidate, std::vector<size_t>>> screened;
    while (true) {
      const Subproblem sub = make_sub(apply(anchor, levels), cont_free);
      const auto w = matching_warm(levels, nullptr);
      Candidate c = SolveAssignment(sub, 1, w);
      consider(c);
      if (!cont_free.empty()) screened.emplace_back(std::move(c), levels);
      size_t gi = 0;
      for (; gi < levels.size(); ++gi) {
        if (++levels[gi] < schema_->groups()[group_list[gi]].levels.size()) break;
        levels[gi] = 0;
      }
      if (gi == levels.size()) break;
    }
    if (!cont_free.empty() && restarts > 1) {
      std::stable_sort(screened.begin(), screened.end(),
                       [](const auto& a, const auto& b) { return a.first.BetterThan(b.first); });
      for (size_t t = 0; t < std::min<size_t>(3, screened.size()); ++t) {
        const auto& lv = screened[t].second;
        const Subproblem sub = make_sub(apply(anchor, lv), cont_free);
        consider(SolveAssignment(sub, restarts, matching_warm(lv, &screened[t].first.point)));
      }
    }
  } else {
    // One-hot relaxation to rank candidate levels, then coordinate descent
    // over the groups.
    std::vector<size_t> relaxed_free = cont_free;
    for (size_t g : group_list) {
      const auto& m = schema_->groups()[g].members;
      relaxed_free.insert(relaxed_free.end(), m.begin(), m.end());
    }
    std::sort(relaxed_free.begin(), relaxed_free.end());
    const Candidate relaxed =
        SolveContinuous(make_sub(anchor, relaxed_free), std::min<size_t>(2, restarts), {});
    total_iters += relaxed.iterations;
    std::vector<std::vector<size_t>> options(group_list.size());
    std::vector<size_t> argmax(group_list.size());
    for (size_t gi = 0; gi < group_list.size(); ++gi) {
      const auto& m = schema_->groups()[group_list[gi]].members;
      std::vector<size_t> order(m.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return relaxed.point[m[a]] > relaxed.point[m[b]];
      });
      argmax[gi] = order[0];
      options[gi] = {original[gi]};
      for (size_t k = 0; k < std::min<size_t>(2, order.size()); ++k) {
        if (order[k] != original[gi]) options[gi].push_back(order[k]);
      }
    }
    std::vector<size_t> current = original;
    Candidate cur = SolveAssignment(make_sub(apply(anchor, current), cont_free), 1,
                                    matching_warm(current, nullptr));
    consider(cur);
    if (argmax != original) {
      const Candidate c = SolveAssignment(make_sub(apply(anchor, argmax), cont_free), 1,
                                          matching_warm(argmax, &cur.point));
      consider(c);
      if (c.BetterThan(cur)) {
        cur = c;
        current = argmax;
      }
    }
    for (int sweep = 0; sweep < 3; ++sweep) {
      bool improved = false;
      for (size_t gi = 0; gi < group_list.size(); ++gi) {
        for (size_t level : options[gi]) {
          if (level == current[gi]) continue;
          std::vector<size_t> trial = current;
          trial[gi] = level;
          const Candidate c = SolveAssignment(make_sub(apply(anchor, trial), cont_free), 1,
                                              matching_warm(trial, &cur.point));
          consider(c);
          if (c.BetterThan(cur)) {
            cur = c;
            current = trial;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
    if (restarts > 1 && !cont_free.empty()) {
      consider(SolveAssignment(make_sub(apply(anchor, current), cont_free), restarts,
                               matching_warm(current, &cur.point)));
    }
  }
  best.iterations = total_iters;
  best.starts = total_starts;
  return Finish(anchor, best);
}

std::vector<PairFlip> FlipSolver::FlipPairsSweep(std::span<const double> x,
                                                 std::vector<std::string> names) const {
  if (names.empty()) {
    for (const auto& raw : schema_->raw_features()) names.push_back(raw.name);
  }
  std::vector<FlipResult> singles(names.size());
  ParallelFor(names.size(), options_.threads, [&](size_t i) {
    singles[i] = ClosestFlip(x, FlipConstraint::Only({names[i]}));
  });
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < names.size(); ++i) {
    for (size_t j = i + 1; j < names.size(); ++j) pairs.emplace_back(i, j);
  }
  std::vector<PairFlip> out(pairs.size());
  ParallelFor(pairs.size(), options_.threads, [&](size_t p) {
    const auto [i, j] = pairs[p];
    std::vector<std::vector<double>> warm;
    for (size_t s : {i, j}) {
      if (singles[s].status == FlipStatus::kConverged ||
          singles[s].status == FlipStatus::kDecisionChanged) {
        warm.push_back(singles[s].flip_point);
      }
    }
    out[p] = {names[i], names[j],
              ClosestFlip(x, FlipConstraint::Only({names[i], names[j]}), warm)};
  });
  return out;
}

FlipResult FlipSolver::Integerize(std::span<const double> x, const FlipResult& relaxed,
                                  const FlipConstraint& constraint) const {
  if (relaxed.status != FlipStatus::kConverged) return relaxed;
  const std::vector<double> anchor = Anchor(x, constraint);
  // Free continuous coordinates, split into integer-flagged and the rest.
  std::vector<size_t> integer_coords;
  std::vector<size_t> real_coords;
  for (size_t i = 0; i < schema_->size(); ++i) {
    const auto& f = schema_->feature(i);
    if (f.kind != data::FeatureKind::kContinuous) continue;
    bool free = constraint.all;
    for (const auto& n : constraint.free_features) free = free || n == f.name;
    if (!free) continue;
    (f.integer_valued ? integer_coords : real_coords).push_back(i);
  }
  bool integral = true;
  for (size_t i : integer_coords) {
    integral = integral && relaxed.flip_point[i] == std::round(relaxed.flip_point[i]);
  }
  if (integral) return relaxed;

  // Candidate integers within +-2 of each relaxed value, nearest first.
  std::vector<std::vector<double>> values(integer_coords.size());
  for (size_t k = 0; k < integer_coords.size(); ++k) {
    const size_t i = integer_coords[k];
    const double v = relaxed.flip_point[i];
    const auto& f = schema_->feature(i);
    for (double t = std::ceil(v - 2.0); t <= v + 2.0; t += 1.0) {
      if (constraint.respect_bounds && ((f.lower && t < *f.lower) || (f.upper && t > *f.upper))) {
        continue;
      }
      values[k].push_back(t);
    }
    std::stable_sort(values[k].begin(), values[k].end(), [&](double a, double b) {
      return std::abs(a - v) < std::abs(b - v);
    });
    if (values[k].empty()) values[k].push_back(std::round(v));
  }

  Candidate best;
  size_t total_iters = 0;
  const std::vector<std::vector<double>> warm = {relaxed.flip_point};
  auto try_pattern = [&](const std::vector<size_t>& pick) {
    std::vector<double> base = relaxed.flip_point;
    for (size_t i : real_coords) base[i] = anchor[i];
    for (size_t k = 0; k < integer_coords.size(); ++k) {
      base[integer_coords[k]] = values[k][pick[k]];
    }
    // The fixed part of the distance bounds the pattern from below.
    double fixed = 0.0;
    for (size_t i = 0; i < base.size(); ++i) {
      if (std::find(real_coords.begin(), real_coords.end(), i) != real_coords.end()) continue;
      fixed += schema_->feature(i).scale_weight * (base[i] - anchor[i]) * (base[i] - anchor[i]);
    }
    if (best.status != FlipStatus::kNoFlipExists && Rank(best.status) == 0 &&
        fixed >= best.dist2) {
      return best;
    }
    Subproblem sub;
    sub.anchor = anchor;
    sub.base = base;
    sub.free = real_coords;
    for (size_t i : real_coords) {
      const auto& f = schema_->feature(i);
      sub.lo.push_back(constraint.respect_bounds ? f.lower.value_or(-kInf) : -kInf);
      sub.hi.push_back(constraint.respect_bounds ? f.upper.value_or(kInf) : kInf);
    }
    Candidate c = SolveAssignment(sub, 1, warm);
    if (real_coords.empty() || c.status != FlipStatus::kConverged) {
      // Judge the pattern against the input's own decision.
      Candidate e = Evaluate(sub);
      if (c.status != FlipStatus::kConverged && e.BetterThan(c)) c = e;
    }
    total_iters += c.iterations;
    if (c.BetterThan(best)) best = c;
    return c;
  };

  double patterns = 1.0;
  for (const auto& v : values) patterns *= static_cast<double>(v.size());
  if (patterns <= 1024.0) {
    std::vector<size_t> pick(values.size(), 0);
    while (true) {
      try_pattern(pick);
      size_t k = 0;
      for (; k < pick.size(); ++k) {
        if (++pick[k] < values[k].size()) break;
        pick[k] = 0;
      }
      if (k == pick.size()) break;
    }
  } else {
    std::vector<size_t> pick(values.size(), 0);
    Candidate cur = try_pattern(pick);
    for (int sweep = 0; sweep < 3; ++sweep) {
      bool improved = false;
      for (size_t k = 0; k < pick.size(); ++k) {
        for (size_t t = 0; t < values[k].size(); ++t) {
          if (t == pick[k]) continue;
          std::vector<size_t> trial = pick;
          trial[k] = t;
          const Candidate c = try_pattern(trial);
          if (c.BetterThan(cur)) {
            cur = c;
            pick = trial;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
  }
  if (best.status != FlipStatus::kConverged &&
      best.status != FlipStatus::kDecisionChanged) {
    best = Candidate();
    best.status = FlipStatus::kNoFlipExists;
  }
  best.iterations = total_iters;
  best.starts = relaxed.restarts_used;
  return Finish(anchor, best);
}

}  // namespace flipaudit::flipsolve
