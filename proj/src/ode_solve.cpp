// Copyright 2026 The flowfill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowfill/ode_solve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <vector>

namespace flowfill {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Array checked_eval(const VectorField& field, double t, const Array& w, std::size_t& nfe,
                   std::size_t step) {
  Array v = field(t, w);
  ++nfe;
  require_same_shape("solve: field output", w, v);
  if (!v.all_finite()) throw SolveError("solve: non-finite field value", step);
  return v;
}

void record(SolveTrace& trace, const SolverConfig& config, double t, const Array& w) {
  if (!config.keep_states) return;
  trace.times.push_back(t);
  trace.states.push_back(w);
}

void solve_fixed(const VectorField& field, Array& w, const SolverConfig& config,
                 SolveTrace& trace) {
  const std::size_t n = config.steps();
  const double h = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n);
    Array k1 = checked_eval(field, t, w, trace.nfe, k);
    if (config.method == SolverMethod::kEuler) {
      axpy_inplace(w, h, k1);
    } else {
      Array mid = w;
      axpy_inplace(mid, 0.5 * h, k1);
      Array k2 = checked_eval(field, t + 0.5 * h, mid, trace.nfe, k);
      axpy_inplace(w, h, k2);
    }
    if (!w.all_finite()) throw SolveError("solve: non-finite state", k);
    ++trace.accepted_steps;
    record(trace, config, static_cast<double>(k + 1) / static_cast<double>(n), w);
  }
}

// Dormand-Prince 5(4) with first-same-as-last reuse.
void solve_adaptive(const VectorField& field, Array& w, const SolverConfig& config,
                    SolveTrace& trace) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat for the embedded fourth-order solution.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  auto combo = [&](const Array& base, double h,
                   std::initializer_list<std::pair<double, const Array*>> terms) {
    Array out = base;
    for (const auto& [coef, k] : terms) {
      if (coef != 0.0) axpy_inplace(out, h * coef, *k);
    }
    return out;
  };

  double t = 0.0;
  std::size_t step = 0;
  Array k1 = checked_eval(field, t, w, trace.nfe, step);
  double h = 0.05;
  while (t < 1.0) {
    h = std::min(h, 1.0 - t);
    if (h < 1e-12) throw SolveError("solve: adaptive step size underflow", step);
    Array k2 = checked_eval(field, t + c2 * h, combo(w, h, {{a21, &k1}}), trace.nfe, step);
    Array k3 = checked_eval(field, t + c3 * h, combo(w, h, {{a31, &k1}, {a32, &k2}}),
                            trace.nfe, step);
    Array k4 = checked_eval(field, t + c4 * h,
                            combo(w, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}), trace.nfe, step);
    Array k5 = checked_eval(field, t + c5 * h,
                            combo(w, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}),
                            trace.nfe, step);
    Array k6 = checked_eval(
        field, t + h,
        combo(w, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}), trace.nfe,
        step);
    Array next = combo(w, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const bool last = (1.0 - t) <= h;
    const double t_next = last ? 1.0 : t + h;
    Array k7 = checked_eval(field, t_next, next, trace.nfe, step);

    double err = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                            e7 * k7[i]);
      const double sc = config.atol + config.rtol * std::max(std::abs(w[i]), std::abs(next[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / static_cast<double>(std::max<std::size_t>(w.size(), 1)));

    if (err <= 1.0) {
      t = t_next;
      w = std::move(next);
      k1 = std::move(k7);
      ++trace.accepted_steps;
      record(trace, config, t, w);
    } else {
      ++trace.rejected_steps;
    }
    ++step;
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= factor;
  }
}

}  // namespace

std::string to_string(SolverMethod method) {
  switch (method) {
    case SolverMethod::kEuler: return "euler";
    case SolverMethod::kMidpoint: return "midpoint";
    case SolverMethod::kAdaptive: return "adaptive";
  }
  return "unknown";
}

SolverMethod solver_method_from_string(const std::string& name) {
  if (name == "euler") return SolverMethod::kEuler;
  if (name == "midpoint") return SolverMethod::kMidpoint;
  if (name == "adaptive" || name == "dopri5") return SolverMethod::kAdaptive;
  throw std::invalid_argument("unknown solver method '" + name + "'");
}

void SolverConfig::validate() const {
  if (method == SolverMethod::kAdaptive) {
    if (!(atol > 0.0 && rtol > 0.0)) {
      throw std::invalid_argument("SolverConfig: tolerances must be positive");
    }
  } else {
    if (!(step_size > 0.0 && step_size <= 1.0)) {
      throw std::invalid_argument("SolverConfig: step_size must lie in (0, 1]");
    }
    const double n = 1.0 / step_size;
    if (std::abs(n - std::round(n)) > 1e-9 * n) {
      throw std::invalid_argument("SolverConfig: step_size " + std::to_string(step_size) +
                                  " does not divide [0, 1] into whole steps");
    }
  }
  if (!std::isfinite(cfg_alpha)) throw std::invalid_argument("SolverConfig: cfg_alpha not finite");
}

std::size_t SolverConfig::steps() const {
  return static_cast<std::size_t>(std::llround(1.0 / step_size));
}

SolverConfig config_for_nfe(SolverMethod method, std::size_t nfe, double cfg_alpha) {
  SolverConfig config;
  config.method = method;
  config.cfg_alpha = cfg_alpha;
  if (nfe == 0) throw std::invalid_argument("config_for_nfe: nfe must be positive");
  switch (method) {
    case SolverMethod::kEuler:
      config.step_size = 1.0 / static_cast<double>(nfe);
      break;
    case SolverMethod::kMidpoint:
      if (nfe % 2 != 0) {
        throw std::invalid_argument("config_for_nfe: midpoint needs an even nfe, got " +
                                    std::to_string(nfe));
      }
      config.step_size = 2.0 / static_cast<double>(nfe);
      break;
    case SolverMethod::kAdaptive:
      throw std::invalid_argument("config_for_nfe: adaptive solver has no fixed nfe");
  }
  return config;
}

SolveTrace solve(const VectorField& field, const Array& x0, const SolverConfig& config) {
  config.validate();
  if (!x0.all_finite()) throw SolveError("solve: non-finite initial state", 0);
  const auto start = Clock::now();
  SolveTrace trace;
  Array w = x0;
  record(trace, config, 0.0, w);
  if (config.method == SolverMethod::kAdaptive) {
    solve_adaptive(field, w, config, trace);
  } else {
    solve_fixed(field, w, config, trace);
  }
  trace.endpoint = std::move(w);
  trace.wall_time_ms = elapsed_ms(start);
  return trace;
}

Array evaluate_field(const ConditionalField& model, const Array& w, const Array& ctx,
                     std::span<const int> tokens, double t) {
  Tape tape;
  return model.forward(tape, w, ctx, tokens, t).value();
}

SolveTrace solve_guided(const ConditionalField& model, const Array& x_ctx,
                        std::span<const int> tokens, const Array& x0,
                        const SolverConfig& config) {
  std::size_t calls = 0;
  const double alpha = config.cfg_alpha;
  const Array null_ctx = Array::zeros_like(x_ctx);
  const std::vector<int> null_tokens(tokens.size(), model.null_token());
  VectorField field = [&](double t, const Array& w) {
    ++calls;
    Array v_cond = evaluate_field(model, w, x_ctx, tokens, t);
    if (alpha == 0.0) return v_cond;
    ++calls;
    Array v_uncond = evaluate_field(model, w, null_ctx, null_tokens, t);
    return cfg_combine(v_cond, v_uncond, alpha);
  };
  SolveTrace trace = solve(field, x0, config);
  trace.nfe = calls;
  return trace;
}

std::vector<SweepRow> nfe_sweep(const SweepEvaluator& evaluate,
                                std::span<const std::size_t> nfe_list,
                                std::span<const double> alpha_list, SolverMethod method) {
  std::vector<SweepRow> rows;
  for (std::size_t nfe : nfe_list) {
    for (double alpha : alpha_list) {
      const SweepCell cell = evaluate(config_for_nfe(method, nfe, alpha));
      for (const auto& [name, value] : cell.metrics) {
        rows.push_back(SweepRow{cell.nfe, alpha, name, value, cell.wall_time_ms});
      }
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << kSweepCsvHeader << '\n';
  for (const SweepRow& r : rows) {
    out << r.nfe << ',' << r.alpha << ',' << r.metric << ',' << r.value << ','
        << r.wall_time_ms << '\n';
  }
}

}  // namespace flowfill
