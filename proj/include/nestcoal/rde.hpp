#pragma once

// The map F_c(mu) = law of K_{W1+W2}(Y), its monotone iteration from the
// bottom (delta_1) and the top (delta_inf) of the stochastic order, and the
// sandwich certificate built from the two.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dist.hpp"
#include "kernel.hpp"

namespace nestcoal {

struct SolverConfig {
  double c = 1.0;
  std::size_t trunc = 500;
  double tol = 1e-12;
  std::size_t max_iters = 100000;
  double kernel_tol = 1e-12;

  void validate() const {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("c must be positive");
    if (trunc < 2) throw std::invalid_argument("trunc_M must be >= 2");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (max_iters == 0) throw std::invalid_argument("max_iters must be >= 1");
    if (!(kernel_tol > 0.0)) throw std::invalid_argument("kernel_tol must be positive");
  }
};

// One application of F_c. Overflow of the convolution is sent through the
// infinity row (AtInfinity) or through row 2M (AtTruncation); mass landing
// above M goes back into overflow with the input's mode.
inline TruncatedPMF apply_F(const TruncatedPMF& mu, const KernelTable& table) {
  if (mu.trunc() != table.trunc())
    throw dimension_mismatch("apply_F: pmf trunc_M " + std::to_string(mu.trunc()) +
                             " vs table trunc_M " + std::to_string(table.trunc()));
  const std::size_t m = mu.trunc();
  const TruncatedPMF sum = convolve(mu, mu);
  const auto conv = sum.probs();

  std::vector<double> out(m, 0.0);
  double over = 0.0;
  for (std::size_t j = 2; j <= 2 * m; ++j) {
    const double w = conv[j - 1];
    if (w == 0.0) continue;
    const auto r = table.row(j);
    const std::size_t top = std::min(j, m);
    for (std::size_t i = 0; i < top; ++i) out[i] += w * r[i];
    over += w * table.row_tail_above_trunc(j);
  }
  const double w_over = sum.overflow();
  if (w_over > 0.0) {
    if (mu.mode() == OverflowMode::AtInfinity) {
      const auto& inf = table.infinity_row().probs;
      for (std::size_t i = 0; i < m; ++i) out[i] += w_over * inf[i];
      over += w_over * table.infinity_tail_above_trunc();
    } else {
      const auto r = table.row(2 * m);
      for (std::size_t i = 0; i < m; ++i) out[i] += w_over * r[i];
      over += w_over * table.row_tail_above_trunc(2 * m);
    }
  }
  // F preserves mass exactly; strip rounding drift so it cannot build up
  // over thousands of iterations.
  const double total = std::accumulate(out.begin(), out.end(), over);
  for (double& v : out) v /= total;
  return TruncatedPMF::from_probs(std::move(out), over / total, mu.mode());
}

enum class StartPoint { FromDeltaOne, FromInfinity };

inline TruncatedPMF start_distribution(StartPoint start, std::size_t trunc) {
  return start == StartPoint::FromDeltaOne ? pmf_delta(Count::finite(1), trunc)
                                           : pmf_delta(Count::infinite(), trunc);
}

// Stateful stepper over F^n(start); each step reports the TV distance
// between successive iterates.
class FixedPointIteration {
 public:
  FixedPointIteration(const KernelTable& table, StartPoint start)
      : table_(&table), current_(start_distribution(start, table.trunc())) {}

  double step() {
    TruncatedPMF next = apply_F(current_, *table_);
    last_change_ = total_variation(current_, next);
    current_ = std::move(next);
    ++iterations_;
    return last_change_;
  }

  const TruncatedPMF& current() const { return current_; }
  std::size_t iterations() const { return iterations_; }
  double last_change() const { return last_change_; }

 private:
  const KernelTable* table_;
  TruncatedPMF current_;
  std::size_t iterations_ = 0;
  double last_change_ = std::numeric_limits<double>::infinity();
};

struct IterationResult {
  TruncatedPMF pmf;
  std::size_t iterations;
  double last_change;
  bool converged;
};

// Iterates F until successive iterates are within cfg.tol in TV. The
// observer, when given, sees every iterate (index starting at 1).
inline IterationResult iterate_fixed_point(
    const SolverConfig& cfg, StartPoint start, const KernelTable& table,
    const std::function<void(std::size_t, const TruncatedPMF&)>& observer = {}) {
  cfg.validate();
  FixedPointIteration it(table, start);
  while (it.iterations() < cfg.max_iters) {
    const double change = it.step();
    if (observer) observer(it.iterations(), it.current());
    if (change < cfg.tol) break;
  }
  return {it.current(), it.iterations(), it.last_change(), it.last_change() < cfg.tol};
}

inline IterationResult iterate_fixed_point(const SolverConfig& cfg, StartPoint start) {
  cfg.validate();
  const KernelTable table = build_table(cfg.c, cfg.trunc, cfg.kernel_tol);
  return iterate_fixed_point(cfg, start, table);
}

// max_{i <= M-1} |(i(i-1) + 2c) mu(i) - (i+1) i mu(i+1) - 2c (mu*mu)(i)|
inline double verify_recurrence(const TruncatedPMF& mu, double c) {
  const std::size_t m = mu.trunc();
  // (mu*mu)(i) for i <= M - 1 only needs the finite part.
  std::vector<double> conv(m + 1, 0.0);
  for (std::size_t a = 1; a < m; ++a) {
    const double pa = mu[a];
    if (pa == 0.0) continue;
    for (std::size_t b = 1; a + b <= m; ++b) conv[a + b] += pa * mu[b];
  }
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 <= m; ++i) {
    const double di = static_cast<double>(i);
    const double lhs = (di * (di - 1.0) + 2.0 * c) * mu[i];
    const double rhs = (di + 1.0) * di * mu[i + 1] + 2.0 * c * conv[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

// mu*_1({i}) = (2i - 1) / 3^i, with the exact tail sum_{i>M} = (M+1) / 3^M.
inline TruncatedPMF closed_form_c1(std::size_t trunc) {
  if (trunc == 0) throw std::invalid_argument("trunc_M must be >= 1");
  std::vector<double> p(trunc);
  double third_pow = 1.0;
  for (std::size_t i = 1; i <= trunc; ++i) {
    third_pow /= 3.0;
    p[i - 1] = (2.0 * static_cast<double>(i) - 1.0) * third_pow;
  }
  const double over = (static_cast<double>(trunc) + 1.0) * third_pow;
  return TruncatedPMF::from_probs(std::move(p), over);
}

struct SolverReport {
  TruncatedPMF fixed_point;
  TruncatedPMF lower;
  TruncatedPMF upper;
  double sandwich_gap;
  std::size_t iterations;
  std::size_t lower_iterations;
  std::size_t upper_iterations;
  double recurrence_residual;
  bool converged;
  // Iteration indices at which lower was not below upper, or a branch moved
  // the wrong way in the stochastic order. All zero when the sandwich is sound.
  std::size_t order_violations;
  std::size_t monotonicity_violations;
  std::string diagnostics;
};

// Runs the lower and upper iterations in lockstep, checking at every step
// that lower stays below upper and both branches move monotonically. Stops
// when both branches have settled and the gap is within tol, when the gap
// stagnates above tol, or at max_iters.
inline SolverReport sandwich_solve(const SolverConfig& cfg) {
  cfg.validate();
  const KernelTable table = build_table(cfg.c, cfg.trunc, cfg.kernel_tol);
  FixedPointIteration lo(table, StartPoint::FromDeltaOne);
  FixedPointIteration hi(table, StartPoint::FromInfinity);

  std::size_t order_bad = 0, mono_bad = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t since_improved = 0;
  constexpr std::size_t kStagnationWindow = 10;
  double gap = total_variation(lo.current(), hi.current());
  bool lo_done = false, hi_done = false;
  std::string why = "max_iters reached";

  for (std::size_t n = 0; n < cfg.max_iters; ++n) {
    const TruncatedPMF prev_lo = lo.current();
    const TruncatedPMF prev_hi = hi.current();
    if (!lo_done || gap > cfg.tol) lo_done = lo.step() < cfg.tol;
    if (!hi_done || gap > cfg.tol) hi_done = hi.step() < cfg.tol;
    if (!stochastically_le(prev_lo, lo.current())) ++mono_bad;
    if (!stochastically_le(hi.current(), prev_hi)) ++mono_bad;
    if (!stochastically_le(lo.current(), hi.current())) ++order_bad;

    gap = total_variation(lo.current(), hi.current());
    if (gap < best_gap * (1.0 - 1e-3)) {
      best_gap = gap;
      since_improved = 0;
    } else {
      ++since_improved;
    }
    if (lo_done && hi_done && gap <= cfg.tol) {
      why = "converged";
      break;
    }
    if (lo_done && hi_done && since_improved >= kStagnationWindow) {
      why = "sandwich gap stagnated above tol; increase trunc_M";
      break;
    }
  }

  const double residual = verify_recurrence(lo.current(), cfg.c);
  const bool ok = lo_done && hi_done && gap <= cfg.tol && residual <= 100.0 * cfg.tol;
  if (!ok && why == "converged") why = "recurrence residual above 100 * tol";
  return SolverReport{lo.current(),
                      lo.current(),
                      hi.current(),
                      gap,
                      std::max(lo.iterations(), hi.iterations()),
                      lo.iterations(),
                      hi.iterations(),
                      residual,
                      ok,
                      order_bad,
                      mono_bad,
                      why};
}

inline nlohmann::json to_json(const SolverReport& r, const SolverConfig& cfg) {
  return nlohmann::json{{"config",
                         {{"c", cfg.c},
                          {"trunc_M", cfg.trunc},
                          {"tol", cfg.tol},
                          {"max_iters", cfg.max_iters},
                          {"kernel_tol", cfg.kernel_tol}}},
                        {"fixed_point", to_json(r.fixed_point)},
                        {"lower", to_json(r.lower)},
                        {"upper", to_json(r.upper)},
                        {"sandwich_gap", r.sandwich_gap},
                        {"iterations", r.iterations},
                        {"lower_iterations", r.lower_iterations},
                        {"upper_iterations", r.upper_iterations},
                        {"recurrence_residual", r.recurrence_residual},
                        {"converged", r.converged},
                        {"order_violations", r.order_violations},
                        {"monotonicity_violations", r.monotonicity_violations},
                        {"diagnostics", r.diagnostics}};
}

}  // namespace nestcoal
