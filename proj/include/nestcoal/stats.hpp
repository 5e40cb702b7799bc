#pragma once

// Aggregation of simulation records into empirical distributions, and the
// statistical comparisons run against the fixed point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dist.hpp"
#include "rng.hpp"
#include "sim.hpp"

namespace nestcoal {

struct insufficient_data : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Counts of observed values 1..M plus an overflow count for values above M.
class Histogram {
 public:
  explicit Histogram(std::size_t trunc) : counts_(trunc, 0) {
    if (trunc == 0) throw std::invalid_argument("histogram truncation must be >= 1");
  }

  void add(std::uint64_t value, std::uint64_t times = 1) {
    if (value == 0) throw std::invalid_argument("values must be >= 1");
    if (value <= counts_.size()) counts_[value - 1] += times;
    else overflow_ += times;
    total_ += times;
  }

  std::size_t trunc() const { return counts_.size(); }
  std::uint64_t operator[](std::size_t value) const {
    return (value >= 1 && value <= counts_.size()) ? counts_[value - 1] : 0;
  }
  std::uint64_t overflow() const { return overflow_; }
  std::uint64_t total() const { return total_; }

  TruncatedPMF to_pmf() const {
    if (total_ == 0) throw insufficient_data("empty histogram");
    const double n = static_cast<double>(total_);
    std::vector<double> p(counts_.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = static_cast<double>(counts_[k]) / n;
    return TruncatedPMF::from_probs(std::move(p), static_cast<double>(overflow_) / n);
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t overflow_ = 0;
  std::uint64_t total_ = 0;
};

inline Histogram pooled_histogram(std::span<const SimRecord> records, std::size_t trunc) {
  Histogram h(trunc);
  for (const auto& r : records)
    for (auto n : r.counts_at_tau_minus) h.add(n);
  return h;
}

// Pooled relative frequencies of every N across replicates and positions.
inline TruncatedPMF empirical_pmf(std::span<const SimRecord> records, std::size_t trunc) {
  if (records.empty()) throw insufficient_data("no records");
  return pooled_histogram(records, trunc).to_pmf();
}

// One PMF per position l = 1..m (records must share m).
inline std::vector<TruncatedPMF> per_position_pmfs(std::span<const SimRecord> records,
                                                   std::size_t trunc) {
  if (records.empty()) throw insufficient_data("no records");
  const std::size_t m = records.front().counts_at_tau_minus.size();
  std::vector<Histogram> hs(m, Histogram(trunc));
  for (const auto& r : records) {
    if (r.counts_at_tau_minus.size() != m) throw std::invalid_argument("records disagree on m");
    for (std::size_t l = 0; l < m; ++l) hs[l].add(r.counts_at_tau_minus[l]);
  }
  std::vector<TruncatedPMF> out;
  out.reserve(m);
  for (const auto& h : hs) out.push_back(h.to_pmf());
  return out;
}

struct ChiSquareResult {
  double statistic;
  std::size_t dof;
  double p_value;
};

// Pearson chi-square of a histogram against a reference PMF. Cells are
// walked from value 1 upward (overflow last) and merged until each pooled
// cell expects at least 5 observations; a short final group joins the
// previous cell.
inline ChiSquareResult chi_square_gof(const Histogram& h, const TruncatedPMF& reference) {
  if (h.total() == 0) throw insufficient_data("empty histogram");
  if (h.trunc() < reference.trunc())
    throw dimension_mismatch("histogram truncation is below the reference truncation");
  const double n = static_cast<double>(h.total());
  const std::size_t m = reference.trunc();

  // (expected, observed) for value cells 1..M and one overflow cell
  std::vector<double> exp_cells, obs_cells;
  exp_cells.reserve(m + 1);
  obs_cells.reserve(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    exp_cells.push_back(n * reference[i]);
    obs_cells.push_back(static_cast<double>(h[i]));
  }
  std::uint64_t obs_over = h.overflow();
  for (std::size_t i = m + 1; i <= h.trunc(); ++i) obs_over += h[i];
  exp_cells.push_back(n * reference.overflow());
  obs_cells.push_back(static_cast<double>(obs_over));

  std::vector<double> e, o;
  double acc_e = 0.0, acc_o = 0.0;
  for (std::size_t k = 0; k < exp_cells.size(); ++k) {
    acc_e += exp_cells[k];
    acc_o += obs_cells[k];
    if (acc_e >= 5.0) {
      e.push_back(acc_e);
      o.push_back(acc_o);
      acc_e = acc_o = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (e.empty()) {
      e.push_back(acc_e);
      o.push_back(acc_o);
    } else {
      e.back() += acc_e;
      o.back() += acc_o;
    }
  }
  if (e.size() < 2) throw std::invalid_argument("degenerate reference: fewer than two cells");

  double stat = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double d = o[k] - e[k];
    stat += d * d / e[k];
  }
  const std::size_t dof = e.size() - 1;
  const double p = std::isfinite(stat) ? boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * stat)
                                       : 0.0;
  return {stat, dof, p};
}

struct Correlation {
  double r;
  double stderr_jackknife;
};

// Pearson correlation with a delete-one jackknife standard error.
inline Correlation pearson_jackknife(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("series lengths differ");
  const std::size_t n = x.size();
  if (n < 10) throw insufficient_data("need at least 10 replicates for a correlation");
  // Center first to keep the running sums well conditioned.
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = x[k] - mx, b = y[k] - my;
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  auto corr = [](double cnt, double ax, double ay, double axx, double ayy, double axy) {
    const double cov = axy - ax * ay / cnt;
    const double vx = axx - ax * ax / cnt;
    const double vy = ayy - ay * ay / cnt;
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
  };
  const double dn = static_cast<double>(n);
  const double r = corr(dn, sx, sy, sxx, syy, sxy);
  std::vector<double> loo(n);
  double loo_mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = x[k] - mx, b = y[k] - my;
    loo[k] = corr(dn - 1.0, sx - a, sy - b, sxx - a * a, syy - b * b, sxy - a * b);
    loo_mean += loo[k];
  }
  loo_mean /= dn;
  double ss = 0.0;
  for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
  return {r, std::sqrt((dn - 1.0) / dn * ss)};
}

// Correlation across replicates of N at positions l1 and l2 (1-based).
inline Correlation independence_check(std::span<const SimRecord> records, std::size_t l1,
                                      std::size_t l2) {
  if (records.size() < 10) throw insufficient_data("need at least 10 replicates for a correlation");
  std::vector<double> x, y;
  x.reserve(records.size());
  y.reserve(records.size());
  for (const auto& r : records) {
    const std::size_t m = r.counts_at_tau_minus.size();
    if (m < 2) throw std::invalid_argument("independence check needs m >= 2");
    if (l1 < 1 || l2 < 1 || l1 > m || l2 > m) throw std::invalid_argument("position out of range");
    x.push_back(static_cast<double>(r.counts_at_tau_minus[l1 - 1]));
    y.push_back(static_cast<double>(r.counts_at_tau_minus[l2 - 1]));
  }
  return pearson_jackknife(x, y);
}

// Bootstrap standard deviation of TV(empirical, reference), resampling whole
// replicates.
inline double bootstrap_tv_stderr(std::span<const SimRecord> records, const TruncatedPMF& reference,
                                  std::size_t resamples, std::uint64_t seed) {
  if (records.empty()) throw insufficient_data("no records");
  if (resamples < 2) return 0.0;
  RandomStream rng = make_stream(seed, 0xb007);
  std::vector<double> tvs;
  tvs.reserve(resamples);
  const std::size_t n = records.size();
  for (std::size_t b = 0; b < resamples; ++b) {
    Histogram h(reference.trunc());
    for (std::size_t k = 0; k < n; ++k)
      for (auto v : records[detail::draw_index(rng, n)].counts_at_tau_minus) h.add(v);
    tvs.push_back(total_variation(h.to_pmf(), reference));
  }
  double mu = 0.0;
  for (double v : tvs) mu += v;
  mu /= static_cast<double>(tvs.size());
  double ss = 0.0;
  for (double v : tvs) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(tvs.size() - 1));
}

struct ExperimentThresholds {
  double tv_max = 0.02;
  double correlation_se_multiple = 3.0;
  std::size_t bootstrap_resamples = 200;
  std::uint64_t bootstrap_seed = 1;
};

struct PairCorrelation {
  std::size_t l1, l2;
  Correlation corr;
};

struct ExperimentReport {
  TruncatedPMF empirical;
  TruncatedPMF reference;
  std::vector<TruncatedPMF> per_position;
  double tv;
  double tv_mc_stderr;
  double mean_estimate;
  double mean_stderr;
  std::vector<PairCorrelation> pairwise_correlations;
  std::size_t n_replicates;
  bool tv_pass;
  bool independence_pass;
  bool pass;
};

// Pooled PMF vs reference, per-position PMFs, mean of N, and all pairwise
// position correlations (the latter only with 10+ replicates and m >= 2).
inline ExperimentReport build_report(std::span<const SimRecord> records,
                                     const TruncatedPMF& reference,
                                     const ExperimentThresholds& th = {}) {
  if (records.empty()) throw insufficient_data("no records");
  const std::size_t trunc = reference.trunc();
  TruncatedPMF emp = empirical_pmf(records, trunc);
  const double tv = total_variation(emp, reference);

  double sum = 0.0, sumsq = 0.0;
  std::size_t cnt = 0;
  for (const auto& r : records)
    for (auto v : r.counts_at_tau_minus) {
      const double d = static_cast<double>(v);
      sum += d;
      sumsq += d * d;
      ++cnt;
    }
  const double mean_est = sum / static_cast<double>(cnt);
  const double var = cnt > 1 ? (sumsq - sum * mean_est) / static_cast<double>(cnt - 1) : 0.0;

  std::vector<PairCorrelation> pairs;
  bool indep_ok = true;
  const std::size_t m = records.front().counts_at_tau_minus.size();
  bool same_m = true;
  for (const auto& r : records) same_m = same_m && r.counts_at_tau_minus.size() == m;
  std::vector<TruncatedPMF> per_pos;
  if (same_m) per_pos = per_position_pmfs(records, trunc);
  if (same_m && m >= 2 && records.size() >= 10) {
    for (std::size_t a = 1; a <= m; ++a)
      for (std::size_t b = a + 1; b <= m; ++b) {
        const Correlation cor = independence_check(records, a, b);
        pairs.push_back({a, b, cor});
        if (std::abs(cor.r) > th.correlation_se_multiple * cor.stderr_jackknife) indep_ok = false;
      }
  }
  const double tv_se = bootstrap_tv_stderr(records, reference, th.bootstrap_resamples, th.bootstrap_seed);
  const bool tv_ok = tv < th.tv_max;
  return ExperimentReport{std::move(emp),
                          reference,
                          std::move(per_pos),
                          tv,
                          tv_se,
                          mean_est,
                          std::sqrt(std::max(0.0, var) / static_cast<double>(cnt)),
                          std::move(pairs),
                          records.size(),
                          tv_ok,
                          indep_ok,
                          tv_ok && indep_ok};
}

inline nlohmann::json to_json(const ExperimentReport& r, const ExperimentThresholds& th) {
  nlohmann::json corr = nlohmann::json::array();
  for (const auto& p : r.pairwise_correlations)
    corr.push_back({{"l1", p.l1}, {"l2", p.l2}, {"r", p.corr.r}, {"stderr", p.corr.stderr_jackknife}});
  nlohmann::json per = nlohmann::json::array();
  for (const auto& p : r.per_position) per.push_back(to_json(p));
  return nlohmann::json{{"empirical", to_json(r.empirical)},
                        {"reference", to_json(r.reference)},
                        {"per_position", per},
                        {"tv", r.tv},
                        {"tv_mc_stderr", r.tv_mc_stderr},
                        {"mean_estimate", r.mean_estimate},
                        {"mean_stderr", r.mean_stderr},
                        {"pairwise_correlations", corr},
                        {"n_replicates", r.n_replicates},
                        {"thresholds",
                         {{"tv_max", th.tv_max},
                          {"correlation_se_multiple", th.correlation_se_multiple},
                          {"bootstrap_resamples", th.bootstrap_resamples},
                          {"bootstrap_seed", th.bootstrap_seed}}},
                        {"tv_pass", r.tv_pass},
                        {"independence_pass", r.independence_pass},
                        {"pass", r.pass}};
}

struct MeanConvergenceRow {
  std::size_t species;
  std::size_t m;
  std::size_t reps;
  double mean;
  double sd;
};

struct MeanConvergenceTable {
  std::vector<MeanConvergenceRow> rows;
  double reference;
  bool pass;  // |mean - reference| <= 3 sd / sqrt(reps) on the largest (s, m)
};

struct MeanConvergenceBase {
  Count lineages = Count::finite(10);
  double c = 1.0;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  std::size_t l_max = kDefaultDescentCap;
};

// Replicate mean and SD of (1/m) sum N for each (s, m), against the mean of
// the reference fixed point.
inline MeanConvergenceTable mean_convergence_report(
    const std::vector<std::pair<std::size_t, std::size_t>>& configs, const MeanConvergenceBase& base,
    double reference_mean) {
  if (configs.empty()) throw std::invalid_argument("no (s, m) configurations");
  if (base.reps < 2) throw insufficient_data("need at least 2 replicates per configuration");
  MeanConvergenceTable out{{}, reference_mean, false};
  std::size_t largest = 0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const auto [s, m] = configs[k];
    if (m == 0 || m > s) throw std::invalid_argument("each configuration needs 1 <= m <= s");
    std::vector<double> vals(base.reps);
    for (std::size_t r = 0; r < base.reps; ++r) {
      // stream keyed by configuration index and replicate
      RandomStream rng = make_stream(base.seed + 0x9e3779b97f4a7c15ull * (k + 1), r);
      vals[r] = run_average(s, base.lineages, m, base.c, rng, base.l_max);
    }
    double mu = 0.0;
    for (double v : vals) mu += v;
    mu /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mu) * (v - mu);
    out.rows.push_back({s, m, base.reps, mu, std::sqrt(ss / static_cast<double>(vals.size() - 1))});
    if (s * m > configs[largest].first * configs[largest].second) largest = k;
  }
  const auto& big = out.rows[largest];
  out.pass = std::abs(big.mean - reference_mean) <= 3.0 * big.sd / std::sqrt(static_cast<double>(big.reps));
  return out;
}

}  // namespace nestcoal
