#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nestcoal/rde.hpp"
#include "nestcoal/stats.hpp"

namespace nc = nestcoal;
using nc::SimRecord;

namespace {

SimRecord record(std::vector<std::uint64_t> counts, std::uint64_t id = 0) {
  SimRecord r;
  r.m = counts.size();
  r.counts_at_tau_minus = std::move(counts);
  r.tau = 1.0;
  r.replicate_id = id;
  return r;
}

// Draw from mu*_1 by inversion on the closed form.
std::uint64_t draw_closed_form(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cdf = 0.0, pow3 = 1.0;
  for (std::uint64_t i = 1;; ++i) {
    pow3 /= 3.0;
    cdf += (2.0 * static_cast<double>(i) - 1.0) * pow3;
    if (u < cdf || i > 200) return i;
  }
}

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k] / n, my += y[k] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Empirical, Frequencies) {
  const std::vector<SimRecord> one{record({1, 1})};
  const auto d = nc::empirical_pmf(one, 5);
  EXPECT_EQ(d[1], 1.0);
  const std::vector<SimRecord> two{record({1, 2})};
  const auto e = nc::empirical_pmf(two, 5);
  EXPECT_EQ(e[1], 0.5);
  EXPECT_EQ(e[2], 0.5);
  const std::vector<SimRecord> big{record({1, 9}), record({3, 2})};
  const auto f = nc::empirical_pmf(big, 4);
  EXPECT_EQ(f.overflow(), 0.25);
  EXPECT_EQ(f.mode(), nc::OverflowMode::AtTruncation);
  EXPECT_THROW(nc::empirical_pmf(std::vector<SimRecord>{}, 4), nc::insufficient_data);
}

TEST(Empirical, OrderIndependent) {
  std::mt19937_64 rng(1);
  std::vector<SimRecord> recs;
  for (int k = 0; k < 200; ++k) recs.push_back(record({draw_closed_form(rng), draw_closed_form(rng)}, k));
  const auto a = nc::empirical_pmf(recs, 30);
  const auto ref = nc::closed_form_c1(30);
  const auto ra = nc::build_report(recs, ref);
  std::shuffle(recs.begin(), recs.end(), rng);
  const auto b = nc::empirical_pmf(recs, 30);
  EXPECT_EQ(nc::total_variation(a, b), 0.0);
  const auto rb = nc::build_report(recs, ref);
  EXPECT_EQ(ra.tv, rb.tv);
  EXPECT_EQ(ra.mean_estimate, rb.mean_estimate);
}

TEST(PerPosition, SplitsByIndex) {
  const std::vector<SimRecord> recs{record({1, 2}), record({1, 3})};
  const auto pp = nc::per_position_pmfs(recs, 4);
  ASSERT_EQ(pp.size(), 2u);
  EXPECT_EQ(pp[0][1], 1.0);
  EXPECT_EQ(pp[1][2], 0.5);
  EXPECT_EQ(pp[1][3], 0.5);
}

TEST(ChiSquare, HandComputedStatistic) {
  nc::Histogram h(2);
  h.add(1, 60);
  h.add(2, 40);
  const auto r = nc::chi_square_gof(h, nc::TruncatedPMF::from_probs({0.5, 0.5}, 0.0));
  EXPECT_DOUBLE_EQ(r.statistic, 4.0);
  EXPECT_EQ(r.dof, 1u);
  EXPECT_NEAR(r.p_value, 0.0455002638963584, 1e-12);
}

TEST(ChiSquare, NullHoldsAndGrossMismatch) {
  const auto ref = nc::closed_form_c1(40);
  std::mt19937_64 rng(2);
  nc::Histogram good(40);
  for (int k = 0; k < 1000000; ++k) good.add(draw_closed_form(rng));
  EXPECT_GT(nc::chi_square_gof(good, ref).p_value, 0.001);

  nc::Histogram bad(40);
  bad.add(1, 1000);
  EXPECT_LT(nc::chi_square_gof(bad, ref).p_value, 1e-6);
}

TEST(ChiSquare, Errors) {
  nc::Histogram h(3);
  h.add(1, 100);
  EXPECT_THROW(nc::chi_square_gof(h, nc::pmf_delta(nc::Count::finite(1), 3)), std::invalid_argument);
  EXPECT_THROW(nc::chi_square_gof(nc::Histogram(3), nc::closed_form_c1(3)), nc::insufficient_data);
  EXPECT_THROW(nc::chi_square_gof(h, nc::closed_form_c1(5)), nc::dimension_mismatch);
}

TEST(Correlation, MatchesNaiveAndJackknife) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> x(40), y(40);
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = z(rng);
    y[k] = 0.6 * x[k] + z(rng);
  }
  const auto c = nc::pearson_jackknife(x, y);
  EXPECT_NEAR(c.r, naive_pearson(x, y), 1e-12);
  // delete-one jackknife, recomputed from scratch
  std::vector<double> loo;
  for (std::size_t k = 0; k < x.size(); ++k) {
    std::vector<double> xs, ys;
    for (std::size_t q = 0; q < x.size(); ++q)
      if (q != k) xs.push_back(x[q]), ys.push_back(y[q]);
    loo.push_back(naive_pearson(xs, ys));
  }
  double mean = 0;
  for (double v : loo) mean += v / static_cast<double>(loo.size());
  double ss = 0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  const double n = static_cast<double>(x.size());
  EXPECT_NEAR(c.stderr_jackknife, std::sqrt((n - 1) / n * ss), 1e-10);
}

TEST(Correlation, Duplicated) {
  std::vector<SimRecord> recs;
  for (std::uint64_t k = 1; k <= 20; ++k) recs.push_back(record({k % 7 + 1, k % 7 + 1}));
  EXPECT_NEAR(nc::independence_check(recs, 1, 2).r, 1.0, 1e-12);
}

TEST(Correlation, IndependentDraws) {
  std::mt19937_64 rng(4);
  std::vector<SimRecord> recs;
  for (int k = 0; k < 5000; ++k) recs.push_back(record({draw_closed_form(rng), draw_closed_form(rng)}));
  const auto c = nc::independence_check(recs, 1, 2);
  EXPECT_LT(std::abs(c.r), 3 * c.stderr_jackknife);
}

TEST(Correlation, Errors) {
  std::vector<SimRecord> recs(9, record({1, 2}));
  EXPECT_THROW(nc::independence_check(recs, 1, 2), nc::insufficient_data);
  recs.resize(12, record({1, 2}));
  EXPECT_THROW(nc::independence_check(recs, 1, 3), std::invalid_argument);
}

TEST(Report, ClosedFormDraws) {
  std::mt19937_64 rng(5);
  std::vector<SimRecord> recs;
  for (int k = 0; k < 4000; ++k)
    recs.push_back(record({draw_closed_form(rng), draw_closed_form(rng), draw_closed_form(rng)}, k));
  const auto ref = nc::closed_form_c1(100);
  const auto rep = nc::build_report(recs, ref);
  EXPECT_LT(rep.tv, 0.02);
  EXPECT_GT(rep.tv_mc_stderr, 0.0);
  EXPECT_EQ(rep.pairwise_correlations.size(), 3u);
  EXPECT_NEAR(rep.mean_estimate, 2.25, 4 * rep.mean_stderr);
  EXPECT_EQ(rep.n_replicates, 4000u);
  EXPECT_EQ(rep.per_position.size(), 3u);
  EXPECT_TRUE(rep.pass);

  const auto j = nc::to_json(rep, {});
  EXPECT_EQ(j.at("pass"), true);
  EXPECT_EQ(j.at("thresholds").at("tv_max"), 0.02);
  EXPECT_EQ(j.at("pairwise_correlations").size(), 3u);
}

TEST(Report, FailsOnWrongReference) {
  std::vector<SimRecord> recs;
  for (int k = 0; k < 50; ++k) recs.push_back(record({1, 1}, k));
  const auto rep = nc::build_report(recs, nc::closed_form_c1(20));
  EXPECT_GT(rep.tv, 0.5);
  EXPECT_FALSE(rep.tv_pass);
  EXPECT_FALSE(rep.pass);
}

TEST(Report, BootstrapIsSeeded) {
  std::mt19937_64 rng(6);
  std::vector<SimRecord> recs;
  for (int k = 0; k < 300; ++k) recs.push_back(record({draw_closed_form(rng)}, k));
  const auto ref = nc::closed_form_c1(30);
  EXPECT_EQ(nc::bootstrap_tv_stderr(recs, ref, 50, 9), nc::bootstrap_tv_stderr(recs, ref, 50, 9));
  EXPECT_NE(nc::bootstrap_tv_stderr(recs, ref, 50, 9), nc::bootstrap_tv_stderr(recs, ref, 50, 10));
}

TEST(MeanConvergence, SmallConfigurations) {
  nc::MeanConvergenceBase base;
  base.reps = 40;
  const auto t = nc::mean_convergence_report({{50, 5}, {200, 20}}, base, 2.25);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1].species, 200u);
  for (const auto& r : t.rows) {
    EXPECT_GT(r.mean, 1.0);
    EXPECT_GT(r.sd, 0.0);
  }
  EXPECT_EQ(t.reference, 2.25);
  EXPECT_THROW(nc::mean_convergence_report({{5, 6}}, base, 2.25), std::invalid_argument);
  EXPECT_THROW(nc::mean_convergence_report({}, base, 2.25), std::invalid_argument);
}
