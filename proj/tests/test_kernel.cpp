#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nestcoal/kernel.hpp"
#include "nestcoal/stats.hpp"

namespace nc = nestcoal;
using nc::Count;

namespace {

// P(K_j(Y) = i) as the raw product: c/(C(i,2)+c) * prod_{l=i+1}^{j} C(l,2)/(C(l,2)+c),
// with the leading factor dropped for i = 1.
long double direct_entry(std::size_t j, std::size_t i, long double c) {
  auto binom2 = [](std::size_t l) { return static_cast<long double>(l) * (l - 1) / 2; };
  long double p = (i == 1) ? 1.0L : c / (binom2(i) + c);
  for (std::size_t l = i + 1; l <= j; ++l) p *= binom2(l) / (binom2(l) + c);
  return p;
}

// Q(i) = prod_{l>i} C(l,2)/(C(l,2)+c), brute force up to L with the first-order
// remainder exp(-2c/L).
long double brute_q(std::size_t i, long double c, std::size_t L) {
  long double log_q = 0.0L;
  for (std::size_t l = L; l > i; --l) log_q += std::log1p(2.0L * c / (static_cast<long double>(l) * (l - 1)));
  return std::exp(-log_q - 2.0L * c / L);
}

}  // namespace

TEST(KernelEntry, SmallRows) {
  for (double c : {0.3, 1.0, 4.0}) EXPECT_EQ(nc::kernel_entry(Count::finite(1), 1, c), 1.0);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::finite(2), 2, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::finite(2), 1, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::finite(3), 3, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::finite(3), 2, 1.0), 0.375);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::finite(3), 1, 1.0), 0.375);
}

TEST(KernelEntry, Errors) {
  EXPECT_THROW(nc::kernel_entry(Count::finite(3), 4, 1.0), std::invalid_argument);
  EXPECT_THROW(nc::kernel_entry(Count::finite(3), 0, 1.0), std::invalid_argument);
  EXPECT_THROW(nc::kernel_row(3, -1.0), std::invalid_argument);
  EXPECT_THROW(nc::kernel_row(0, 1.0), std::invalid_argument);
}

TEST(KernelRow, RecurrenceMatchesDirectProducts) {
  for (double c : {0.1, 0.5, 1.0, 2.0, 7.5}) {
    for (std::size_t j = 1; j <= 50; ++j) {
      const auto row = nc::kernel_row(j, c);
      for (std::size_t i = 1; i <= j; ++i) {
        const double want = static_cast<double>(direct_entry(j, i, c));
        EXPECT_NEAR(row[i - 1], want, 1e-12 * want) << "c=" << c << " j=" << j << " i=" << i;
      }
    }
  }
}

TEST(KernelRow, FirstEntryIsSecondOverC) {
  for (double c : {0.25, 1.0, 3.0})
    for (std::size_t j = 2; j <= 200; j += 7) {
      const auto row = nc::kernel_row(j, c);
      EXPECT_NEAR(row[0], row[1] / c, 1e-15);
    }
}

TEST(InfiniteRow, NormalizedWithTailResidual) {
  for (double c : {0.5, 1.0, 2.0}) {
    const auto row = nc::kernel_row_infinite(c, 40, 1e-12);
    double s = row.residual;
    for (double p : row.probs) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
    // the residual is P(K_inf(Y) > max_i), bounded by 2c / max_i
    EXPECT_GT(row.residual, 0.0);
    EXPECT_LE(row.residual, 2.0 * c / 40.0);
  }
}

TEST(InfiniteRow, TailBound) {
  for (double c : {0.5, 1.0, 2.0}) {
    const auto row = nc::kernel_row_infinite(c, 200, 1e-12);
    double tail = row.residual;
    for (std::size_t i = 200; i >= 2; --i) {
      tail += row.probs[i - 1];
      EXPECT_LE(tail, 2.0 * c / static_cast<double>(i - 1) + 1e-15) << "c=" << c << " i=" << i;
    }
  }
}

TEST(InfiniteRow, MatchesBruteForceProduct) {
  for (double c : {0.5, 1.0, 2.0}) {
    const auto row = nc::kernel_row_infinite(c, 30, 1e-12);
    for (std::size_t i = 1; i <= 30; ++i) {
      const long double q = brute_q(i, c, 200000);
      const long double want = i == 1 ? q : c / (static_cast<long double>(i) * (i - 1) / 2 + c) * q;
      EXPECT_NEAR(row.probs[i - 1], static_cast<double>(want), 1e-12) << "c=" << c << " i=" << i;
    }
  }
}

TEST(InfiniteRow, MatchesGammaClosedForm) {
  // For c < 1/8, l(l-1) + 2c = (l-a)(l-b) with real a, b and
  // Q(i) = Gamma(i+1-a) Gamma(i+1-b) / (Gamma(i+1) Gamma(i)).
  for (double c : {0.0625, 0.1}) {
    const double d = std::sqrt(1.0 - 8.0 * c);
    const double a = 0.5 * (1.0 + d), b = 0.5 * (1.0 - d);
    const auto row = nc::kernel_row_infinite(c, 25, 1e-13);
    for (std::size_t i = 1; i <= 25; ++i) {
      const double di = static_cast<double>(i);
      const double q = std::exp(std::lgamma(di + 1 - a) + std::lgamma(di + 1 - b) - std::lgamma(di + 1) -
                                std::lgamma(di));
      const double want = i == 1 ? q : c / (di * (di - 1) / 2 + c) * q;
      EXPECT_NEAR(row.probs[i - 1], want, 1e-12) << "c=" << c << " i=" << i;
    }
  }
}

TEST(InfiniteRow, LimitOfFiniteRows) {
  const auto inf = nc::kernel_row_infinite(1.0, 5, 1e-12);
  const auto big = nc::kernel_row(100000, 1.0);
  for (std::size_t i = 1; i <= 5; ++i) EXPECT_NEAR(big[i - 1], inf.probs[i - 1], 2.0 / 100000);
  EXPECT_DOUBLE_EQ(nc::kernel_entry(Count::infinite(), 3, 1.0), inf.probs[2]);
}

TEST(Table, SmallExample) {
  const auto t = nc::build_table(1.0, 2, 1e-12);
  EXPECT_EQ(t.max_j(), 4u);
  EXPECT_DOUBLE_EQ(t(2, 1), 0.5);
  EXPECT_DOUBLE_EQ(t(2, 2), 0.5);
  EXPECT_EQ(t(1, 1), 1.0);
}

TEST(Table, Invariants) {
  for (double c : {0.5, 1.0, 2.0}) {
    const auto t = nc::build_table(c, 200);
    const auto d = nc::diagnose(t);
    EXPECT_LE(d.max_row_sum_error, 1e-12);
    EXPECT_LE(d.max_dominance_violation, 1e-12);
    for (std::size_t j = 1; j <= t.max_j(); ++j) {
      double s = 0.0;
      for (double p : t.row(j)) s += p;
      ASSERT_NEAR(s, 1.0, 1e-12) << "j=" << j;
    }
    // brute-force adjacent dominance: P(K_j >= i) nondecreasing in j
    for (std::size_t j = 2; j <= t.max_j(); ++j) {
      double tj = 0.0, tprev = 0.0;
      for (std::size_t i = j; i >= 1; --i) {
        tj += t(j, i);
        if (i <= j - 1) tprev += t(j - 1, i);
        ASSERT_GE(tj, tprev - 1e-12) << "j=" << j << " i=" << i;
      }
    }
  }
}

TEST(Table, TailsAboveTruncation) {
  const auto t = nc::build_table(1.0, 10);
  for (std::size_t j = 1; j <= 20; ++j) {
    double want = 0.0;
    for (std::size_t i = 11; i <= j; ++i) want += t(j, i);
    EXPECT_NEAR(t.row_tail_above_trunc(j), want, 1e-15);
  }
  double inf_tail = t.infinity_row().residual;
  for (std::size_t i = 11; i <= 20; ++i) inf_tail += t.infinity_row().probs[i - 1];
  EXPECT_NEAR(t.infinity_tail_above_trunc(), inf_tail, 1e-15);
}

TEST(Sampler, Trivial) {
  auto rng = nc::make_stream(1);
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(nc::sample_count_at(Count::finite(1), 5.0, rng), 1u);
    EXPECT_EQ(nc::sample_count_at(Count::finite(7), 0.0, rng), 7u);
  }
  EXPECT_THROW(nc::sample_count_at(Count::finite(3), -1.0, rng), std::invalid_argument);
}

TEST(Sampler, FiveLineagesAtExponentialTimeChiSquare) {
  auto rng = nc::make_stream(2024);
  nc::Histogram h(5);
  for (int k = 0; k < 1000000; ++k) {
    const double y = nc::draw_exponential(rng, 1.0);
    h.add(nc::sample_count_at(Count::finite(5), y, rng));
  }
  const auto row = nc::kernel_row(5, 1.0);
  const auto ref = nc::TruncatedPMF::from_probs(row, 0.0);
  EXPECT_GT(nc::chi_square_gof(h, ref).p_value, 0.001);
}

TEST(Sampler, DescentFromCapAtExponentialTime) {
  // With an infinite start the sampler draws K_L(Y), L = l_max, which is
  // exactly row L; row L and the infinity row differ by at most 2c / L.
  constexpr std::size_t L = 100;
  auto rng = nc::make_stream(99);
  const int n = 1000000;
  int ones = 0;
  for (int k = 0; k < n; ++k) {
    const double y = nc::draw_exponential(rng, 1.0);
    ones += nc::sample_count_at(Count::infinite(), y, rng, L) == 1;
  }
  const double p_hat = static_cast<double>(ones) / n;
  const double p_cap = nc::kernel_row(L, 1.0)[0];
  const double se = std::sqrt(p_cap * (1 - p_cap) / n);
  EXPECT_NEAR(p_hat, p_cap, 4 * se);
  const double p_inf = nc::kernel_row_infinite(1.0, 1, 1e-12).probs[0];
  EXPECT_LE(std::abs(p_cap - p_inf), 2.0 / L);
  EXPECT_NEAR(p_hat, p_inf, 4 * se + 2.0 / L);
}
