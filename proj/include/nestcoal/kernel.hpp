#pragma once

// Law of K_j(Y): the number of Kingman lineages left at an independent
// Exp(c) time Y when starting from j lineages (j may be infinite), and
// exact samplers for the block-counting process.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dist.hpp"
#include "rng.hpp"

namespace nestcoal {

// Pairwise coalescence rate with l lineages, C(l, 2).
inline constexpr double pair_rate(std::size_t l) {
  return 0.5 * static_cast<double>(l) * static_cast<double>(l - 1);
}

namespace detail {

inline void check_rate(double c) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw std::invalid_argument("rate c must be positive and finite");
}

}  // namespace detail

// Full row P(K_j(Y) = i), i = 1..j, returned with row[i - 1] = P(i).
//
// Built downward from P(j) = c / (C(j,2) + c) with
//   P(i) = P(i+1) * C(i+1,2) / (C(i,2) + c),   i >= 2,
//   P(1) = P(2) / c.
inline std::vector<double> kernel_row(std::size_t j, double c) {
  detail::check_rate(c);
  if (j == 0) throw std::invalid_argument("lineage count j must be >= 1");
  std::vector<double> row(j, 0.0);
  if (j == 1) {
    row[0] = 1.0;
    return row;
  }
  row[j - 1] = c / (pair_rate(j) + c);
  for (std::size_t i = j - 1; i >= 2; --i) row[i - 1] = row[i] * pair_rate(i + 1) / (pair_rate(i) + c);
  row[0] = row[1] / c;
  return row;
}

struct InfiniteRow {
  std::vector<double> probs;  // probs[i - 1] = P(K_inf(Y) = i), i = 1..max_i
  double residual;            // 1 - sum(probs) = P(K_inf(Y) > max_i)
  std::size_t cutoff;         // last l summed explicitly in the log-product
};

// P(K_inf(Y) = i) for i = 1..max_i.
//
// With Q(i) = prod_{l>i} C(l,2)/(C(l,2)+c) = P(K_inf(Y) <= i), the entries are
// P(1) = Q(1) and P(i) = c/(C(i,2)+c) * Q(i). The log-product sums
// log(1 + 2c/(l(l-1))) exactly for l <= L and replaces the remainder with its
// first-order term sum_{l>L} 2c/(l(l-1)) = 2c/L. The error of that
// replacement is at most (2c^2/3)/(L-1)^3, and L is the smallest value
// pushing that bound below tol.
inline InfiniteRow kernel_row_infinite(double c, std::size_t max_i, double tol) {
  detail::check_rate(c);
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_i == 0) throw std::invalid_argument("max_i must be >= 1");
  const double cube = std::cbrt(2.0 * c * c / (3.0 * tol));
  std::size_t cutoff = static_cast<std::size_t>(std::ceil(cube)) + 2;
  cutoff = std::max(cutoff, max_i + 1);

  // log_q = sum_{l = i+1}^{cutoff} log1p(2c / (l(l-1))) + 2c / cutoff, walked downward
  double log_q = 2.0 * c / static_cast<double>(cutoff);
  for (std::size_t l = cutoff; l > max_i; --l)
    log_q += std::log1p(c / pair_rate(l));

  InfiniteRow out{std::vector<double>(max_i, 0.0), 0.0, cutoff};
  for (std::size_t i = max_i; i >= 1; --i) {
    const double q = std::exp(-log_q);
    out.probs[i - 1] = (i == 1) ? q : c / (pair_rate(i) + c) * q;
    if (i >= 2) log_q += std::log1p(c / pair_rate(i));
  }
  double finite = 0.0;
  for (std::size_t i = max_i; i >= 1; --i) finite += out.probs[i - 1];
  out.residual = std::max(0.0, 1.0 - finite);
  return out;
}

// P(K_j(Y) = i); j may be infinite.
inline double kernel_entry(Count j, std::size_t i, double c, double tol = 1e-12) {
  if (i < 1) throw std::invalid_argument("lineage count i must be >= 1");
  if (j.is_infinite()) return kernel_row_infinite(c, i, tol).probs[i - 1];
  if (i > j.value())
    throw std::invalid_argument("i = " + std::to_string(i) + " exceeds j = " + j.str());
  return kernel_row(j.value(), c)[i - 1];
}

// Precomputed rows j = 1..2M and the j = infinity row, as consumed by the
// fixed-point map on M-truncated distributions. Immutable once built.
class KernelTable {
 public:
  double c() const { return c_; }
  std::size_t trunc() const { return trunc_; }
  std::size_t max_j() const { return 2 * trunc_; }
  double product_tol() const { return product_tol_; }

  // Row j as a span over i = 1..j (index i - 1).
  std::span<const double> row(std::size_t j) const {
    return {flat_.data() + offset(j), j};
  }
  double operator()(std::size_t j, std::size_t i) const { return flat_[offset(j) + i - 1]; }

  const InfiniteRow& infinity_row() const { return inf_; }

  // Mass each row places strictly above the truncation M.
  double row_tail_above_trunc(std::size_t j) const { return tails_[j - 1]; }
  double infinity_tail_above_trunc() const { return inf_tail_; }

  friend KernelTable build_table(double c, std::size_t trunc, double tol);

 private:
  static std::size_t offset(std::size_t j) { return (j - 1) * j / 2; }

  double c_ = 0.0;
  std::size_t trunc_ = 0;
  double product_tol_ = 0.0;
  std::vector<double> flat_;
  std::vector<double> tails_;
  InfiniteRow inf_;
  double inf_tail_ = 0.0;
};

struct TableDiagnostics {
  double max_row_sum_error = 0.0;     // over finite rows and the infinity row
  double max_dominance_violation = 0.0;  // largest decrease of a tail sum in j
};

// Row sums and j-monotone tail dominance (including infinity over every finite row).
inline TableDiagnostics diagnose(const KernelTable& t) {
  TableDiagnostics d;
  const std::size_t jmax = t.max_j();
  std::vector<double> prev_tail;  // prev_tail[i - 1] = P(K_{j-1}(Y) >= i)
  for (std::size_t j = 1; j <= jmax; ++j) {
    const auto r = t.row(j);
    std::vector<double> tail(j + 1, 0.0);
    for (std::size_t i = j; i >= 1; --i) tail[i - 1] = tail[i] + r[i - 1];
    d.max_row_sum_error = std::max(d.max_row_sum_error, std::abs(tail[0] - 1.0));
    for (std::size_t i = 1; i < j && i <= prev_tail.size(); ++i)
      d.max_dominance_violation = std::max(d.max_dominance_violation, prev_tail[i - 1] - tail[i - 1]);
    prev_tail = std::move(tail);
  }
  const auto& inf = t.infinity_row();
  std::vector<double> inf_tail(inf.probs.size() + 1, inf.residual);
  for (std::size_t i = inf.probs.size(); i >= 1; --i) inf_tail[i - 1] = inf_tail[i] + inf.probs[i - 1];
  d.max_row_sum_error = std::max(d.max_row_sum_error, std::abs(inf_tail[0] - 1.0));
  for (std::size_t i = 1; i <= jmax; ++i)
    d.max_dominance_violation = std::max(d.max_dominance_violation, prev_tail[i - 1] - inf_tail[i - 1]);
  return d;
}

inline KernelTable build_table(double c, std::size_t trunc, double tol = 1e-12) {
  detail::check_rate(c);
  if (trunc == 0) throw std::invalid_argument("trunc_M must be >= 1");
  KernelTable t;
  t.c_ = c;
  t.trunc_ = trunc;
  t.product_tol_ = tol;
  const std::size_t jmax = 2 * trunc;
  t.flat_.reserve(jmax * (jmax + 1) / 2);
  t.tails_.assign(jmax, 0.0);
  for (std::size_t j = 1; j <= jmax; ++j) {
    const auto r = kernel_row(j, c);
    double tail = 0.0;
    for (std::size_t i = j; i > trunc; --i) tail += r[i - 1];
    t.tails_[j - 1] = tail;
    t.flat_.insert(t.flat_.end(), r.begin(), r.end());
  }
  t.inf_ = kernel_row_infinite(c, jmax, tol);
  double inf_tail = t.inf_.residual;
  for (std::size_t i = jmax; i > trunc; --i) inf_tail += t.inf_.probs[i - 1];
  t.inf_tail_ = inf_tail;

  const auto d = diagnose(t);
  if (d.max_row_sum_error > kNormTol || d.max_dominance_violation > kNormTol)
    throw std::runtime_error("kernel table invariants violated (c = " + std::to_string(c) + ")");
  return t;
}

inline constexpr std::size_t kDefaultDescentCap = 10000;

// K_n(t) by accumulating Exp(C(l,2)) holding times downward from n. An
// infinite n starts from l_max lineages instead, which under-counts the
// descent time by a bias of expectation at most 2 / l_max.
inline std::size_t sample_count_at(Count n, double t, RandomStream& rng,
                                   std::size_t l_max = kDefaultDescentCap) {
  if (t < 0.0) throw std::invalid_argument("time t must be >= 0");
  std::size_t k = n.is_infinite() ? l_max : n.value();
  if (k == 0) throw std::invalid_argument("initial count must be >= 1");
  if (n.is_infinite() && l_max < 2) throw std::invalid_argument("l_max must be >= 2");
  double elapsed = 0.0;
  while (k > 1) {
    elapsed += draw_exponential(rng, pair_rate(k));
    if (elapsed > t) break;
    --k;
  }
  return k;
}

}  // namespace nestcoal
