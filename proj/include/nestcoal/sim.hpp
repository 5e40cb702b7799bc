#pragma once

// Event-driven simulation of the nested Yule-Kingman coalescent on species
// lineage counts, plus the Yule-tree tail formulas it is checked against.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include "dist.hpp"
#include "kernel.hpp"
#include "rng.hpp"

namespace nestcoal {

namespace detail {

// Fenwick tree over nonnegative integer weights.
class FenwickTree {
 public:
  explicit FenwickTree(std::size_t n = 0) : tree_(n + 1, 0) {}

  void add(std::size_t idx, std::int64_t delta) {
    for (std::size_t k = idx + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += delta;
  }

  // Smallest idx with prefix_sum(0..idx) > target; requires target < total.
  std::size_t find(std::uint64_t target) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 < tree_.size()) step *= 2;
    for (; step > 0; step /= 2) {
      const std::size_t next = pos + step;
      if (next < tree_.size() && static_cast<std::uint64_t>(tree_[next]) <= target) {
        pos = next;
        target -= static_cast<std::uint64_t>(tree_[next]);
      }
    }
    return pos;  // 0-based index of the element
  }

 private:
  std::vector<std::int64_t> tree_;
};

inline std::uint64_t pairs(std::uint64_t n) { return n * (n - 1) / 2; }

inline std::size_t draw_index(RandomStream& rng, std::size_t n) {
  const auto k = static_cast<std::size_t>(draw_uniform(rng) * static_cast<double>(n));
  return std::min(k, n - 1);
}

}  // namespace detail

struct LineageMerger {
  std::size_t species;
};
struct SpeciesMerger {
  std::size_t dying;
  std::size_t absorbing;
};
// The last species dies and every block vanishes with it.
struct FinalDeath {
  std::size_t species;
};
using Event = std::variant<LineageMerger, SpeciesMerger, FinalDeath>;

struct ProposedEvent {
  double wait;
  Event event;
};

// Per-species lineage counts and the clock. Species keep their initial
// labels 0..s-1; dead species have count 0 and are not in alive().
class CoalescentState {
 public:
  CoalescentState(std::vector<std::uint64_t> counts, double c)
      : counts_(std::move(counts)), fenwick_(counts_.size()), c_(c) {
    if (counts_.empty()) throw std::invalid_argument("species count must be >= 1");
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("rate c must be positive");
    alive_.resize(counts_.size());
    pos_.resize(counts_.size());
    for (std::size_t k = 0; k < counts_.size(); ++k) {
      if (counts_[k] == 0) throw std::invalid_argument("lineage counts must be >= 1");
      alive_[k] = k;
      pos_[k] = k;
      fenwick_.add(k, static_cast<std::int64_t>(detail::pairs(counts_[k])));
      pair_total_ += detail::pairs(counts_[k]);
      lineages_ += counts_[k];
    }
  }

  double time() const { return time_; }
  double c() const { return c_; }
  std::size_t species() const { return alive_.size(); }
  std::uint64_t total_lineages() const { return lineages_; }
  bool finished() const { return alive_.empty(); }
  std::uint64_t count(std::size_t label) const { return counts_[label]; }
  const std::vector<std::size_t>& alive() const { return alive_; }

  // Lineage counts of living species ordered by label.
  std::vector<std::uint64_t> alive_counts() const {
    std::vector<std::size_t> labels(alive_);
    std::sort(labels.begin(), labels.end());
    std::vector<std::uint64_t> out;
    out.reserve(labels.size());
    for (auto k : labels) out.push_back(counts_[k]);
    return out;
  }

  // Total event rate: sum_k C(n_k, 2) + S c.
  double total_rate() const {
    return static_cast<double>(pair_total_) + static_cast<double>(alive_.size()) * c_;
  }

  // Draws the next event and its waiting time without changing the state.
  ProposedEvent propose(RandomStream& rng) const {
    if (finished()) throw std::logic_error("no species left");
    const double lineage_rate = static_cast<double>(pair_total_);
    const double rate = total_rate();
    const double wait = draw_exponential(rng, rate);
    const double u = draw_uniform(rng) * rate;
    if (u < lineage_rate) {
      auto target = static_cast<std::uint64_t>(u);
      target = std::min(target, pair_total_ - 1);
      return {wait, LineageMerger{fenwick_.find(target)}};
    }
    const std::size_t s = alive_.size();
    const std::size_t dying = alive_[detail::draw_index(rng, s)];
    if (s == 1) return {wait, FinalDeath{dying}};
    // uniform over the other s - 1 survivors
    std::size_t pick = detail::draw_index(rng, s - 1);
    if (pick >= pos_[dying]) ++pick;
    return {wait, SpeciesMerger{dying, alive_[pick]}};
  }

  void apply(const ProposedEvent& p) {
    time_ += p.wait;
    if (const auto* lm = std::get_if<LineageMerger>(&p.event)) {
      const std::uint64_t n = counts_[lm->species];
      set_count(lm->species, n - 1);
      lineages_ -= 1;
    } else if (const auto* sm = std::get_if<SpeciesMerger>(&p.event)) {
      const std::uint64_t moved = counts_[sm->dying];
      set_count(sm->absorbing, counts_[sm->absorbing] + moved);
      set_count(sm->dying, 0);
      remove_alive(sm->dying);
    } else {
      const auto& fd = std::get<FinalDeath>(p.event);
      lineages_ -= counts_[fd.species];
      set_count(fd.species, 0);
      remove_alive(fd.species);
    }
  }

  Event step(RandomStream& rng) {
    const ProposedEvent p = propose(rng);
    apply(p);
    return p.event;
  }

 private:
  void set_count(std::size_t k, std::uint64_t n) {
    const std::uint64_t before = detail::pairs(counts_[k] == 0 ? 1 : counts_[k]);
    const std::uint64_t after = detail::pairs(n == 0 ? 1 : n);
    fenwick_.add(k, static_cast<std::int64_t>(after) - static_cast<std::int64_t>(before));
    pair_total_ = pair_total_ - before + after;
    counts_[k] = n;
  }

  void remove_alive(std::size_t label) {
    const std::size_t at = pos_[label];
    const std::size_t last = alive_.back();
    alive_[at] = last;
    pos_[last] = at;
    alive_.pop_back();
  }

  std::vector<std::uint64_t> counts_;
  std::vector<std::size_t> alive_;
  std::vector<std::size_t> pos_;
  detail::FenwickTree fenwick_;
  std::uint64_t pair_total_ = 0;
  std::uint64_t lineages_ = 0;
  double time_ = 0.0;
  double c_;
};

// Infinite initial counts become l_max lineages.
inline CoalescentState new_state(const std::vector<Count>& initial, double c,
                                 std::size_t l_max = kDefaultDescentCap) {
  if (initial.empty()) throw std::invalid_argument("species count must be >= 1");
  if (l_max < 2) throw std::invalid_argument("l_max must be >= 2");
  std::vector<std::uint64_t> counts;
  counts.reserve(initial.size());
  for (const Count& n : initial) {
    if (!n.is_infinite() && n.value() == 0) throw std::invalid_argument("lineage counts must be >= 1");
    counts.push_back(n.is_infinite() ? l_max : n.value());
  }
  return CoalescentState(std::move(counts), c);
}

inline CoalescentState new_state(std::size_t species, Count per_species, double c,
                                 std::size_t l_max = kDefaultDescentCap) {
  if (species == 0) throw std::invalid_argument("species count must be >= 1");
  return new_state(std::vector<Count>(species, per_species), c, l_max);
}

struct SimRecord {
  std::size_t m = 0;
  std::vector<std::uint64_t> counts_at_tau_minus;  // ordered by species label
  double tau = 0.0;
  std::uint64_t replicate_id = 0;
  std::uint64_t seed = 0;
};

// Runs until the death that takes the species count from m to m - 1 and
// records the m counts just before it. For m = 1 that is the final death.
inline SimRecord run_until_species(CoalescentState& state, std::size_t m, RandomStream& rng) {
  if (m < 1 || m > state.species())
    throw std::invalid_argument("target m must lie in [1, current species count]");
  for (;;) {
    const ProposedEvent p = state.propose(rng);
    const bool death = !std::holds_alternative<LineageMerger>(p.event);
    if (death && state.species() == m) {
      SimRecord rec;
      rec.m = m;
      rec.counts_at_tau_minus = state.alive_counts();
      rec.tau = state.time() + p.wait;
      state.apply(p);
      return rec;
    }
    state.apply(p);
  }
}

// Times of every species death, first to last (the last is the final death).
inline std::vector<double> species_death_times(CoalescentState& state, RandomStream& rng) {
  std::vector<double> times;
  times.reserve(state.species());
  while (!state.finished()) {
    const Event e = state.step(rng);
    if (!std::holds_alternative<LineageMerger>(e)) times.push_back(state.time());
  }
  return times;
}

struct SimConfig {
  std::size_t species = 300;
  Count lineages = Count::finite(20);
  std::size_t target_m = 4;
  double c = 1.0;
  std::size_t l_max = kDefaultDescentCap;

  void validate() const {
    if (species == 0) throw std::invalid_argument("species must be >= 1");
    if (!lineages.is_infinite() && lineages.value() == 0)
      throw std::invalid_argument("lineages must be >= 1");
    if (target_m == 0 || target_m > species)
      throw std::invalid_argument("target-m must lie in [1, species]");
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("c must be positive");
    if (l_max < 2) throw std::invalid_argument("l-max must be >= 2");
  }
};

inline SimRecord simulate_replicate(const SimConfig& cfg, std::uint64_t seed,
                                    std::uint64_t replicate_id) {
  RandomStream rng = make_stream(seed, replicate_id);
  CoalescentState state = new_state(cfg.species, cfg.lineages, cfg.c, cfg.l_max);
  SimRecord rec = run_until_species(state, cfg.target_m, rng);
  rec.replicate_id = replicate_id;
  rec.seed = seed;
  return rec;
}

// Replicates 0..reps-1, each on its own keyed stream. Output order and
// content do not depend on the thread count.
inline std::vector<SimRecord> simulate_replicates(const SimConfig& cfg, std::size_t reps,
                                                  std::uint64_t seed, std::size_t threads = 1) {
  cfg.validate();
  std::vector<SimRecord> out(reps);
  threads = std::max<std::size_t>(1, std::min(threads, reps));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++) out[r] = simulate_replicate(cfg, seed, r);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

// (1/m) * sum of the m counts just before the m -> m-1 death, one replicate.
inline double run_average(std::size_t s, Count n, std::size_t m, double c, RandomStream& rng,
                          std::size_t l_max = kDefaultDescentCap) {
  CoalescentState state = new_state(s, n, c, l_max);
  const SimRecord rec = run_until_species(state, m, rng);
  double total = 0.0;
  for (auto v : rec.counts_at_tau_minus) total += static_cast<double>(v);
  return total / static_cast<double>(m);
}

// --- Yule-tree analytics --------------------------------------------------

// P(Gamma(d+1, c) > u) = e^{-cu} sum_{i=0}^{d} (cu)^i / i!
inline double yule_gamma_tail(std::size_t d, double c, double u) {
  if (u < 0.0) throw std::invalid_argument("u must be >= 0");
  const double x = c * u;
  double term = 1.0, sum = 1.0;
  for (std::size_t i = 1; i <= d; ++i) {
    term *= x / static_cast<double>(i);
    sum += term;
  }
  return std::exp(-x) * sum;
}

// P(a Yule population started from m exceeds s by time u)
//   = e^{-cmu} sum_{i>s} C(i-1, i-m) (1 - e^{-cu})^{i-m}.
// Terms are summed until they drop below 1e-15 of the running total.
inline double yule_count_tail(std::size_t m, std::size_t s, double c, double u) {
  if (m < 1 || s < m) throw std::invalid_argument("need 1 <= m <= s");
  if (u < 0.0) throw std::invalid_argument("u must be >= 0");
  if (u == 0.0) return 0.0;
  const double p = -std::expm1(-c * u);
  if (p >= 1.0) return 1.0;
  const double dm = static_cast<double>(m);
  // log of the i = s+1 term; the sum is kept as a log to survive e^{-cmu} underflow
  const double i0 = static_cast<double>(s + 1);
  double log_term = -c * dm * u + std::lgamma(i0) - std::lgamma(dm) - std::lgamma(i0 - dm + 1.0) +
                    (i0 - dm) * std::log(p);
  const double log_p = std::log(p);
  double log_sum = -std::numeric_limits<double>::infinity();
  constexpr std::size_t kMaxTerms = 50000000;
  constexpr double kLogRelTol = -34.538776394910684;  // log(1e-15)
  for (std::size_t k = 0; k < kMaxTerms; ++k) {
    const double hi = std::max(log_sum, log_term);
    log_sum = hi + std::log(std::exp(log_sum - hi) + std::exp(log_term - hi));
    const double i = i0 + static_cast<double>(k);
    const double log_ratio = std::log(i / (i - dm + 1.0)) + log_p;
    log_term += log_ratio;
    if (log_ratio < 0.0 && log_term < log_sum + kLogRelTol) break;
  }
  return std::min(1.0, std::exp(log_sum));
}

// Time of the (depth+1)-th split along one root-to-tip path of a Yule tree
// grown from a single branch with per-branch birth rate c.
inline double simulate_yule_split_time(std::size_t depth, double c, RandomStream& rng) {
  std::size_t branches = 1;
  std::size_t splits = 0;
  double t = 0.0;
  for (;;) {
    t += draw_exponential(rng, static_cast<double>(branches) * c);
    // the followed branch is label 0
    if (detail::draw_index(rng, branches) == 0) {
      if (++splits == depth + 1) return t;
    }
    ++branches;
  }
}

// Yule population size at time u starting from m branches.
inline std::uint64_t simulate_yule_population(std::size_t m, double c, double u, RandomStream& rng) {
  std::uint64_t n = m;
  double t = 0.0;
  for (;;) {
    t += draw_exponential(rng, static_cast<double>(n) * c);
    if (t > u) return n;
    ++n;
  }
}

}  // namespace nestcoal
