#pragma once

// Finite-support distributions on {1, 2, ...} with an explicit overflow
// bucket, plus the order / distance / moment algebra used by the solver.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace nestcoal {

// Raised when a support value lies outside {1..M} (or is 0).
struct invalid_support : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when two objects disagree on their truncation level.
struct dimension_mismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when a PMF would violate nonnegativity or normalization.
struct invalid_distribution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kNormTol = 1e-12;
inline constexpr double kOrderTol = 1e-12;

// A lineage/support count that may be infinite.
class Count {
 public:
  static constexpr Count finite(std::size_t n) { return Count(n, false); }
  static constexpr Count infinite() { return Count(0, true); }

  constexpr bool is_infinite() const { return inf_; }
  constexpr std::size_t value() const { return n_; }

  // Accepts a decimal integer or "inf" / "infinity" (any case).
  static Count parse(const std::string& text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "inf" || lower == "infinity") return infinite();
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(text, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("expected an integer or 'inf', got '" + text + "'");
    }
    if (used != text.size() || text.front() == '-')
      throw std::invalid_argument("expected an integer or 'inf', got '" + text + "'");
    return finite(static_cast<std::size_t>(v));
  }

  std::string str() const { return inf_ ? "inf" : std::to_string(n_); }

  friend constexpr bool operator==(Count, Count) = default;

 private:
  constexpr Count(std::size_t n, bool inf) : n_(n), inf_(inf) {}
  std::size_t n_;
  bool inf_;
};

enum class OverflowMode { AtTruncation, AtInfinity };

inline const char* to_string(OverflowMode m) {
  return m == OverflowMode::AtInfinity ? "at_infinity" : "at_truncation";
}

inline OverflowMode overflow_mode_from_string(const std::string& s) {
  if (s == "at_infinity") return OverflowMode::AtInfinity;
  if (s == "at_truncation") return OverflowMode::AtTruncation;
  throw std::invalid_argument("overflow_mode: expected 'at_truncation' or 'at_infinity', got '" +
                              s + "'");
}

// Probability mass function on {1..M} plus the mass sitting above M.
//
// AtTruncation reads the overflow as "somewhere above M, finite" and gives
// lower-bound semantics; AtInfinity places it at infinity and gives
// upper-bound semantics. Instances are immutable.
class TruncatedPMF {
 public:
  // probs[k] is the mass at support value k + 1.
  static TruncatedPMF from_probs(std::vector<double> probs, double overflow_mass,
                                 OverflowMode mode = OverflowMode::AtTruncation) {
    if (probs.empty()) throw invalid_distribution("trunc_M must be >= 1");
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (!(probs[k] >= 0.0) || !std::isfinite(probs[k]))
        throw invalid_distribution("probs[" + std::to_string(k + 1) + "] is negative or not finite");
    }
    if (!(overflow_mass >= 0.0) || !std::isfinite(overflow_mass))
      throw invalid_distribution("overflow_mass is negative or not finite");
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0) + overflow_mass;
    if (std::abs(total - 1.0) > kNormTol)
      {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", total - 1.0);
      throw invalid_distribution(std::string("total mass differs from 1 by ") + buf);
    }
    return TruncatedPMF(std::move(probs), overflow_mass, mode);
  }

  // Sets overflow to whatever mass the finite part is missing (clamped at 0).
  static TruncatedPMF with_implied_overflow(std::vector<double> probs,
                                            OverflowMode mode = OverflowMode::AtTruncation) {
    const double finite = std::accumulate(probs.begin(), probs.end(), 0.0);
    return from_probs(std::move(probs), std::max(0.0, 1.0 - finite), mode);
  }

  std::size_t trunc() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  double overflow() const { return overflow_; }
  OverflowMode mode() const { return mode_; }

  // Mass at support value i (1-based); 0 outside {1..M}.
  double operator[](std::size_t i) const {
    return (i >= 1 && i <= probs_.size()) ? probs_[i - 1] : 0.0;
  }

  double finite_mass() const { return std::accumulate(probs_.begin(), probs_.end(), 0.0); }

  // P(X >= i) including overflow, for 1 <= i <= M + 1.
  double tail(std::size_t i) const {
    double s = overflow_;
    for (std::size_t k = probs_.size(); k >= std::max<std::size_t>(i, 1); --k) s += probs_[k - 1];
    return s;
  }

 private:
  TruncatedPMF(std::vector<double> probs, double overflow, OverflowMode mode)
      : probs_(std::move(probs)), overflow_(overflow), mode_(mode) {}

  std::vector<double> probs_;
  double overflow_;
  OverflowMode mode_;
};

inline TruncatedPMF pmf_delta(Count k, std::size_t trunc) {
  if (trunc == 0) throw invalid_support("trunc_M must be >= 1");
  if (k.is_infinite())
    return TruncatedPMF::from_probs(std::vector<double>(trunc, 0.0), 1.0, OverflowMode::AtInfinity);
  if (k.value() == 0 || k.value() > trunc)
    throw invalid_support("support value " + k.str() + " outside {1.." + std::to_string(trunc) + "}");
  std::vector<double> p(trunc, 0.0);
  p[k.value() - 1] = 1.0;
  return TruncatedPMF::from_probs(std::move(p), 0.0);
}

inline void require_same_trunc(const TruncatedPMF& a, const TruncatedPMF& b) {
  if (a.trunc() != b.trunc())
    throw dimension_mismatch("trunc_M mismatch: " + std::to_string(a.trunc()) + " vs " +
                             std::to_string(b.trunc()));
}

// Distribution of the sum of independent draws from a and b, truncated at 2M.
// Any mass involving an overflow operand lands in the result's overflow.
inline TruncatedPMF convolve(const TruncatedPMF& a, const TruncatedPMF& b) {
  require_same_trunc(a, b);
  const std::size_t m = a.trunc();
  std::vector<double> out(2 * m, 0.0);
  const auto pa = a.probs();
  const auto pb = b.probs();
  // out[s - 1] accumulates mass at s = (j + 1) + (k + 1)
  for (std::size_t j = 0; j < m; ++j) {
    const double aj = pa[j];
    if (aj == 0.0) continue;
    double* dst = out.data() + j + 1;
    for (std::size_t k = 0; k < m; ++k) dst[k] += aj * pb[k];
  }
  const double over = a.overflow() + b.overflow() - a.overflow() * b.overflow();
  const OverflowMode mode =
      (a.mode() == OverflowMode::AtInfinity || b.mode() == OverflowMode::AtInfinity)
          ? OverflowMode::AtInfinity
          : OverflowMode::AtTruncation;
  return TruncatedPMF::from_probs(std::move(out), over, mode);
}

enum class StochasticOrder { Dominates, DominatedBy, Equal, Incomparable };

inline const char* to_string(StochasticOrder r) {
  switch (r) {
    case StochasticOrder::Dominates: return "Dominates";
    case StochasticOrder::DominatedBy: return "DominatedBy";
    case StochasticOrder::Equal: return "Equal";
    case StochasticOrder::Incomparable: return "Incomparable";
  }
  return "?";
}

struct StochasticOrderResult {
  StochasticOrder relation;
  // Largest CDF(b) - CDF(a) and CDF(a) - CDF(b) seen over all x.
  double max_a_above;
  double max_b_above;
};

// Relation of a to b under the usual stochastic order. Dominates means a
// stochastically dominates b (CDF(a) <= CDF(b) everywhere). CDF differences
// within kOrderTol are treated as ties. Overflow mass counts as mass above M,
// with AtInfinity overflow sitting strictly above AtTruncation overflow.
inline StochasticOrderResult compare_stochastic(const TruncatedPMF& a, const TruncatedPMF& b) {
  require_same_trunc(a, b);
  double ca = 0.0, cb = 0.0;
  double a_above = 0.0, b_above = 0.0;
  auto visit = [&](double fa, double fb) {
    a_above = std::max(a_above, fb - fa);
    b_above = std::max(b_above, fa - fb);
  };
  for (std::size_t i = 1; i <= a.trunc(); ++i) {
    ca += a[i];
    cb += b[i];
    visit(ca, cb);
  }
  // CDF evaluated at an arbitrarily large finite point.
  const double fa = ca + (a.mode() == OverflowMode::AtTruncation ? a.overflow() : 0.0);
  const double fb = cb + (b.mode() == OverflowMode::AtTruncation ? b.overflow() : 0.0);
  visit(fa, fb);

  const bool a_up = a_above > kOrderTol;
  const bool b_up = b_above > kOrderTol;
  StochasticOrder rel = StochasticOrder::Equal;
  if (a_up && b_up) rel = StochasticOrder::Incomparable;
  else if (a_up) rel = StochasticOrder::Dominates;
  else if (b_up) rel = StochasticOrder::DominatedBy;
  return {rel, a_above, b_above};
}

// a precedes-or-equals b in the stochastic order (within kOrderTol).
inline bool stochastically_le(const TruncatedPMF& a, const TruncatedPMF& b) {
  const auto r = compare_stochastic(a, b).relation;
  return r == StochasticOrder::DominatedBy || r == StochasticOrder::Equal;
}

// Half the L1 distance. Overflow buckets with different modes are disjoint atoms.
inline double total_variation(const TruncatedPMF& a, const TruncatedPMF& b) {
  require_same_trunc(a, b);
  double s = 0.0;
  const auto pa = a.probs();
  const auto pb = b.probs();
  for (std::size_t k = 0; k < pa.size(); ++k) s += std::abs(pa[k] - pb[k]);
  if (a.mode() == b.mode()) s += std::abs(a.overflow() - b.overflow());
  else s += a.overflow() + b.overflow();
  return std::min(1.0, 0.5 * s);
}

struct MeanResult {
  enum class Kind { Exact, LowerBound, Infinite };
  double value;
  Kind kind;

  bool is_infinite() const { return kind == Kind::Infinite; }
};

inline MeanResult mean(const TruncatedPMF& a) {
  double s = 0.0;
  const auto p = a.probs();
  for (std::size_t k = 0; k < p.size(); ++k) s += static_cast<double>(k + 1) * p[k];
  if (a.overflow() == 0.0) return {s, MeanResult::Kind::Exact};
  if (a.mode() == OverflowMode::AtInfinity)
    return {std::numeric_limits<double>::infinity(), MeanResult::Kind::Infinite};
  return {s + static_cast<double>(a.trunc()) * a.overflow(), MeanResult::Kind::LowerBound};
}

// --- JSON -----------------------------------------------------------------

inline nlohmann::json to_json(const TruncatedPMF& p) {
  return nlohmann::json{{"trunc_M", p.trunc()},
                        {"probs", std::vector<double>(p.probs().begin(), p.probs().end())},
                        {"overflow_mass", p.overflow()},
                        {"overflow_mode", to_string(p.mode())}};
}

// Parses the schema written by to_json; errors name the offending field.
inline TruncatedPMF pmf_from_json(const nlohmann::json& j) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(name))
      throw std::invalid_argument(std::string("missing field '") + name + "'");
    return j.at(name);
  };
  const auto& jm = field("trunc_M");
  if (!jm.is_number_integer() || jm.get<long long>() < 1)
    throw std::invalid_argument("field 'trunc_M' must be a positive integer");
  const auto& jp = field("probs");
  if (!jp.is_array()) throw std::invalid_argument("field 'probs' must be an array");
  std::vector<double> probs;
  probs.reserve(jp.size());
  for (const auto& v : jp) {
    if (!v.is_number()) throw std::invalid_argument("field 'probs' must contain numbers");
    probs.push_back(v.get<double>());
  }
  if (probs.size() != jm.get<std::size_t>())
    throw std::invalid_argument("field 'probs' length does not match 'trunc_M'");
  const auto& jo = field("overflow_mass");
  if (!jo.is_number()) throw std::invalid_argument("field 'overflow_mass' must be a number");
  const auto& jmode = field("overflow_mode");
  if (!jmode.is_string()) throw std::invalid_argument("field 'overflow_mode' must be a string");
  try {
    return TruncatedPMF::from_probs(std::move(probs), jo.get<double>(),
                                    overflow_mode_from_string(jmode.get<std::string>()));
  } catch (const invalid_distribution& e) {
    throw std::invalid_argument(std::string("field 'probs'/'overflow_mass': ") + e.what());
  }
}

}  // namespace nestcoal
