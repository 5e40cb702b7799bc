#pragma once

// Probability generating functions of truncated PMFs and residuals of the
// ODE characterizations satisfied by the fixed point.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "dist.hpp"

namespace nestcoal {

// R(x) = sum_{i>=1} coeffs[i-1] x^i. Overflow mass is dropped.
class PGFSeries {
 public:
  explicit PGFSeries(const TruncatedPMF& pmf) : coeffs_(pmf.probs().begin(), pmf.probs().end()) {}

  explicit PGFSeries(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    double total = 0.0;
    for (double v : coeffs_) {
      if (!(v >= 0.0)) throw std::invalid_argument("PGF coefficients must be nonnegative");
      total += v;
    }
    if (total > 1.0 + kNormTol) throw std::invalid_argument("PGF coefficients sum above 1");
  }

  std::span<const double> coeffs() const { return coeffs_; }

  // Derivative of the given order (0, 1 or 2) from the coefficients.
  double eval(double x, int order = 0) const {
    if (order < 0 || order > 2) throw std::invalid_argument("derivative order must be 0, 1 or 2");
    // Horner over i = M..lowest of a_i x^(i - lowest), a_i = coeff * i (i-1) ...
    const std::size_t lowest = order == 2 ? 2 : 1;
    double acc = 0.0;
    for (std::size_t i = coeffs_.size(); i >= lowest; --i) {
      const double di = static_cast<double>(i);
      double a = coeffs_[i - 1];
      if (order >= 1) a *= di;
      if (order == 2) a *= di - 1.0;
      acc = acc * x + a;
    }
    return order == 0 ? acc * x : acc;
  }

 private:
  std::vector<double> coeffs_;
};

inline double pgf_eval(const PGFSeries& s, double x, int order = 0) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("x must lie in [0, 1]");
  return s.eval(x, order);
}

// |R - R^2 - x(1-x) R'' / (2c)|
inline double ode_residual(const PGFSeries& s, double c, double x) {
  if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("x must lie in (0, 1)");
  const double r = s.eval(x, 0);
  const double r2 = s.eval(x, 2);
  return std::abs(r - r * r - x * (1.0 - x) * r2 / (2.0 * c));
}

struct GValues {
  double g, g1, g2;
};

// g = -log(1 - R) and its first two derivatives.
inline GValues g_values(const PGFSeries& s, double x) {
  const double r = s.eval(x, 0);
  if (!(r < 1.0)) throw std::domain_error("R(x) >= 1, g = -log(1 - R) is not finite");
  const double r1 = s.eval(x, 1);
  const double r2 = s.eval(x, 2);
  const double q = 1.0 - r;
  return {-std::log1p(-r), r1 / q, (r1 * r1) / (q * q) + r2 / q};
}

// |g'' - (g')^2 - 2c (1 - e^{-g}) / (x (1 - x))|
inline double g_residual(const PGFSeries& s, double c, double x) {
  if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("x must lie in (0, 1)");
  const GValues v = g_values(s, x);
  // 1 - e^{-g} = R
  const double one_minus_exp = -std::expm1(-v.g);
  return std::abs(v.g2 - v.g1 * v.g1 - 2.0 * c * one_minus_exp / (x * (1.0 - x)));
}

}  // namespace nestcoal
