#pragma once

// Fixed C² cutoff profiles.
//   eta_bar:   1 on [-1/2, 1/2], 0 outside [-3/4, 3/4], |eta_bar'| ≤ 7.5
//   zeta_bar:  1 on [-1/4, 1/4], 0 outside [-1/2, 1/2], |zeta_bar'| ≤ 7.5
//   theta_bar: odd, r on [-1/2, 1/2], ±1 for |r| ≥ 1

#include <cmath>

namespace mslab::profiles {

struct Value {
  double f = 0.0;   ///< value
  double df = 0.0;  ///< first derivative
};

namespace detail {

// 1 - (6x⁵ - 15x⁴ + 10x³) = (1-x)³(1 + 3x + 6x²) on [0, 1], clamped outside.
inline Value falloff(double x) {
  if (x <= 0.0) return {1.0, 0.0};
  if (x >= 1.0) return {0.0, 0.0};
  const double y = 1.0 - x;
  return {y * y * y * (1.0 + 3.0 * x + 6.0 * x * x), -30.0 * x * x * y * y};
}

// Plateau of half-width a, falloff over width b.
inline Value plateau(double r, double a, double b) {
  const double sg = r < 0 ? -1.0 : 1.0;
  const Value v = falloff((std::abs(r) - a) / b);
  return {v.f, sg * v.df / b};
}

}  // namespace detail

inline Value eta_bar(double r) { return detail::plateau(r, 0.5, 0.25); }

inline Value zeta_bar(double r) { return detail::plateau(r, 0.25, 0.25); }

inline Value theta_bar(double r) {
  const double a = std::abs(r), sg = r < 0 ? -1.0 : 1.0;
  if (a <= 0.5) return {r, 1.0};
  if (a >= 1.0) return {sg, 0.0};
  // p(τ) with τ = 2(a - 1/2): p(0) = 1/2, p'(0) = 1/2, p''(0) = 0, p(1) = 1, p'(1) = p''(1) = 0
  const double t = 2.0 * (a - 0.5), t2 = t * t, t3 = t2 * t;
  const double p = 0.5 + 0.5 * t + 2.0 * t3 - 3.5 * t3 * t + 1.5 * t3 * t2;
  const double dp = 0.5 + 6.0 * t2 - 14.0 * t3 + 7.5 * t3 * t;
  return {sg * p, 2.0 * dp};
}

}  // namespace mslab::profiles
