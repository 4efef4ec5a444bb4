#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslab {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double pi = std::numbers::pi;

/// Values aligned with the nodes of one interface curve.
using CurveScalarField = std::vector<double>;
/// One CurveScalarField per component of a phase.
using PhaseScalarField = std::vector<CurveScalarField>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate or otherwise invalid interface geometry.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Too few nodes on a component for the requested operation.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// The boundary-integral system is (numerically) singular.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failure or an unrecoverable time step.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Fields defined on incompatible discretizations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Rotation by +90 degrees. For a counter-clockwise tangent this is the
/// inward normal.
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

/// Gauss-Legendre rule on [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule make_gauss_legendre(int n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

template <int N>
const GaussRule& gauss_legendre() {
  static const GaussRule rule = make_gauss_legendre(N);
  return rule;
}

/// Integrate f over [a, b] with an N-point Gauss-Legendre rule.
template <int N, class F>
double integrate_gauss(F&& f, double a, double b) {
  const auto& rule = gauss_legendre<N>();
  double sum = 0.0;
  for (int k = 0; k < N; ++k) sum += rule.weights[k] * f(a + (b - a) * rule.nodes[k]);
  return sum * (b - a);
}

inline std::size_t field_size(const PhaseScalarField& f) {
  std::size_t n = 0;
  for (const auto& c : f) n += c.size();
  return n;
}

inline Eigen::VectorXd flatten(const PhaseScalarField& f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(field_size(f)));
  Eigen::Index k = 0;
  for (const auto& c : f)
    for (double x : c) v[k++] = x;
  return v;
}

}  // namespace mslab
