#pragma once

// Piecewise cubic interpolation used to give polylines a C^2 (or piecewise
// C^2 between corners) parametrization.

#include "mslab/common.hpp"

#include <algorithm>
#include <vector>

namespace mslab {

/// value(u) = a + b u + c u^2 + d u^3 on u in [0, h].
template <class V>
struct CubicSegment {
  V a, b, c, d;
  double h = 0.0;

  V value(double u) const { return V(a + u * (b + u * (c + u * d))); }
  V first(double u) const { return V(b + u * (2.0 * c + 3.0 * u * d)); }
  V second(double u) const { return V(2.0 * c + 6.0 * u * d); }
};

namespace detail {

template <class V>
V zero_like(const V& v) {
  if constexpr (std::is_arithmetic_v<V>) {
    return V(0);
  } else {
    return V::Zero(v.rows(), v.cols());
  }
}

// Solve a tridiagonal system with scalar coefficients and V-valued rhs.
template <class V>
std::vector<V> solve_tridiagonal(std::vector<double> lower, std::vector<double> diag,
                                 std::vector<double> upper, std::vector<V> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = lower[i] / diag[i - 1];
    diag[i] -= m * upper[i - 1];
    rhs[i] = V(rhs[i] - m * rhs[i - 1]);
  }
  std::vector<V> x(n, zero_like(rhs[0]));
  x[n - 1] = V(rhs[n - 1] / diag[n - 1]);
  for (std::size_t i = n - 1; i-- > 0;) x[i] = V((rhs[i] - upper[i] * x[i + 1]) / diag[i]);
  return x;
}

// Cyclic tridiagonal solve via Sherman-Morrison. lower[0] couples row 0 to
// row n-1 and upper[n-1] couples row n-1 to row 0.
template <class V>
std::vector<V> solve_cyclic_tridiagonal(const std::vector<double>& lower,
                                        const std::vector<double>& diag,
                                        const std::vector<double>& upper,
                                        const std::vector<V>& rhs) {
  const std::size_t n = diag.size();
  const double alpha = upper[n - 1];
  const double beta = lower[0];
  const double gamma = -diag[0];
  std::vector<double> d = diag;
  d[0] -= gamma;
  d[n - 1] -= alpha * beta / gamma;
  std::vector<double> lo = lower, up = upper;
  lo[0] = 0.0;
  up[n - 1] = 0.0;
  const auto x = solve_tridiagonal<V>(lo, d, up, rhs);
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = alpha;
  const auto z = solve_tridiagonal<double>(lo, d, up, u);
  const V num = V(x[0] + beta * x[n - 1] / gamma);
  const double den = 1.0 + z[0] + beta * z[n - 1] / gamma;
  std::vector<V> out(n, zero_like(rhs[0]));
  for (std::size_t i = 0; i < n; ++i) out[i] = V(x[i] - (z[i] / den) * num);
  return out;
}

template <class V>
CubicSegment<V> make_segment(const V& y0, const V& y1, const V& m0, const V& m1, double h) {
  CubicSegment<V> s;
  s.h = h;
  s.a = y0;
  s.b = V((y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0);
  s.c = V(0.5 * m0);
  s.d = V((m1 - m0) / (6.0 * h));
  return s;
}

}  // namespace detail

/// Periodic interpolating cubic spline. knots[i] are strictly increasing and
/// the last segment closes back to values[0] after `period`.
template <class V>
std::vector<CubicSegment<V>> periodic_cubic(const std::vector<double>& knots, double period,
                                            const std::vector<V>& values) {
  const std::size_t n = values.size();
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i)
    h[i] = (i + 1 < n ? knots[i + 1] : knots[0] + period) - knots[i];

  std::vector<CubicSegment<V>> segs(n);
  if (n < 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const V z = detail::zero_like(values[0]);
      segs[i] = detail::make_segment<V>(values[i], values[(i + 1) % n], z, z, h[i]);
    }
    return segs;
  }
  std::vector<double> lo(n), di(n), up(n);
  std::vector<V> rhs(n, detail::zero_like(values[0]));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t im = (i + n - 1) % n, ip = (i + 1) % n;
    lo[i] = h[im];
    di[i] = 2.0 * (h[im] + h[i]);
    up[i] = h[i];
    rhs[i] = V(6.0 * ((values[ip] - values[i]) / h[i] - (values[i] - values[im]) / h[im]));
  }
  const auto m = detail::solve_cyclic_tridiagonal<V>(lo, di, up, rhs);
  for (std::size_t i = 0; i < n; ++i)
    segs[i] = detail::make_segment<V>(values[i], values[(i + 1) % n], m[i], m[(i + 1) % n], h[i]);
  return segs;
}

/// Natural cubic spline through an open sequence of values.
template <class V>
std::vector<CubicSegment<V>> natural_cubic(const std::vector<double>& knots,
                                           const std::vector<V>& values) {
  const std::size_t n = values.size();
  std::vector<CubicSegment<V>> segs(n - 1);
  const V z = detail::zero_like(values[0]);
  if (n == 2) {
    segs[0] = detail::make_segment<V>(values[0], values[1], z, z, knots[1] - knots[0]);
    return segs;
  }
  std::vector<double> lo(n, 0.0), di(n, 1.0), up(n, 0.0);
  std::vector<V> rhs(n, z);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hm = knots[i] - knots[i - 1], hp = knots[i + 1] - knots[i];
    lo[i] = hm;
    di[i] = 2.0 * (hm + hp);
    up[i] = hp;
    rhs[i] = V(6.0 * ((values[i + 1] - values[i]) / hp - (values[i] - values[i - 1]) / hm));
  }
  const auto m = detail::solve_tridiagonal<V>(lo, di, up, rhs);
  for (std::size_t i = 0; i + 1 < n; ++i)
    segs[i] = detail::make_segment<V>(values[i], values[i + 1], m[i], m[i + 1], knots[i + 1] - knots[i]);
  return segs;
}

/// Closed planar curve through a node sequence, parametrized by cumulative
/// chord length. Nodes whose turning angle exceeds `corner_angle` split the
/// curve into open natural-spline pieces so polygons keep their corners.
class CurveSpline {
 public:
  static constexpr double default_corner_angle = 1.0;

  CurveSpline() = default;

  explicit CurveSpline(const std::vector<Vec2>& nodes, double corner_angle = default_corner_angle) {
    const std::size_t n = nodes.size();
    knots_.resize(n + 1);
    knots_[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      knots_[i + 1] = knots_[i] + (nodes[(i + 1) % n] - nodes[i]).norm();
    period_ = knots_[n];

    std::vector<std::size_t> corners;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = nodes[i] - nodes[wrap(static_cast<std::ptrdiff_t>(i) - 1, n)];
      const Vec2 b = nodes[(i + 1) % n] - nodes[i];
      const double turn = std::atan2(cross(a, b), a.dot(b));
      if (std::abs(turn) > corner_angle) corners.push_back(i);
    }
    has_corners_ = !corners.empty();

    if (corners.empty()) {
      std::vector<double> k(knots_.begin(), knots_.end() - 1);
      segs_ = periodic_cubic<Vec2>(k, period_, nodes);
    } else {
      segs_.resize(n);
      for (std::size_t c = 0; c < corners.size(); ++c) {
        const std::size_t first = corners[c];
        const std::size_t last = corners[(c + 1) % corners.size()];
        std::size_t count = (last + n - first) % n;
        if (count == 0) count = n;
        std::vector<double> k;
        std::vector<Vec2> v;
        double acc = 0.0;
        for (std::size_t j = 0; j <= count; ++j) {
          const std::size_t idx = (first + j) % n;
          if (j > 0) acc += knots_[((first + j - 1) % n) + 1] - knots_[(first + j - 1) % n];
          k.push_back(acc);
          v.push_back(nodes[idx]);
        }
        const auto piece = natural_cubic<Vec2>(k, v);
        for (std::size_t j = 0; j < count; ++j) segs_[(first + j) % n] = piece[j];
      }
    }

    arc_.resize(n + 1);
    arc_[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) arc_[i + 1] = arc_[i] + segment_length(i, segs_[i].h);
  }

  std::size_t segments() const { return segs_.size(); }
  double period() const { return period_; }
  double knot(std::size_t i) const { return knots_[i]; }
  const CubicSegment<Vec2>& segment(std::size_t i) const { return segs_[i]; }
  bool has_corners() const { return has_corners_; }

  /// Map a global parameter to (segment, local parameter), wrapping periodically.
  std::pair<std::size_t, double> locate(double t) const {
    t = std::fmod(t, period_);
    if (t < 0) t += period_;
    auto it = std::upper_bound(knots_.begin(), knots_.end() - 1, t);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - knots_.begin()) - 1));
    if (i >= segs_.size()) i = segs_.size() - 1;
    return {i, t - knots_[i]};
  }

  Vec2 position(double t) const {
    const auto [i, u] = locate(t);
    return segs_[i].value(u);
  }
  Vec2 first(double t) const {
    const auto [i, u] = locate(t);
    return segs_[i].first(u);
  }
  Vec2 second(double t) const {
    const auto [i, u] = locate(t);
    return segs_[i].second(u);
  }
  Vec2 tangent(double t) const { return first(t).normalized(); }
  /// Inward normal for a counter-clockwise curve.
  Vec2 normal(double t) const { return perp(tangent(t)); }
  /// Signed curvature, positive for counter-clockwise convex arcs.
  double curvature(double t) const {
    const Vec2 d1 = first(t), d2 = second(t);
    return cross(d1, d2) / std::pow(d1.norm(), 3);
  }

  double segment_length(std::size_t i, double u) const {
    const auto& s = segs_[i];
    return integrate_gauss<8>([&](double v) { return s.first(v).norm(); }, 0.0, u);
  }

  double length() const { return arc_.back(); }
  double arclength_at_knot(std::size_t i) const { return arc_[i]; }

  /// Arclength from the start of the curve to parameter t.
  double arclength(double t) const {
    const auto [i, u] = locate(t);
    return arc_[i] + segment_length(i, u);
  }

  /// Parameter at which the arclength from the start equals s.
  double parameter_at_arclength(double s) const {
    const double L = length();
    s = std::fmod(s, L);
    if (s < 0) s += L;
    auto it = std::upper_bound(arc_.begin(), arc_.end() - 1, s);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - arc_.begin()) - 1));
    if (i >= segs_.size()) i = segs_.size() - 1;
    const double target = s - arc_[i];
    const double seg_len = arc_[i + 1] - arc_[i];
    double u = seg_len > 0 ? segs_[i].h * target / seg_len : 0.0;
    for (int it2 = 0; it2 < 50; ++it2) {
      const double f = segment_length(i, u) - target;
      const double df = segs_[i].first(u).norm();
      if (df <= 0) break;
      const double du = f / df;
      u = std::clamp(u - du, 0.0, segs_[i].h);
      if (std::abs(du) < 1e-15 * (1.0 + segs_[i].h)) break;
    }
    return knots_[i] + u;
  }

  /// Signed enclosed area, 1/2 closed integral of (x dy - y dx). Exact for the cubic pieces.
  double signed_area() const {
    double a = 0.0;
    for (const auto& s : segs_) {
      a += integrate_gauss<4>(
          [&](double u) {
            const Vec2 p = s.value(u), d = s.first(u);
            return 0.5 * cross(p, d);
          },
          0.0, s.h);
    }
    return a;
  }

 private:
  std::vector<double> knots_;
  std::vector<double> arc_;
  std::vector<CubicSegment<Vec2>> segs_;
  double period_ = 0.0;
  bool has_corners_ = false;
};

/// Periodic cubic interpolant of nodal scalar data on a curve's knots.
class PeriodicScalarSpline {
 public:
  PeriodicScalarSpline() = default;
  PeriodicScalarSpline(const CurveSpline& curve, const std::vector<double>& values) : period_(curve.period()) {
    knots_.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) knots_[i] = curve.knot(i);
    segs_ = periodic_cubic<double>(knots_, period_, values);
  }

  double value(double t) const {
    const auto [i, u] = locate(t);
    return segs_[i].value(u);
  }
  double derivative(double t) const {
    const auto [i, u] = locate(t);
    return segs_[i].first(u);
  }

 private:
  std::pair<std::size_t, double> locate(double t) const {
    t = std::fmod(t, period_);
    if (t < 0) t += period_;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - knots_.begin()) - 1));
    if (i >= segs_.size()) i = segs_.size() - 1;
    return {i, t - knots_[i]};
  }

  std::vector<double> knots_;
  std::vector<CubicSegment<double>> segs_;
  double period_ = 0.0;
};

}  // namespace mslab
