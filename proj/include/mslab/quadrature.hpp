#pragma once

// Area integrals over phases and over differences of phases.
//
// integrate_green: ∫_A f via Green's theorem on the boundary splines, for
// smooth integrands.
// integrate_difference: ∫ (χ_A - χ_B) f or ∫_{A Δ B} f by horizontal
// scanlines, for integrands with cutoffs. Panels in y are split at the y-
// extrema of both boundaries and at their mutual crossings, and each panel
// uses a cosine substitution so square-root behaviour at the panel ends does
// not spoil the Gauss rule.

#include "mslab/common.hpp"
#include "mslab/geometry.hpp"

#include <algorithm>
#include <functional>
#include <vector>

namespace mslab::quadrature {

using ScalarFn = std::function<double(const Vec2&)>;

/// ∫_A f dx for smooth f, via ∫_A ∂_x F = ∮ F dy with F(x, y) = ∫_{x0}^x f(s, y) ds.
inline double integrate_green(const geometry::PhaseSet& phase, const ScalarFn& f) {
  double total = 0.0;
  for (const auto& comp : phase.components()) {
    double x0 = 0.0;
    for (const auto& p : comp.nodes()) x0 += p.x();
    x0 /= static_cast<double>(comp.size());
    const auto& sp = comp.spline();
    for (std::size_t i = 0; i < sp.segments(); ++i) {
      const auto& seg = sp.segment(i);
      total += integrate_gauss<8>(
          [&](double u) {
            const Vec2 c = seg.value(u);
            const double dy = seg.first(u).y();
            const double F = integrate_gauss<16>([&](double s) { return f(Vec2(s, c.y())); }, x0, c.x());
            return F * dy;
          },
          0.0, seg.h);
    }
  }
  return total;
}

struct DifferenceOptions {
  int per_segment = 16;       ///< polyline refinement of each spline segment
  int panel_points = 24;      ///< Gauss points per y-panel (in the cosine variable)
  double max_panel = 0.25;    ///< longest y-panel before subdivision
  double max_x_piece = 0.1;   ///< longest x-piece per Gauss rule
  bool signed_weight = true;  ///< true: χ_A - χ_B; false: χ_{A Δ B}
};

struct DifferenceResult {
  double value = 0.0;
  double error_estimate = 0.0;  ///< |value - value at half the y-resolution|
};

namespace detail {

inline std::vector<std::vector<Vec2>> refined_polylines(const geometry::PhaseSet& ph, int per_segment) {
  std::vector<std::vector<Vec2>> out;
  for (const auto& c : ph.components()) out.push_back(c.refined(per_segment));
  return out;
}

inline std::vector<double> crossings_at(const std::vector<std::vector<Vec2>>& polys, double y) {
  std::vector<double> xs;
  for (const auto& p : polys) {
    const std::size_t n = p.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = p[k];
      const Vec2& b = p[(k + 1) % n];
      if ((a.y() > y) != (b.y() > y)) xs.push_back(a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
    }
  }
  std::sort(xs.begin(), xs.end());
  return xs;
}

// y-values where the integrand in y may lose smoothness.
inline void collect_breaks(const std::vector<std::vector<Vec2>>& polys, std::vector<double>& ys) {
  for (const auto& p : polys) {
    const std::size_t n = p.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double ym = p[(k + n - 1) % n].y(), y0 = p[k].y(), yp = p[(k + 1) % n].y();
      if ((y0 - ym) * (yp - y0) <= 0.0) ys.push_back(y0);
    }
  }
}

inline void collect_mutual_crossings(const geometry::PhaseSet& a, const geometry::PhaseSet& b, std::vector<double>& ys) {
  for (const auto& ca : a.components())
    for (const auto& cb : b.components()) {
      const auto& p = ca.nodes();
      const auto& q = cb.nodes();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const Vec2 &p0 = p[i], &p1 = p[(i + 1) % p.size()];
        const Vec2 lo = p0.cwiseMin(p1), hi = p0.cwiseMax(p1);
        for (std::size_t j = 0; j < q.size(); ++j) {
          const Vec2 &q0 = q[j], &q1 = q[(j + 1) % q.size()];
          if (std::max(q0.x(), q1.x()) < lo.x() || std::min(q0.x(), q1.x()) > hi.x() ||
              std::max(q0.y(), q1.y()) < lo.y() || std::min(q0.y(), q1.y()) > hi.y())
            continue;
          const Vec2 r = p1 - p0, s = q1 - q0;
          const double den = cross(r, s);
          if (den == 0.0) continue;
          const double t = cross(q0 - p0, s) / den, u = cross(q0 - p0, r) / den;
          if (t >= 0 && t <= 1 && u >= 0 && u <= 1) ys.push_back(p0.y() + t * r.y());
        }
      }
    }
}

}  // namespace detail

inline DifferenceResult integrate_difference(const geometry::PhaseSet& a, const geometry::PhaseSet& b, const ScalarFn& f,
                                             const DifferenceOptions& opt = {}) {
  const auto pa = detail::refined_polylines(a, opt.per_segment);
  const auto pb = detail::refined_polylines(b, opt.per_segment);
  std::vector<double> ys;
  detail::collect_breaks(pa, ys);
  detail::collect_breaks(pb, ys);
  if (ys.empty()) return {};
  detail::collect_mutual_crossings(a, b, ys);
  std::sort(ys.begin(), ys.end());
  std::vector<double> breaks;
  for (double y : ys)
    if (breaks.empty() || y - breaks.back() > 1e-13) breaks.push_back(y);

  auto line_integral = [&](double y) {
    const auto xa = detail::crossings_at(pa, y);
    const auto xb = detail::crossings_at(pb, y);
    // sweep the merged crossing list, toggling membership
    std::size_t i = 0, j = 0;
    bool in_a = false, in_b = false;
    double prev = 0.0, sum = 0.0;
    while (i < xa.size() || j < xb.size()) {
      const bool take_a = j >= xb.size() || (i < xa.size() && xa[i] <= xb[j]);
      const double x = take_a ? xa[i] : xb[j];
      if (in_a != in_b && x > prev) {
        const double w = opt.signed_weight ? (in_a ? 1.0 : -1.0) : 1.0;
        const int pieces = std::max(1, static_cast<int>(std::ceil((x - prev) / opt.max_x_piece)));
        const double len = (x - prev) / pieces;
        for (int k = 0; k < pieces; ++k)
          sum += w * integrate_gauss<8>([&](double s) { return f(Vec2(s, y)); }, prev + k * len, prev + (k + 1) * len);
      }
      if (take_a) {
        in_a = !in_a;
        ++i;
      } else {
        in_b = !in_b;
        ++j;
      }
      prev = x;
    }
    return sum;
  };

  auto integrate_y = [&](int points) {
    const GaussRule rule = make_gauss_legendre(points);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double y0 = breaks[k], y1 = breaks[k + 1];
      const int sub = std::max(1, static_cast<int>(std::ceil((y1 - y0) / opt.max_panel)));
      for (int m = 0; m < sub; ++m) {
        // cosine map on the whole panel, split into `sub` pieces in the angle
        const double th0 = pi * m / sub, th1 = pi * (m + 1) / sub;
        for (int q = 0; q < points; ++q) {
          const double th = th0 + (th1 - th0) * rule.nodes[q];
          const double y = y0 + 0.5 * (y1 - y0) * (1.0 - std::cos(th));
          const double jac = 0.5 * (y1 - y0) * std::sin(th);
          total += rule.weights[q] * (th1 - th0) * jac * line_integral(y);
        }
      }
    }
    return total;
  };

  DifferenceResult r;
  r.value = integrate_y(opt.panel_points);
  r.error_estimate = std::abs(r.value - integrate_y(std::max(4, opt.panel_points / 2)));
  return r;
}

/// ∫_A f for integrands that need not be smooth.
inline DifferenceResult integrate_phase(const geometry::PhaseSet& a, const ScalarFn& f, const DifferenceOptions& opt = {}) {
  return integrate_difference(a, geometry::PhaseSet({}, a.box()), f, opt);
}

}  // namespace mslab::quadrature
