#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's spline or boundary-integral code.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

/// Perimeter of the ellipse with semi-axes a >= b via the complete elliptic
/// integral of the second kind.
inline double ellipse_perimeter(double a, double b) {
  const double e = std::sqrt(1.0 - (b * b) / (a * a));
  return 4.0 * a * std::comp_ellint_2(e);
}

/// Adaptive Simpson quadrature.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                               int depth = 40) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int d) {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const double flm = f(lm), frm = f(rm);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if (d <= 0 || std::abs(left + right - whole) < 15.0 * tol) return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, d - 1) + rec(mid, hi, fmid, frm, fhi, right, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), depth);
}

/// Nearest point on the ellipse x = a cos t, y = b sin t by Newton on the
/// stationarity condition, started from the best of a coarse scan.
inline std::pair<double, double> ellipse_nearest(double a, double b, double px, double py) {
  auto f = [&](double t) {
    const double x = a * std::cos(t), y = b * std::sin(t);
    return (x - px) * (-a * std::sin(t)) + (y - py) * (b * std::cos(t));
  };
  auto fp = [&](double t) {
    const double x = a * std::cos(t), y = b * std::sin(t);
    const double dx = -a * std::sin(t), dy = b * std::cos(t);
    return dx * dx + dy * dy + (x - px) * (-a * std::cos(t)) + (y - py) * (-b * std::sin(t));
  };
  double best = 0.0, bd = 1e300;
  for (int i = 0; i < 720; ++i) {
    const double t = 2.0 * pi * i / 720.0;
    const double d = std::hypot(a * std::cos(t) - px, b * std::sin(t) - py);
    if (d < bd) {
      bd = d;
      best = t;
    }
  }
  double t = best;
  for (int it = 0; it < 50; ++it) t -= f(t) / fp(t);
  return {a * std::cos(t), b * std::sin(t)};
}

/// Signed curvature of the ellipse at parameter t.
inline double ellipse_curvature(double a, double b, double t) {
  const double s = std::sin(t), c = std::cos(t);
  return a * b / std::pow(a * a * s * s + b * b * c * c, 1.5);
}

/// Unit circle: harmonic extension of cos(k theta) has normal-derivative jump
/// (inside minus outside, normal pointing inward) of -2k cos(k theta), and
/// Dirichlet energy 2 pi k.
inline double circle_mode_jump(int k, double theta) { return -2.0 * k * std::cos(k * theta); }
inline double circle_mode_energy(int k) { return 2.0 * pi * k; }

/// Linearized decay rate of mode k for a unit circle.
inline double mode_decay_rate(int k) { return 2.0 * k * (static_cast<double>(k) * k - 1.0); }

/// Midpoint-rule area integral of f over a w x h grid of the box, counting
/// only cells whose center satisfies `inside`.
inline double grid_integral(const std::function<bool(double, double)>& inside,
                            const std::function<double(double, double)>& f, double xmin, double ymin,
                            double xmax, double ymax, int n) {
  const double hx = (xmax - xmin) / n, hy = (ymax - ymin) / n;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = xmin + (i + 0.5) * hx;
    for (int j = 0; j < n; ++j) {
      const double y = ymin + (j + 0.5) * hy;
      if (inside(x, y)) sum += f(x, y);
    }
  }
  return sum * hx * hy;
}

}  // namespace oracle
