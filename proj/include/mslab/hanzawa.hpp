#pragma once

// Ψ(x) = x − ζ(x) h̄(x) n̄(x) with ζ = ζ̄(s/ℓ), h̄ = h∘P, n̄ = n∘P.
// Maps the graph y + h(y) n(y) over the strong interface onto the interface.
//
// In the frame (τ̄, n̄), with D = 1 − H̄s:
//   ∇Ψ = [[1 + ζH̄h̄/D, 0], [−ζh′/D, 1 − ζ̄′h̄/ℓ]]
// so det ∇Ψ = (1 − ζ̄′h̄/ℓ)(1 + ζH̄h̄/D).

#include "mslab/entropy.hpp"
#include "mslab/geometry.hpp"
#include "mslab/profiles.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <random>

namespace mslab::hanzawa {

using geometry::PhaseSet;

class HanzawaMap {
 public:
  /// h is the nodal normal offset over the strong interface; ell = 0 uses the tubular width.
  HanzawaMap(PhaseSet strong, const PhaseScalarField& h, double ell = 0.0) : strong_(std::move(strong)) {
    if (h.size() != strong_.size()) throw ShapeError("height field has wrong number of components");
    ell_ = ell > 0.0 ? ell : geometry::tubular_width(strong_);
    for (std::size_t c = 0; c < strong_.size(); ++c) {
      if (h[c].size() != strong_[c].size()) throw ShapeError("height field length differs from node count");
      for (double v : h[c]) {
        if (!std::isfinite(v)) throw Error("non-finite height");
        sup_h_ = std::max(sup_h_, std::abs(v));
      }
      h_.emplace_back(strong_[c].spline(), h[c]);
    }
  }

  HanzawaMap(PhaseSet strong, const entropy::HeightFunction& hf)
      : HanzawaMap(std::move(strong), hf.h, hf.ell) {}

  double ell() const { return ell_; }
  double sup_h() const { return sup_h_; }
  const PhaseSet& strong() const { return strong_; }

  struct Local {
    geometry::Projection pr;
    profiles::Value zeta;  ///< ζ̄ and ζ̄′ at s/ℓ
    double h = 0.0;        ///< h̄
    double dh = 0.0;       ///< ∂_s h at P(x)
  };

  Local local(const Vec2& x) const {
    Local l;
    l.pr = geometry::project(strong_, x);
    l.zeta = profiles::zeta_bar(l.pr.signed_distance / ell_);
    if (l.zeta.f == 0.0 && l.zeta.df == 0.0) return l;
    const auto& sp = strong_[l.pr.component].spline();
    const auto& hs = h_[l.pr.component];
    l.h = hs.value(l.pr.parameter);
    l.dh = hs.derivative(l.pr.parameter) / sp.first(l.pr.parameter).norm();
    return l;
  }

  Vec2 psi(const Vec2& x) const {
    const auto l = local(x);
    return x - l.zeta.f * l.h * l.pr.normal;
  }

  Mat2 grad_psi(const Vec2& x) const { return grad_from(local(x)); }

  /// Product formula for the determinant.
  double det_psi(const Vec2& x) const { return det_from(local(x)); }

  /// (1/|det ∇Ψ|) ∇Ψᵀ∇Ψ
  Mat2 a_h(const Vec2& x) const {
    const auto l = local(x);
    const Mat2 g = grad_from(l);
    return g.transpose() * g / std::abs(det_from(l));
  }

  /// x + h̄ n̄ near the interface, refined by Newton on Ψ(y) = x.
  Vec2 inverse(const Vec2& x, int max_newton = 8, double tol = 1e-14) const {
    const auto l = local(x);
    if (std::abs(l.pr.signed_distance) >= 0.5 * ell_ + sup_h_) return x;
    Vec2 y = x + l.h * l.pr.normal;
    for (int it = 0; it < max_newton; ++it) {
      const auto ly = local(y);
      const Vec2 r = y - ly.zeta.f * ly.h * ly.pr.normal - x;
      if (r.norm() <= tol * (1.0 + x.norm())) break;
      y -= grad_from(ly).partialPivLu().solve(r);
    }
    return y;
  }

 private:
  Mat2 grad_from(const Local& l) const {
    const Vec2& n = l.pr.normal;
    const Vec2& t = l.pr.tangent;
    const double D = 1.0 - l.pr.curvature * l.pr.signed_distance;
    const double z = l.zeta.f;
    return Mat2::Identity() - (z * l.dh / D) * n * t.transpose() + (z * l.pr.curvature * l.h / D) * t * t.transpose() -
           (l.zeta.df * l.h / ell_) * n * n.transpose();
  }

  double det_from(const Local& l) const {
    const double D = 1.0 - l.pr.curvature * l.pr.signed_distance;
    return (1.0 - l.zeta.df * l.h / ell_) * (1.0 + l.zeta.f * l.pr.curvature * l.h / D);
  }

  PhaseSet strong_;
  double ell_ = 0.0;
  double sup_h_ = 0.0;
  std::vector<PeriodicScalarSpline> h_;
};

struct Residual {
  double max = 0.0;
  double mean = 0.0;
  std::size_t count = 0;

  void add(double r) {
    max = std::max(max, r);
    mean += (r - mean) / static_cast<double>(++count);
  }
};

inline nlohmann::json to_json(const Residual& r) { return {{"max", r.max}, {"mean", r.mean}, {"samples", r.count}}; }

/// Points y + s n(y) with |s| < frac·ℓ, uniform in component, parameter and s.
inline std::vector<Vec2> band_samples(const PhaseSet& phase, double ell, double frac, std::size_t count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> pts;
  pts.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto& sp = phase[k % phase.size()].spline();
    const double t = u(rng) * sp.period();
    pts.push_back(sp.position(t) + (2.0 * u(rng) - 1.0) * frac * ell * sp.normal(t));
  }
  return pts;
}

namespace detail {

template <class F>
Mat2 fd_jacobian(const F& f, const Vec2& x, double step) {
  Mat2 J;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = step;
    J.col(j) = (f(Vec2(x + e)) - f(Vec2(x - e))) / (2.0 * step);
  }
  return J;
}

}  // namespace detail

struct MapReport {
  Residual jacobian;      ///< ‖∇Ψ − FD‖ (Frobenius)
  Residual determinant;   ///< |det formula − det matrix| / |det matrix|
  Residual interface;     ///< |s(Ψ(y + h n))| on sampled graph points
  Residual inverse;       ///< |Ψ(Ψ⁻¹(x)) − x| on B_{2‖h‖∞}
  double min_det = std::numeric_limits<double>::infinity();
  double min_eig = std::numeric_limits<double>::infinity();  ///< of a^h
  double max_eig = 0.0;
  double max_asymmetry = 0.0;

  nlohmann::json json() const {
    return {{"jacobian", to_json(jacobian)}, {"determinant", to_json(determinant)}, {"interface", to_json(interface)},
            {"inverse", to_json(inverse)},   {"min_det", min_det},                  {"a_h_min_eig", min_eig},
            {"a_h_max_eig", max_eig}};
  }
};

inline MapReport verify_map(const HanzawaMap& m, std::size_t samples = 100, unsigned seed = 1, double fd_step = 1e-6) {
  MapReport r;
  const double ell = m.ell();
  for (const auto& x : band_samples(m.strong(), ell, 0.5, samples, seed)) {
    const Mat2 g = m.grad_psi(x);
    const Mat2 fd = detail::fd_jacobian([&](const Vec2& y) { return m.psi(y); }, x, fd_step);
    r.jacobian.add((g - fd).norm());
    const double d = g.determinant();
    r.determinant.add(std::abs(m.det_psi(x) - d) / std::abs(d));
    r.min_det = std::min(r.min_det, d);
    const Mat2 a = m.a_h(x);
    r.max_asymmetry = std::max(r.max_asymmetry, std::abs(a(0, 1) - a(1, 0)));
    const Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (a + a.transpose()));
    r.min_eig = std::min(r.min_eig, es.eigenvalues()[0]);
    r.max_eig = std::max(r.max_eig, es.eigenvalues()[1]);
  }
  std::mt19937 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double band = std::min(2.0 * m.sup_h(), 0.5 * ell);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto& c = m.strong()[k % m.strong().size()];
    const auto& sp = c.spline();
    const double t = u(rng) * sp.period();
    const auto l = m.local(sp.position(t));
    const Vec2 on_graph = sp.position(t) + l.h * sp.normal(t);
    r.interface.add(std::abs(geometry::signed_distance(m.strong(), m.psi(on_graph))));
    const Vec2 x = sp.position(t) + (2.0 * u(rng) - 1.0) * band * sp.normal(t);
    r.inverse.add((m.psi(m.inverse(x)) - x).norm());
  }
  return r;
}

struct IdentityReport {
  Residual grad_s;  ///< ∇s (FD) vs n̄
  Residual div_xi;  ///< ∇·n̄ (FD) vs −H̄/(1 − H̄s)
  Residual grad_xi; ///< ∇n̄ (FD) vs −H̄/(1 − H̄s)(Id − n̄⊗n̄)
  std::vector<Residual> per_component;  ///< max of the three per strong component

  double max() const { return std::max({grad_s.max, div_xi.max, grad_xi.max}); }

  nlohmann::json json() const {
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& c : per_component) pc.push_back(to_json(c));
    return {{"grad_s", to_json(grad_s)}, {"div_xi", to_json(div_xi)}, {"grad_xi", to_json(grad_xi)}, {"per_component", pc}};
  }
};

/// Finite-difference checks of the distance-function identities on B_{ℓ/2}.
inline IdentityReport verify_identities(const PhaseSet& strong, std::size_t samples = 200, unsigned seed = 1,
                                        double fd_step = 1e-6) {
  const double ell = geometry::tubular_width(strong);
  IdentityReport r;
  r.per_component.resize(strong.size());
  auto normal = [&](const Vec2& y) { return geometry::project(strong, y).normal; };
  auto sdist = [&](const Vec2& y) { return geometry::signed_distance(strong, y); };
  for (const auto& x : band_samples(strong, ell, 0.5, samples, seed)) {
    const auto pr = geometry::project(strong, x);
    const double D = 1.0 - pr.curvature * pr.signed_distance;
    const Vec2 gs((sdist(x + Vec2(fd_step, 0)) - sdist(x - Vec2(fd_step, 0))) / (2 * fd_step),
                  (sdist(x + Vec2(0, fd_step)) - sdist(x - Vec2(0, fd_step))) / (2 * fd_step));
    const Mat2 gx = detail::fd_jacobian(normal, x, fd_step);
    const Mat2 formula = -pr.curvature / D * (Mat2::Identity() - pr.normal * pr.normal.transpose());
    const double e1 = (gs - pr.normal).norm();
    const double e2 = std::abs(gx.trace() + pr.curvature / D);
    const double e3 = (gx - formula).norm();
    r.grad_s.add(e1);
    r.div_xi.add(e2);
    r.grad_xi.add(e3);
    r.per_component[pr.component].add(std::max({e1, e2, e3}));
  }
  return r;
}

}  // namespace mslab::hanzawa
