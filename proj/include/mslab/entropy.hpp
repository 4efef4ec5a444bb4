#pragma once

// Weak-strong comparison: the calibration triple (ξ, ϑ, B) built from a
// strong phase, the error functionals E_rel and E_vol, good/bad time
// classification, height-function fitting and the right-hand side terms of
// the relative entropy and bulk error evolution.
//
// With s the signed distance to the strong interface (s > 0 inside), n = ∇s,
// P the nearest-point projection and H the curvature at P:
//   ξ = η̄(s/ℓ) n,   ϑ = −ϑ̄(s/ℓ)/ℓ,   B = η̄(s/ℓ) V(P) n,
//   ∇n = −H/(1 − Hs) τ⊗τ,   ∇(V∘P) = V'(P)/(1 − Hs) τ.
// Matrices are stored as (∇F)_ij = ∂_j F_i.

#include "mslab/common.hpp"
#include "mslab/flow.hpp"
#include "mslab/geometry.hpp"
#include "mslab/laplace.hpp"
#include "mslab/profiles.hpp"
#include "mslab/quadrature.hpp"
#include "mslab/spline.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mslab::entropy {

using geometry::PhaseSet;
using laplace::DtnSolution;

struct FieldSample {
  double s = 0.0;
  std::size_t component = 0;
  Vec2 n = Vec2::Zero();
  Vec2 tau = Vec2::Zero();
  double H = 0.0;
  Vec2 xi = Vec2::Zero();
  Mat2 grad_xi = Mat2::Zero();
  double div_xi = 0.0;
  double theta = 0.0;
  Vec2 grad_theta = Vec2::Zero();
  double V = 0.0;
  Vec2 B = Vec2::Zero();
  Mat2 grad_B = Mat2::Zero();
  double div_B = 0.0;
};

class FieldTriple {
 public:
  /// `velocity` is V·n per strong node; `ell` ≤ 0 selects the tubular width.
  FieldTriple(PhaseSet strong, const PhaseScalarField& velocity, double ell = 0.0) : strong_(std::move(strong)) {
    if (strong_.empty()) throw GeometryError("calibration needs a nonempty strong phase");
    ell_ = ell > 0.0 ? ell : geometry::tubular_width(strong_);
    if (velocity.size() != strong_.size()) throw ShapeError("velocity field does not match the strong phase");
    for (std::size_t c = 0; c < strong_.size(); ++c) {
      if (velocity[c].size() != strong_[c].size()) throw ShapeError("velocity field does not match the strong phase");
      velocity_.emplace_back(strong_[c].spline(), velocity[c]);
    }
  }

  const PhaseSet& reference() const { return strong_; }
  double ell() const { return ell_; }

  FieldSample sample(const Vec2& x) const {
    const auto pr = geometry::project(strong_, x);
    FieldSample f;
    f.s = pr.signed_distance;
    f.component = pr.component;
    f.n = pr.normal;
    f.tau = pr.tangent;
    f.H = pr.curvature;
    const double r = f.s / ell_;
    const auto th = profiles::theta_bar(r);
    f.theta = -th.f / ell_;
    f.grad_theta = -th.df / (ell_ * ell_) * f.n;
    const auto eta = profiles::eta_bar(r);
    if (eta.f == 0.0 && eta.df == 0.0) return f;

    const double den = 1.0 - f.H * f.s;
    const double dn = -f.H / den;  // ∇n = dn τ⊗τ
    const Mat2 nn = f.n * f.n.transpose(), tt = f.tau * f.tau.transpose(), nt = f.n * f.tau.transpose();
    f.xi = eta.f * f.n;
    f.grad_xi = (eta.df / ell_) * nn + eta.f * dn * tt;
    f.div_xi = eta.df / ell_ + eta.f * dn;

    const auto& sp = strong_[pr.component].spline();
    f.V = velocity_[pr.component].value(pr.parameter);
    const double dV = velocity_[pr.component].derivative(pr.parameter) / sp.first(pr.parameter).norm();
    f.B = eta.f * f.V * f.n;
    f.grad_B = (eta.df * f.V / ell_) * nn + (eta.f * dV / den) * nt + eta.f * f.V * dn * tt;
    f.div_B = eta.df * f.V / ell_ + eta.f * f.V * dn;
    return f;
  }

 private:
  PhaseSet strong_;
  double ell_ = 0.0;
  std::vector<PeriodicScalarSpline> velocity_;
};

/// Fields of a strong phase, with V from the Mullins–Sekerka velocity of that phase.
inline FieldTriple build_fields(const PhaseSet& strong, double ell = 0.0) {
  return FieldTriple(strong, flow::ms_velocity(strong), ell);
}

/// ∮_{∂A}(1 − n·ξ) by the nodal trapezoid rule on the weak interface.
inline double rel_entropy(const PhaseSet& weak, const FieldTriple& f) {
  double e = 0.0;
  for (const auto& c : weak.components()) {
    const auto w = c.node_weights();
    const auto n = c.node_normals();
    for (std::size_t i = 0; i < c.size(); ++i) e += w[i] * (1.0 - n[i].dot(f.sample(c[i]).xi));
  }
  return e;
}

struct VolError {
  double value = 0.0;
  double error_estimate = 0.0;
};

/// ∫_{A Δ 𝒜} |ϑ| by scanlines over the symmetric difference.
inline VolError vol_error(const PhaseSet& weak, const PhaseSet& strong, const FieldTriple& f,
                          quadrature::DifferenceOptions opt = {}) {
  opt.signed_weight = false;
  const auto r = quadrature::integrate_difference(weak, strong, [&](const Vec2& x) { return std::abs(f.sample(x).theta); }, opt);
  return {r.value, r.error_estimate};
}

enum class TimeClass { Good, Bad1, Bad2 };

inline const char* to_string(TimeClass c) {
  switch (c) {
    case TimeClass::Good: return "good";
    case TimeClass::Bad1: return "bad1";
    case TimeClass::Bad2: return "bad2";
  }
  return "?";
}

struct Classification {
  TimeClass label = TimeClass::Good;
  double half_dissipation = 0.0;  ///< ½∫|∇w|² of the weak state
  double error = 0.0;             ///< E = E_rel + E_vol
  double error_threshold = 0.0;   ///< ℓ/M
};

/// Bad1 if ½∫|∇w|² > Λ; otherwise Bad2 if E > ℓ/M; otherwise Good.
inline Classification classify(double half_dissipation, double error, double ell, double Lambda, double M) {
  Classification c;
  c.half_dissipation = half_dissipation;
  c.error = error;
  c.error_threshold = ell / M;
  if (half_dissipation > Lambda)
    c.label = TimeClass::Bad1;
  else if (error > c.error_threshold)
    c.label = TimeClass::Bad2;
  return c;
}

inline Classification classify_time(const flow::SimState& weak, const flow::SimState& strong, const FieldTriple& f,
                                    double Lambda, double M) {
  const double e = rel_entropy(weak.phase, f) + vol_error(weak.phase, strong.phase, f).value;
  return classify(0.5 * weak.last_solution.dirichlet_energy, e, f.ell(), Lambda, M);
}

struct HeightFunction {
  PhaseScalarField h;   ///< normal offset per strong node (weak point = y + h n(y))
  PhaseScalarField dh;  ///< arclength derivative of h
  double ell = 0.0;
  double sup_h = 0.0;
  double sup_dh = 0.0;
  double smallness = 0.0;  ///< ‖h‖∞/ℓ + ‖h′‖∞
};

enum class FitClause { None, A, B, C };

struct GraphFit {
  std::optional<HeightFunction> graph;
  FitClause failed = FitClause::None;
  std::string reason;
  double threshold = 0.0;  ///< 1/(16C)
  bool small = false;      ///< smallness ≤ threshold
};

/// Graph representation of the weak interface over the strong one.
/// Clauses: (a) one crossing per strong normal segment, (b) weak nodes within ℓ
/// of the strong interface, (c) equal component counts.
inline GraphFit fit_graph(const PhaseSet& weak, const PhaseSet& strong, double C, double ell = 0.0) {
  GraphFit out;
  out.threshold = 1.0 / (16.0 * C);
  if (ell <= 0.0) ell = geometry::tubular_width(strong);
  if (weak.size() != strong.size()) {
    out.failed = FitClause::C;
    out.reason = "component counts differ (" + std::to_string(weak.size()) + " vs " + std::to_string(strong.size()) + ")";
    return out;
  }
  for (std::size_t c = 0; c < weak.size(); ++c)
    for (std::size_t i = 0; i < weak[c].size(); ++i)
      if (!(std::abs(geometry::signed_distance(strong, weak[c][i])) < ell)) {
        out.failed = FitClause::B;
        out.reason = "weak node " + std::to_string(i) + " of component " + std::to_string(c) + " lies outside the tube";
        return out;
      }

  std::vector<std::vector<Vec2>> poly;
  for (const auto& c : weak.components()) poly.push_back(c.refined(8));
  HeightFunction hf;
  hf.ell = ell;
  for (std::size_t c = 0; c < strong.size(); ++c) {
    const auto nrm = strong[c].node_normals();
    CurveScalarField h(strong[c].size());
    for (std::size_t i = 0; i < strong[c].size(); ++i) {
      const Vec2 a = strong[c][i] - ell * nrm[i], b = strong[c][i] + ell * nrm[i];
      const Vec2 lo = a.cwiseMin(b), hi = a.cwiseMax(b);
      std::vector<double> hits;
      for (const auto& p : poly)
        for (std::size_t k = 0; k < p.size(); ++k) {
          const Vec2 &q0 = p[k], &q1 = p[(k + 1) % p.size()];
          if (std::max(q0.x(), q1.x()) < lo.x() || std::min(q0.x(), q1.x()) > hi.x() ||
              std::max(q0.y(), q1.y()) < lo.y() || std::min(q0.y(), q1.y()) > hi.y())
            continue;
          const Vec2 r = b - a, s = q1 - q0;
          const double den = cross(r, s);
          if (den == 0.0) continue;
          const double t = cross(q0 - a, s) / den, u = cross(q0 - a, r) / den;
          // crossings through a polyline vertex show up on both adjacent pieces
          constexpr double tol = 1e-10;
          if (t >= 0 && t < 1 && u >= -tol && u <= 1 + tol) {
            const double hv = (2.0 * t - 1.0) * ell;
            bool dup = false;
            for (double v : hits) dup = dup || std::abs(v - hv) < 1e-9 * ell;
            if (!dup) hits.push_back(hv);
          }
        }
      if (hits.size() == 1) h[i] = hits[0];
      if (hits.size() != 1) {
        out.failed = FitClause::A;
        out.reason = "normal segment at strong node " + std::to_string(i) + " of component " + std::to_string(c) +
                     " meets the weak interface " + std::to_string(hits.size()) + " times";
        return out;
      }
    }
    const auto dh = geometry::tangential_derivative(strong[c], h);
    for (std::size_t i = 0; i < h.size(); ++i) {
      hf.sup_h = std::max(hf.sup_h, std::abs(h[i]));
      hf.sup_dh = std::max(hf.sup_dh, std::abs(dh[i]));
    }
    hf.h.push_back(std::move(h));
    hf.dh.push_back(dh);
  }
  hf.smallness = hf.sup_h / ell + hf.sup_dh;
  out.small = hf.smallness <= out.threshold;
  out.graph = std::move(hf);
  return out;
}

/// The phase {y + h(y) n(y)} over the strong nodes.
inline PhaseSet graph_phase(const PhaseSet& strong, const PhaseScalarField& h) {
  if (h.size() != strong.size()) throw ShapeError("height function does not match the strong phase");
  std::vector<geometry::InterfaceCurve> comps;
  for (std::size_t c = 0; c < strong.size(); ++c) {
    if (h[c].size() != strong[c].size()) throw ShapeError("height function does not match the strong phase");
    const auto nrm = strong[c].node_normals();
    std::vector<Vec2> x = strong[c].nodes();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += h[c][i] * nrm[i];
    comps.emplace_back(std::move(x));
  }
  return PhaseSet(std::move(comps), strong.box());
}

struct AuxPotential {
  DtnSolution solution;
  bool contaminated = false;  ///< some weak node lies outside B_{ℓ/2}(∂𝒜)
};

/// w̃: harmonic off the weak interface with data −∇·ξ on it.
inline AuxPotential aux_potential(const PhaseSet& weak, const FieldTriple& f) {
  AuxPotential out;
  PhaseScalarField g;
  for (const auto& c : weak.components()) {
    CurveScalarField v(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto s = f.sample(c[i]);
      v[i] = -s.div_xi;
      if (std::abs(s.s) > 0.5 * f.ell()) out.contaminated = true;
    }
    g.push_back(std::move(v));
  }
  out.solution = laplace::solve_dirichlet_dtn(weak, g);
  return out;
}

/// w̃_ϑ: the same problem with data ϑ.
inline DtnSolution aux_potential_theta(const PhaseSet& weak, const FieldTriple& f) {
  PhaseScalarField g;
  for (const auto& c : weak.components()) {
    CurveScalarField v(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) v[i] = f.sample(c[i]).theta;
    g.push_back(std::move(v));
  }
  return laplace::solve_dirichlet_dtn(weak, g);
}

/// Fields of the strong states adjacent in time, for ∂_tξ and ∂_tϑ by
/// differences. Either pointer null means the strong phase is treated as
/// stationary.
struct FieldHistory {
  const FieldTriple* before = nullptr;
  const FieldTriple* after = nullptr;
  double dt = 0.0;  ///< time between `before` and `after`
};

struct RhsTerms {
  double R_dissip = 0.0;
  double R_dissip_combined = 0.0;
  double R_dtxi = 0.0;
  double R_nablaB = 0.0;
  double R_varifold_BV = 0.0;
  double U_dissip = 0.0;
  double U_dissip_combined = 0.0;
  double U_dtvartheta = 0.0;
  double U_nablaB = 0.0;
  bool aux_contaminated = false;

  double sum_R() const { return R_dissip + R_dtxi + R_nablaB + R_varifold_BV; }
  double sum_U() const { return U_dissip + U_dtvartheta + U_nablaB; }
};

/// Right-hand sides of d/dt E_rel ≤ ΣR and d/dt E_vol = ΣU. `weak` carries the
/// potential u = w (its last_solution, data = curvature).
inline RhsTerms rhs_terms(const flow::SimState& weak, const FieldTriple& f, const FieldHistory& hist = {},
                          const quadrature::DifferenceOptions& bulk = {}) {
  const auto& ph = weak.phase;
  const auto& u = weak.last_solution;
  if (u.data.size() != ph.size()) throw ShapeError("weak state carries no potential for its phase");
  const bool moving = hist.before && hist.after && hist.dt > 0.0;

  const auto aux = aux_potential(ph, f);
  const auto& wt = aux.solution;
  const auto wth = aux_potential_theta(ph, f);

  RhsTerms r;
  r.aux_contaminated = aux.contaminated;
  double uu = 0.0, uw = 0.0, bdry = 0.0, comb = 0.0, ud = 0.0, ud_comb = 0.0;
  for (std::size_t c = 0; c < ph.size(); ++c) {
    const auto& comp = ph[c];
    const auto w = comp.node_weights();
    const auto nrm = comp.node_normals();
    for (std::size_t i = 0; i < comp.size(); ++i) {
      const auto fs = f.sample(comp[i]);
      const Vec2& n = nrm[i];
      const double ui = u.data[c][i], mu = u.density[c][i];
      const double wi = wt.data[c][i], mwi = wt.density[c][i];
      const double Bn = fs.B.dot(n);
      uu += w[i] * ui * mu;
      uw += w[i] * ui * mwi;
      bdry += w[i] * Bn * (ui - wi);
      comb += w[i] * (ui - wi) * (Bn - mwi);

      Vec2 dtxi = Vec2::Zero();
      if (moving) dtxi = (hist.after->sample(comp[i]).xi - hist.before->sample(comp[i]).xi) / hist.dt;
      const Vec2 transport = dtxi + fs.grad_xi * fs.B;
      const Vec2 d = n - fs.xi;
      r.R_dtxi -= w[i] * ((transport + fs.grad_B.transpose() * fs.xi).dot(d) + transport.dot(fs.xi));
      r.R_nablaB -= w[i] * (d.dot(fs.grad_B * d) + (n.dot(fs.xi) - 1.0) * fs.div_B);

      ud += w[i] * fs.theta * (Bn - mu);
      ud_comb += w[i] * (fs.theta * (Bn - mwi) - (ui - wi) * wth.density[c][i]);
    }
  }
  r.R_dissip = -uu + uw + bdry;
  r.R_dissip_combined = -laplace::dirichlet_energy_of_difference(u, wt) + comb;
  r.U_dissip = ud;
  r.U_dissip_combined = ud_comb;

  auto opt = bulk;
  opt.signed_weight = true;
  r.U_dtvartheta = quadrature::integrate_difference(
                       ph, f.reference(),
                       [&](const Vec2& x) {
                         const auto fs = f.sample(x);
                         double dth = 0.0;
                         if (moving) dth = (hist.after->sample(x).theta - hist.before->sample(x).theta) / hist.dt;
                         return dth + fs.B.dot(fs.grad_theta);
                       },
                       opt)
                       .value;
  r.U_nablaB = quadrature::integrate_difference(
                   ph, f.reference(),
                   [&](const Vec2& x) {
                     const auto fs = f.sample(x);
                     return fs.theta * fs.div_B;
                   },
                   opt)
                   .value;
  return r;
}

struct Coercivity {
  double E_rel = 0.0;
  double half_dh_sq = 0.0;  ///< ½∮h′²
  double E_vol = 0.0;
  double half_h_over_ell_sq = 0.0;  ///< ½∮(h/ℓ)²
  double perimeter_ratio = 0.0;     ///< weak / strong perimeter
  double ratio_rel = 1.0;
  double ratio_vol = 1.0;
  double delta = 0.0;  ///< 10·smallness
  bool within = true;  ///< both ratios in [1 − δ, 1 + δ]
};

namespace detail {

inline double safe_ratio(double num, double den) {
  constexpr double tiny = 1e-12;
  if (std::abs(den) <= tiny) return std::abs(num) <= tiny ? 1.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace detail

/// E_rel against ½∮h′² and E_vol against ½∮(h/ℓ)² in the graph regime.
inline Coercivity coercivity_check(const PhaseSet& weak, const PhaseSet& strong, const FieldTriple& f, const HeightFunction& hf) {
  Coercivity c;
  c.E_rel = rel_entropy(weak, f);
  c.E_vol = vol_error(weak, strong, f).value;
  for (std::size_t k = 0; k < strong.size(); ++k) {
    const auto w = strong[k].node_weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
      c.half_dh_sq += 0.5 * w[i] * hf.dh[k][i] * hf.dh[k][i];
      c.half_h_over_ell_sq += 0.5 * w[i] * (hf.h[k][i] / f.ell()) * (hf.h[k][i] / f.ell());
    }
  }
  c.perimeter_ratio = geometry::perimeter(weak) / geometry::perimeter(strong);
  c.ratio_rel = detail::safe_ratio(c.E_rel, c.half_dh_sq);
  c.ratio_vol = detail::safe_ratio(c.E_vol, c.half_h_over_ell_sq);
  c.delta = 10.0 * hf.smallness;
  c.within = std::abs(c.ratio_rel - 1.0) <= c.delta && std::abs(c.ratio_vol - 1.0) <= c.delta;
  return c;
}

struct EntropyParams {
  double Lambda = 10.0;
  double M = 20.0;
  double C = 8.0;
};

struct ErrorReport {
  double E_rel = 0.0;
  double E_vol = 0.0;
  double E_total = 0.0;
  double vol_error_estimate = 0.0;
  Classification classification;
  GraphFit fit;
};

inline ErrorReport error_report(const flow::SimState& weak, const flow::SimState& strong, const FieldTriple& f,
                                const EntropyParams& p = {}) {
  ErrorReport r;
  r.E_rel = rel_entropy(weak.phase, f);
  const auto v = vol_error(weak.phase, strong.phase, f);
  r.E_vol = v.value;
  r.vol_error_estimate = v.error_estimate;
  r.E_total = r.E_rel + r.E_vol;
  r.classification = classify(0.5 * weak.last_solution.dirichlet_energy, r.E_total, f.ell(), p.Lambda, p.M);
  r.fit = fit_graph(weak.phase, strong.phase, p.C, f.ell());
  return r;
}

}  // namespace mslab::entropy
