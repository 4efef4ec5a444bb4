#pragma once

// H^{1/2} norm of the gradient flow: ‖f‖² = ∫|∇u_f|² for the harmonic
// extension u_f of mean-zero interface data f. On the boundary this is
// −∮ f ⟦∂_n u_f⟧ = ∮ f μ_f.

#include "mslab/geometry.hpp"
#include "mslab/laplace.hpp"

#include <cmath>

namespace mslab::hilbert {

using geometry::PhaseSet;

struct HalfNormResult {
  double norm_sq = 0.0;
  laplace::DtnSolution extension;  ///< extension of the mean-zero data
  double mean_removed = 0.0;
};

namespace detail {

// A constant shift of the data moves only the additive constant of the layer
// representation, so the mean is removed after the solve.
inline HalfNormResult finish(laplace::DtnSolution sol) {
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < sol.data.size(); ++c)
    for (std::size_t i = 0; i < sol.data[c].size(); ++i) {
      num += sol.weights[c][i] * sol.data[c][i];
      den += sol.weights[c][i];
    }
  HalfNormResult out;
  out.mean_removed = num / den;
  for (auto& c : sol.data)
    for (double& v : c) v -= out.mean_removed;
  sol.constant -= out.mean_removed;
  double e = 0.0;
  for (std::size_t c = 0; c < sol.data.size(); ++c)
    for (std::size_t i = 0; i < sol.data[c].size(); ++i) e += sol.weights[c][i] * sol.data[c][i] * sol.density[c][i];
  sol.dirichlet_energy = e;
  out.norm_sq = std::max(e, 0.0);
  out.extension = std::move(sol);
  return out;
}

inline PhaseScalarField combine(const PhaseScalarField& f, double a, const PhaseScalarField& g) {
  PhaseScalarField out = f;
  for (std::size_t c = 0; c < out.size(); ++c)
    for (std::size_t i = 0; i < out[c].size(); ++i) out[c][i] += a * g[c][i];
  return out;
}

}  // namespace detail

inline HalfNormResult hms_half_norm(const PhaseSet& strong, const PhaseScalarField& f) {
  return detail::finish(laplace::solve_dirichlet_dtn(strong, f));
}

/// ⟨f, g⟩ by polarization, sharing one factorization.
inline double hms_inner(const PhaseSet& strong, const PhaseScalarField& f, const PhaseScalarField& g) {
  const laplace::DtnSolver solver(strong);
  const double plus = detail::finish(solver.solve(detail::combine(f, 1.0, g))).norm_sq;
  const double minus = detail::finish(solver.solve(detail::combine(f, -1.0, g))).norm_sq;
  return 0.25 * (plus - minus);
}

/// ‖f‖_{H^{1/2}} / (ℓ⁻¹‖f‖_{L²} + ‖∂_s f‖_{L²}) for the mean-zero part of f; 0 for constant f.
inline double interpolation_ratio(const PhaseSet& strong, const PhaseScalarField& f, double ell) {
  if (!(ell > 0.0) || !std::isfinite(ell)) throw Error("interpolation_ratio: ell must be positive");
  const auto r = hms_half_norm(strong, f);
  const auto& g = r.extension.data;
  double l2 = 0.0, d2 = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto dg = geometry::tangential_derivative(strong[c], g[c]);
    for (std::size_t i = 0; i < g[c].size(); ++i) {
      l2 += r.extension.weights[c][i] * g[c][i] * g[c][i];
      d2 += r.extension.weights[c][i] * dg[i] * dg[i];
    }
  }
  const double den = std::sqrt(l2) / ell + std::sqrt(d2);
  constexpr double tiny = 1e-12;
  if (den <= tiny) return 0.0;
  return std::sqrt(r.norm_sq) / den;
}

}  // namespace mslab::hilbert
