#pragma once

// Weak-strong audit along two trajectories sampled at the same output times.
//
// Per output time: error report, classification and the right-hand side terms.
// Per output interval: the relative entropy residual
//   (E_rel(t₊) − E_rel(t₋))/Δt − ½(ΣR(t₋) + ΣR(t₊))
// (≤ 0 up to discretization error), the same for E_vol against ΣU (= 0), and
// the growth rate (ΔE/Δt)/E that enters the fitted Grönwall constant Ĉ.

#include "mslab/entropy.hpp"
#include "mslab/flow.hpp"

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace mslab::entropy {

struct StabilityParams {
  EntropyParams entropy;
  double gronwall_rel_tol = 1e-6;
  double gronwall_abs_tol = 1e-10;  ///< also the floor below which E is treated as zero
  double inequality_tol = 0.05;     ///< relative to max(E_total(0), max weak dissipation)
  quadrature::DifferenceOptions bulk;
};

struct TraceRow {
  double t = 0.0;
  ErrorReport report;
  RhsTerms terms;
  double dissipation = 0.0;  ///< ∫|∇u|² of the weak state
  double C_hat = 0.0;        ///< running fitted constant up to this row
};

struct StabilityAudit {
  std::vector<TraceRow> rows;
  double ell = 0.0;
  double C_hat = 0.0;
  bool gronwall_ok = true;
  double gronwall_worst = 0.0;  ///< max of E(t) − E(0)·exp(Ĉt) over rows
  std::vector<double> entropy_residuals;
  std::vector<double> bulk_residuals;
  double scale = 0.0;
  bool inequality_ok = true;
  bool aborted = false;
  std::string abort_reason;

  bool passed() const { return !aborted && gronwall_ok; }
};

inline StabilityAudit audit_stability(const flow::Trajectory& weak, const flow::Trajectory& strong,
                                      const StabilityParams& p = {}) {
  StabilityAudit a;
  const std::size_t n = std::min(weak.states.size(), strong.states.size());
  if (weak.states.size() != strong.states.size()) {
    a.aborted = true;
    a.abort_reason = "trajectories have different numbers of output states";
  }
  std::size_t usable = 0;
  for (; usable < n; ++usable) {
    const auto& w = weak.states[usable];
    const auto& s = strong.states[usable];
    if (std::abs(w.time - s.time) > 1e-9 * std::max(1.0, std::abs(s.time))) {
      a.aborted = true;
      a.abort_reason = "output times differ at index " + std::to_string(usable);
      break;
    }
    if (w.phase.size() != s.phase.size() || s.phase.empty()) {
      a.aborted = true;
      a.abort_reason = "topology differs at t = " + geometry::format_double(s.time);
      break;
    }
  }
  if (usable == 0) return a;

  a.ell = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < usable; ++k) a.ell = std::min(a.ell, geometry::tubular_width(strong.states[k].phase));

  std::vector<FieldTriple> fields;
  fields.reserve(usable);
  for (std::size_t k = 0; k < usable; ++k) {
    const auto& s = strong.states[k];
    fields.emplace_back(s.phase, s.last_solution.density, a.ell);
  }

  for (std::size_t k = 0; k < usable; ++k) {
    TraceRow row;
    row.t = weak.states[k].time;
    row.report = error_report(weak.states[k], strong.states[k], fields[k], p.entropy);
    FieldHistory hist;
    if (usable > 1) {
      const std::size_t lo = k == 0 ? 0 : k - 1, hi = k + 1 < usable ? k + 1 : k;
      hist.before = &fields[lo];
      hist.after = &fields[hi];
      hist.dt = strong.states[hi].time - strong.states[lo].time;
    }
    row.terms = rhs_terms(weak.states[k], fields[k], hist, p.bulk);
    row.dissipation = weak.states[k].last_solution.dirichlet_energy;
    a.rows.push_back(std::move(row));
  }

  // fitted Grönwall constant
  double c_hat = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < a.rows.size(); ++k) {
    const double e0 = a.rows[k].report.E_total, e1 = a.rows[k + 1].report.E_total;
    const double dt = a.rows[k + 1].t - a.rows[k].t;
    if (e0 > p.gronwall_abs_tol && dt > 0) c_hat = std::max(c_hat, (e1 - e0) / (dt * e0));
    a.rows[k + 1].C_hat = std::isfinite(c_hat) ? c_hat : 0.0;
  }
  a.C_hat = std::isfinite(c_hat) ? c_hat : 0.0;

  const double E0 = a.rows.front().report.E_total;
  const double t0 = a.rows.front().t;
  for (const auto& r : a.rows) {
    const double bound = E0 * std::exp(a.C_hat * (r.t - t0));
    const double excess = r.report.E_total - bound;
    a.gronwall_worst = std::max(a.gronwall_worst, excess);
    if (excess > p.gronwall_rel_tol * E0 + p.gronwall_abs_tol) a.gronwall_ok = false;
  }

  a.scale = E0;
  for (const auto& r : a.rows) a.scale = std::max(a.scale, r.dissipation);
  for (std::size_t k = 0; k + 1 < a.rows.size(); ++k) {
    const auto &r0 = a.rows[k], &r1 = a.rows[k + 1];
    const double dt = r1.t - r0.t;
    const double res = (r1.report.E_rel - r0.report.E_rel) / dt - 0.5 * (r0.terms.sum_R() + r1.terms.sum_R());
    const double bres = (r1.report.E_vol - r0.report.E_vol) / dt - 0.5 * (r0.terms.sum_U() + r1.terms.sum_U());
    a.entropy_residuals.push_back(res);
    a.bulk_residuals.push_back(bres);
    if (res > p.inequality_tol * a.scale) a.inequality_ok = false;
  }
  return a;
}

inline void write_trace_csv(const StabilityAudit& a, std::ostream& os) {
  using geometry::format_double;
  os << "t,E_rel,E_vol,E_total,class,smallness,R_dissip,R_dtxi,R_nablaB,U_dissip,U_dtvartheta,U_nablaB,gronwall_Chat\n";
  for (const auto& r : a.rows) {
    const auto& e = r.report;
    os << format_double(r.t) << ',' << format_double(e.E_rel) << ',' << format_double(e.E_vol) << ','
       << format_double(e.E_total) << ',' << to_string(e.classification.label) << ','
       << (e.fit.graph ? format_double(e.fit.graph->smallness) : std::string("nan")) << ','
       << format_double(r.terms.R_dissip) << ',' << format_double(r.terms.R_dtxi) << ','
       << format_double(r.terms.R_nablaB) << ',' << format_double(r.terms.U_dissip) << ','
       << format_double(r.terms.U_dtvartheta) << ',' << format_double(r.terms.U_nablaB) << ','
       << format_double(r.C_hat) << '\n';
  }
}

}  // namespace mslab::entropy
