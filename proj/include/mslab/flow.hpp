#pragma once

// Mullins–Sekerka time stepping and trajectory audits.
//
// Step (implicit scheme): with S the single-layer block, K = ∂_ss + κ² the
// linearized curvature response to a normal displacement and μ the density,
//   [S − dt·K, 1; wᵀ, 0] [μ; c] = [κ; 0],
// then x ← x + dt·μ·n. The explicit scheme drops the dt·K term and needs
// dt ∝ Δs³. Every step is followed by arclength resampling and a uniform
// normal shift that restores the enclosed area.

#include "mslab/common.hpp"
#include "mslab/geometry.hpp"
#include "mslab/laplace.hpp"
#include "mslab/quadrature.hpp"

#include <algorithm>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mslab::flow {

using geometry::InterfaceCurve;
using geometry::PhaseSet;
using laplace::DtnSolution;

enum class Scheme { Implicit, Explicit };

struct FlowControls {
  Scheme scheme = Scheme::Implicit;
  double dt_max = 1e-3;
  double dt_factor = 1.0;    ///< dt ≤ dt_factor·h_min² (implicit)
  double cfl_motion = 0.25;  ///< dt ≤ cfl_motion·h_min / max|V|
  double c_cfl = 0.02;       ///< explicit: dt ≤ c_cfl·h_min³ / max(1, max|V|)
  double fixed_dt = 0.0;     ///< > 0 disables adaptivity
  double output_interval = 0.0;
  double energy_slack = 1e-9;  ///< relative tolerance of the energy check
  double area_tolerance = 1e-12;
  int max_halvings = 20;
  bool adaptive_nodes = true;
  std::size_t min_nodes = 32;
  double extinction_factor = 10.0;  ///< remove components with area < factor·h_ref²
  double contact_factor = 2.0;      ///< topology event below factor·h_ref separation
  bool record_steps = false;
};

struct SimState {
  double time = 0.0;
  PhaseSet phase;
  DtnSolution last_solution;
  double energy = 0.0;
  double area = 0.0;
  std::vector<double> h_ref;  ///< reference node spacing per component
};

enum class EventKind { Extinction, Topology, Rejection };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Rejection;
  std::size_t component = 0;
  std::string detail;
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Extinction: return "extinction";
    case EventKind::Topology: return "topology";
    case EventKind::Rejection: return "rejection";
  }
  return "?";
}

/// Data of one accepted step: the phase it started from and the velocity used.
struct StepRecord {
  double time = 0.0;
  double dt = 0.0;
  PhaseSet start;
  PhaseScalarField velocity;
  double area_shift = 0.0;
};

struct Trajectory {
  std::vector<SimState> states;
  std::vector<double> dt_history;
  std::vector<double> dissipation;  ///< cumulative ∫∫|∇u|², aligned with states
  std::vector<Event> events;
  std::vector<StepRecord> steps;
  double max_area_shift = 0.0;
  bool topology_stop = false;
};

/// V·n per node (n inward): the single-layer density of the curvature problem.
inline PhaseScalarField ms_velocity(const PhaseSet& phase) {
  return laplace::solve_dirichlet_dtn(phase, geometry::curvature(phase)).density;
}

/// Decay rate of the radial mode cos kθ on a circle of radius R under the
/// linearized flow.
inline double linearized_decay_rate(int k, double R) { return 2.0 * k * (k * k - 1.0) / (R * R * R); }

/// Complex amplitude of the radial mode k about the centroid: r(θ) ≈ r̄ + Re(a e^{ikθ}).
inline std::complex<double> mode_amplitude(const InterfaceCurve& c, int k) {
  const auto& p = c.nodes();
  const std::size_t n = p.size();
  Vec2 ctr = Vec2::Zero();
  for (const auto& q : p) ctr += q;
  ctr /= static_cast<double>(n);
  std::complex<double> a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 d0 = p[i] - ctr, d1 = p[(i + 1) % n] - ctr;
    const double t0 = std::atan2(d0.y(), d0.x());
    double dt = std::atan2(d1.y(), d1.x()) - t0;
    dt = std::remainder(dt, 2 * pi);
    const double tm = t0 + 0.5 * dt;
    const double rm = 0.5 * (d0.norm() + d1.norm());
    a += rm * std::polar(1.0, -k * tm) * dt;
  }
  return a / pi;
}

inline SimState make_state(const PhaseSet& phase, double time = 0.0) {
  SimState s;
  s.time = time;
  s.phase = phase;
  s.energy = geometry::perimeter(phase);
  s.area = geometry::enclosed_area(phase);
  for (const auto& c : phase.components()) s.h_ref.push_back(c.mean_spacing());
  if (!phase.empty()) s.last_solution = laplace::solve_dirichlet_dtn(phase, geometry::curvature(phase));
  return s;
}

class StepRejected : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline double min_spacing(const PhaseSet& ph) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& c : ph.components())
    for (std::size_t i = 0; i < c.size(); ++i) h = std::min(h, (c[(i + 1) % c.size()] - c[i]).norm());
  return h;
}

inline double max_abs(const PhaseScalarField& f) {
  double m = 0.0;
  for (const auto& c : f)
    for (double v : c) m = std::max(m, std::abs(v));
  return m;
}

inline std::size_t even_count(double x, std::size_t lo) {
  auto n = static_cast<std::size_t>(std::llround(x));
  n += n % 2;
  return std::max(n, lo);
}

// Node count per component: keep spacing within [h_ref/2, 2·h_ref].
inline std::vector<std::size_t> target_counts(const PhaseSet& ph, const std::vector<double>& h_ref, std::size_t min_nodes) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ph.size(); ++c) {
    const double h = ph[c].mean_spacing();
    if (h < 0.5 * h_ref[c] || h > 2.0 * h_ref[c])
      out.push_back(even_count(ph[c].perimeter() / h_ref[c], min_nodes));
    else
      out.push_back(ph[c].size());
  }
  return out;
}

// Shift all nodes along the normal by one common distance until the total
// area matches the target. Returns the accumulated shift.
inline PhaseSet restore_area(PhaseSet ph, double target, double tol, double* shift) {
  double total = 0.0;
  for (int it = 0; it < 8; ++it) {
    const double A = geometry::enclosed_area(ph);
    if (std::abs(A - target) <= tol * std::abs(target)) break;
    const double delta = (A - target) / geometry::perimeter(ph);
    std::vector<InterfaceCurve> comps;
    for (const auto& c : ph.components()) {
      const auto nrm = c.node_normals();
      std::vector<Vec2> x = c.nodes();
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += delta * nrm[i];
      comps.emplace_back(std::move(x));
    }
    ph = PhaseSet(std::move(comps), ph.box());
    total += delta;
  }
  if (shift) *shift = total;
  return ph;
}

// ∂_ss + κ² on the node polyline, one component.
inline void add_curvature_response(Eigen::MatrixXd& A, std::size_t off, const InterfaceCurve& c,
                                   const CurveScalarField& kappa, double scale) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t im = wrap(static_cast<std::ptrdiff_t>(i) - 1, n), ip = (i + 1) % n;
    const double hm = (c[i] - c[im]).norm(), hp = (c[ip] - c[i]).norm();
    const double f = 2.0 / (hm + hp);
    A(off + i, off + ip) += scale * f / hp;
    A(off + i, off + im) += scale * f / hm;
    A(off + i, off + i) += scale * (-f / hp - f / hm + kappa[i] * kappa[i]);
  }
}

inline double min_separation(const InterfaceCurve& a, const InterfaceCurve& b) {
  double d2 = std::numeric_limits<double>::infinity();
  const auto& q = b.nodes();
  for (const auto& p : a.nodes())
    for (std::size_t j = 0; j < q.size(); ++j) {
      double f;
      d2 = std::min(d2, geometry::detail::point_segment_distance2(p, q[j], q[(j + 1) % q.size()], &f));
    }
  return std::sqrt(d2);
}

struct TrialStep {
  SimState state;
  PhaseScalarField velocity;
  double dissipation = 0.0;
  double area_shift = 0.0;
};

// One attempt; throws StepRejected (or a geometry error) on failure.
inline TrialStep attempt(const SimState& s, double dt, const FlowControls& ctl) {
  const PhaseSet& ph = s.phase;
  const auto kappa = geometry::curvature(ph);
  auto sl = laplace::assemble_single_layer(ph);
  Eigen::MatrixXd block = sl.matrix;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(block.rows(), block.cols());
  if (ctl.scheme == Scheme::Implicit) {
    for (std::size_t c = 0; c < ph.size(); ++c) add_curvature_response(K, sl.offsets[c], ph[c], kappa[c], 1.0);
    block -= dt * K;
  }
  laplace::DtnSolver solver(ph, std::move(sl), block);
  const Eigen::Index n = block.rows();
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = flatten(kappa);
  rhs[n] = 0.0;
  const Eigen::VectorXd sol = solver.solve_bordered(rhs);
  const Eigen::VectorXd mu = sol.head(n);
  if (!mu.allFinite()) throw StepRejected("non-finite velocity");
  const Eigen::VectorXd u = rhs.head(n) + dt * (K * mu);

  TrialStep out;
  out.velocity = laplace::unflatten(mu, solver.single_layer().offsets);
  out.dissipation = dt * solver.single_layer().weights.cwiseProduct(u).dot(mu);

  std::vector<InterfaceCurve> moved;
  for (std::size_t c = 0; c < ph.size(); ++c) {
    const auto nrm = ph[c].node_normals();
    std::vector<Vec2> x = ph[c].nodes();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * out.velocity[c][i] * nrm[i];
    InterfaceCurve curve(std::move(x));
    if (!geometry::is_simple(curve)) throw StepRejected("self-intersection in component " + std::to_string(c));
    moved.push_back(geometry::resample(curve, ph[c].size()));
  }
  PhaseSet next(std::move(moved), ph.box());
  next = restore_area(std::move(next), s.area, ctl.area_tolerance, &out.area_shift);

  const double e = geometry::perimeter(next);
  if (e > s.energy * (1.0 + ctl.energy_slack))
    throw StepRejected("energy increase " + geometry::format_double(e - s.energy));

  out.state.time = s.time + dt;
  out.state.phase = std::move(next);
  out.state.energy = e;
  out.state.area = geometry::enclosed_area(out.state.phase);
  out.state.h_ref = s.h_ref;
  return out;
}

inline SimState adapt_nodes(const SimState& s, const FlowControls& ctl) {
  if (!ctl.adaptive_nodes || s.phase.empty()) return s;
  const auto counts = target_counts(s.phase, s.h_ref, ctl.min_nodes);
  bool change = false;
  for (std::size_t c = 0; c < counts.size(); ++c) change = change || counts[c] != s.phase[c].size();
  if (!change) return s;
  SimState out = s;
  out.phase = restore_area(geometry::resample(s.phase, counts), s.area, ctl.area_tolerance, nullptr);
  out.energy = geometry::perimeter(out.phase);
  out.area = geometry::enclosed_area(out.phase);
  return out;
}

// Step with up to max_halvings retries. `accepted_dt` receives the dt used.
inline TrialStep step_with_retries(const SimState& s, double dt, const FlowControls& ctl, std::vector<Event>* log,
                                   double* accepted_dt) {
  for (int k = 0; k <= ctl.max_halvings; ++k) {
    try {
      auto r = attempt(s, dt, ctl);
      if (accepted_dt) *accepted_dt = dt;
      return r;
    } catch (const Error& e) {
      if (log) log->push_back({s.time, EventKind::Rejection, 0, std::string(e.what()) + " at dt " + geometry::format_double(dt)});
      dt *= 0.5;
    }
  }
  throw SolverError("step rejected after " + std::to_string(ctl.max_halvings + 1) + " attempts at t = " + geometry::format_double(s.time));
}

}  // namespace detail

/// Advance by dt (halving on rejection). The returned time is s.time plus the accepted dt.
inline SimState step(const SimState& s, double dt, const FlowControls& ctl = {}) {
  if (!(dt > 0.0)) throw Error("step needs dt > 0");
  if (ctl.scheme == Scheme::Explicit) {
    const double h = detail::min_spacing(s.phase);
    const double vmax = s.last_solution.density.empty() ? 0.0 : detail::max_abs(s.last_solution.density);
    const double lim = ctl.c_cfl * h * h * h / std::max(1.0, vmax);
    if (dt > lim) throw Error("explicit step exceeds dt_max = " + geometry::format_double(lim));
  }
  auto r = detail::step_with_retries(detail::adapt_nodes(s, ctl), dt, ctl, nullptr, nullptr);
  r.state.last_solution = laplace::solve_dirichlet_dtn(r.state.phase, geometry::curvature(r.state.phase));
  return std::move(r.state);
}

/// A run that could not continue; carries everything up to the failure.
class RunFailed : public SolverError {
 public:
  RunFailed(const std::string& what, Trajectory partial) : SolverError(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

inline Trajectory run(const PhaseSet& initial, double t_end, const FlowControls& ctl = {}) {
  if (!(t_end > 0.0)) throw Error("run needs t_end > 0");
  Trajectory tr;
  SimState s = make_state(initial);
  tr.states.push_back(s);
  tr.dissipation.push_back(0.0);
  double cum = 0.0;

  std::vector<double> outputs;
  if (ctl.output_interval > 0.0)
    for (int k = 1; k * ctl.output_interval < t_end * (1 - 1e-12); ++k) outputs.push_back(k * ctl.output_interval);
  outputs.push_back(t_end);
  std::size_t next_out = 0;

  double vmax = s.phase.empty() ? 0.0 : detail::max_abs(s.last_solution.density);
  double dt_prev = 0.0;
  while (next_out < outputs.size() && !s.phase.empty()) {
    s = detail::adapt_nodes(s, ctl);
    const double h = detail::min_spacing(s.phase);
    const double t_out = outputs[next_out];
    double dt;
    if (ctl.fixed_dt > 0.0) {
      dt = ctl.fixed_dt;
    } else if (ctl.scheme == Scheme::Explicit) {
      dt = std::min(ctl.dt_max, ctl.c_cfl * h * h * h / std::max(1.0, vmax));
    } else {
      dt = std::min(ctl.dt_max, ctl.dt_factor * h * h);
      if (vmax > 0.0) dt = std::min(dt, ctl.cfl_motion * h / vmax);
      if (dt_prev > 0.0) dt = std::min(dt, 2.0 * dt_prev);
    }
    bool hits_output = false;
    if (s.time + dt >= t_out - 1e-12 * std::max(1.0, t_out)) {
      dt = t_out - s.time;
      hits_output = true;
    }

    double used = dt;
    detail::TrialStep r;
    try {
      r = detail::step_with_retries(s, dt, ctl, &tr.events, &used);
    } catch (const SolverError& e) {
      throw RunFailed(e.what(), std::move(tr));
    }
    if (used < dt) hits_output = false;
    if (ctl.record_steps) tr.steps.push_back({s.time, used, s.phase, r.velocity, r.area_shift});
    cum += r.dissipation;
    tr.dt_history.push_back(used);
    tr.max_area_shift = std::max(tr.max_area_shift, std::abs(r.area_shift));
    vmax = detail::max_abs(r.velocity);
    dt_prev = used;
    s = std::move(r.state);
    if (hits_output) s.time = t_out;

    // extinction
    std::vector<InterfaceCurve> keep;
    std::vector<double> keep_h;
    bool removed = false;
    for (std::size_t c = 0; c < s.phase.size(); ++c) {
      if (s.phase[c].area() < ctl.extinction_factor * s.h_ref[c] * s.h_ref[c]) {
        tr.events.push_back({s.time, EventKind::Extinction, c, "area " + geometry::format_double(s.phase[c].area())});
        removed = true;
      } else {
        keep.push_back(s.phase[c]);
        keep_h.push_back(s.h_ref[c]);
      }
    }
    if (removed) {
      s.phase = PhaseSet(std::move(keep), s.phase.box());
      s.h_ref = std::move(keep_h);
      s.energy = geometry::perimeter(s.phase);
      s.area = geometry::enclosed_area(s.phase);
      vmax = 0.0;
      dt_prev = 0.0;
    }

    // contact between components
    bool contact = false;
    for (std::size_t a = 0; a < s.phase.size() && !contact; ++a)
      for (std::size_t b = a + 1; b < s.phase.size() && !contact; ++b) {
        const double d = detail::min_separation(s.phase[a], s.phase[b]);
        if (d < ctl.contact_factor * std::min(s.h_ref[a], s.h_ref[b])) {
          tr.events.push_back({s.time, EventKind::Topology, a, "components " + std::to_string(a) + " and " +
                                                                   std::to_string(b) + " within " + geometry::format_double(d)});
          contact = true;
        }
      }

    if (hits_output || removed || contact || s.phase.empty()) {
      if (!s.phase.empty()) s.last_solution = laplace::solve_dirichlet_dtn(s.phase, geometry::curvature(s.phase));
      else s.last_solution = DtnSolution{};
    }
    if (hits_output || contact || s.phase.empty()) {
      tr.states.push_back(s);
      tr.dissipation.push_back(cum);
      if (hits_output) ++next_out;
    }
    if (contact) {
      tr.topology_stop = true;
      break;
    }
  }
  return tr;
}

/// r(T) = E(T) + ∫₀ᵀ∫|∇u|² − E(0) at each output time before the first
/// extinction or topology event; returns the value of largest magnitude
/// (≤ 0 up to discretization error).
inline double dissipation_residual(const Trajectory& tr) {
  if (tr.states.size() < 2) throw Error("dissipation_residual needs at least two states");
  double t_stop = std::numeric_limits<double>::infinity();
  for (const auto& e : tr.events)
    if (e.kind != EventKind::Rejection) t_stop = std::min(t_stop, e.time);
  double worst = 0.0;
  for (std::size_t k = 1; k < tr.states.size() && tr.states[k].time < t_stop; ++k) {
    const double r = tr.states[k].energy + tr.dissipation[k] - tr.states[0].energy;
    if (std::abs(r) > std::abs(worst)) worst = r;
  }
  return worst;
}

using SpaceTimeFn = std::function<double(const Vec2&, double)>;

/// ∫_{A(T)}ζ − ∫_{A(0)}ζ − ∫∫_A ∂_tζ + ∫∫ ∇u·∇ζ with ∫∇u·∇ζ = −∮ ζ⟦∂_n u⟧ = ∮ ζ V·n.
/// Needs a trajectory recorded with record_steps.
inline double weak_form_residual(const Trajectory& tr, const SpaceTimeFn& zeta, const SpaceTimeFn& dt_zeta) {
  if (tr.states.size() < 2) throw Error("weak_form_residual needs at least two states");
  if (tr.steps.empty()) throw Error("weak_form_residual needs recorded steps");
  const auto& first = tr.states.front();
  const auto& last = tr.states.back();
  double r = quadrature::integrate_green(last.phase, [&](const Vec2& x) { return zeta(x, last.time); }) -
             quadrature::integrate_green(first.phase, [&](const Vec2& x) { return zeta(x, first.time); });
  for (const auto& st : tr.steps) {
    const double tm = st.time + 0.5 * st.dt;
    r -= st.dt * quadrature::integrate_green(st.start, [&](const Vec2& x) { return dt_zeta(x, tm); });
    for (std::size_t c = 0; c < st.start.size(); ++c) {
      const auto& comp = st.start[c];
      const auto w = comp.node_weights();
      const auto nrm = comp.node_normals();
      for (std::size_t i = 0; i < comp.size(); ++i) {
        const Vec2 xm = comp[i] + 0.5 * st.dt * st.velocity[c][i] * nrm[i];
        r += st.dt * w[i] * zeta(xm, tm) * st.velocity[c][i];
      }
    }
  }
  return r;
}

inline void write_csv(const Trajectory& tr, std::ostream& os) {
  os << "t,energy,area,dissipation_cum,max_speed,n_components\n";
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const auto& s = tr.states[k];
    const double vmax = s.last_solution.density.empty() ? 0.0 : detail::max_abs(s.last_solution.density);
    os << geometry::format_double(s.time) << ',' << geometry::format_double(s.energy) << ','
       << geometry::format_double(s.area) << ',' << geometry::format_double(tr.dissipation[k]) << ','
       << geometry::format_double(vmax) << ',' << s.phase.size() << '\n';
  }
}

inline nlohmann::json events_json(const Trajectory& tr) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : tr.events)
    ev.push_back({{"time", e.time}, {"kind", to_string(e.kind)}, {"component", e.component}, {"detail", e.detail}});
  return ev;
}

}  // namespace mslab::flow
