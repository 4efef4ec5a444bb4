// Acceptance run: one PASS/FAIL line per criterion.

#include "mslab/entropy.hpp"
#include "mslab/flow.hpp"
#include "mslab/hanzawa.hpp"
#include "mslab/hilbert.hpp"
#include "mslab/laplace.hpp"
#include "mslab/stability.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace mslab;
using namespace mslab::geometry;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

PhaseScalarField polar(const PhaseSet& ph, const std::function<double(double)>& g) {
  PhaseScalarField out(ph.size());
  for (std::size_t c = 0; c < ph.size(); ++c)
    for (const auto& p : ph[c].nodes()) out[c].push_back(g(std::atan2(p.y(), p.x())));
  return out;
}

Outcome circle_equilibrium() {
  const PhaseSet ph({circle({0, 0}, 1.0, 256)}, Box{});
  flow::FlowControls c;
  c.output_interval = 0.05;
  const auto tr = flow::run(ph, 0.5, c);
  double vmax = 0.0;
  for (const auto& s : tr.states)
    for (const auto& comp : s.last_solution.density)
      for (double v : comp) vmax = std::max(vmax, std::abs(v));
  const double drift = hausdorff_distance(tr.states.back().phase, ph);
  return {vmax <= 1e-5 && drift <= 1e-4, fmt("max |V| %.2e (<= 1e-5), Hausdorff drift %.2e (<= 1e-4)", vmax, drift)};
}

Outcome dtn_spectrum() {
  const PhaseSet ph({circle({0, 0}, 1.0, 256)}, Box{});
  laplace::DtnSolver solver(ph);
  double worst_jump = 0.0, worst_energy = 0.0;
  for (int k = 1; k <= 5; ++k) {
    const auto g = polar(ph, [k](double t) { return std::cos(k * t); });
    const auto sol = solver.solve(g);
    for (std::size_t i = 0; i < g[0].size(); ++i)
      worst_jump = std::max(worst_jump, std::abs(sol.jump[0][i] - oracle::circle_mode_jump(k, std::atan2(ph[0][i].y(), ph[0][i].x()))) / (2.0 * k));
    worst_energy = std::max(worst_energy, std::abs(sol.dirichlet_energy / oracle::circle_mode_energy(k) - 1.0));
  }
  return {worst_jump <= 0.01 && worst_energy <= 0.01,
          fmt("k=1..5: max jump error %.2e, max energy error %.2e (relative, <= 1e-2)", worst_jump, worst_energy)};
}

Outcome ripening_mass() {
  const PhaseSet ph({circle({-2, 0}, 0.5, 256), circle({2, 0}, 1.0, 256)}, Box{});
  flow::FlowControls c;
  const auto probe = flow::run(ph, 1.0, c);
  double t_ext = -1.0;
  for (const auto& e : probe.events)
    if (e.kind == flow::EventKind::Extinction) {
      t_ext = e.time;
      break;
    }
  if (t_ext <= 0.0) return {false, "no extinction observed before t = 1"};
  c.output_interval = 0.8 * t_ext / 20;
  const auto tr = flow::run(ph, 0.8 * t_ext, c);
  const double a0 = tr.states.front().area;
  double drift = 0.0;
  for (const auto& s : tr.states) drift = std::max(drift, std::abs(s.area - a0) / a0);
  const bool intact = tr.states.back().phase.size() == 2;
  return {drift <= 1e-4 && intact, fmt("extinction at t = %.4f, max relative area drift to 0.8 t_ext %.2e (<= 1e-4)", t_ext, drift)};
}

Outcome energy_dissipation() {
  double res[2] = {0, 0}, e0 = 0.0;
  bool monotone = true;
  const std::size_t ns[2] = {256, 512};
  for (int i = 0; i < 2; ++i) {
    const PhaseSet ph({perturbed_circle({0, 0}, 1.0, 0.05, 3, ns[i])}, Box{});
    flow::FlowControls c;
    c.output_interval = 0.01;
    c.dt_max = 1.0;  // dt follows h²
    const auto tr = flow::run(ph, 0.05, c);
    for (std::size_t k = 1; k < tr.states.size(); ++k) monotone = monotone && tr.states[k].energy <= tr.states[k - 1].energy;
    res[i] = std::abs(flow::dissipation_residual(tr));
    if (i == 0) e0 = tr.states.front().energy;
  }
  const bool ok = monotone && res[0] <= 1e-2 * e0 && res[1] <= 0.5 * res[0];
  return {ok, fmt("monotone %s, |r| n=256 %.2e (<= %.2e), n=512 %.2e (ratio %.2f <= 0.5)", monotone ? "yes" : "no", res[0],
                  1e-2 * e0, res[1], res[1] / res[0])};
}

Outcome coercivity() {
  const PhaseSet strong({circle({0, 0}, 1.0, 256)}, Box{});
  const auto f = entropy::build_fields(strong);
  constexpr double floor = 1e-5;  // quadrature resolution of the ratios
  bool ok = true;
  std::string d;
  double lo = 2, hi = 0;
  for (int k : {2, 3}) {
    double dev_rel[3], dev_vol[3];
    int i = 0;
    for (double eps : {0.02, 0.01, 0.005}) {
      const auto weak = entropy::graph_phase(strong, polar(strong, [&](double t) { return eps * std::cos(k * t); }));
      const auto fit = entropy::fit_graph(weak, strong, 8.0, f.ell());
      if (!fit.graph) return {false, "graph fit failed"};
      const auto c = entropy::coercivity_check(weak, strong, f, *fit.graph);
      for (double r : {c.ratio_rel, c.ratio_vol}) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      dev_rel[i] = std::abs(c.ratio_rel - 1);
      dev_vol[i] = std::abs(c.ratio_vol - 1);
      ++i;
    }
    const bool tight = dev_rel[2] < dev_rel[1] && dev_rel[1] < dev_rel[0] && dev_vol[2] <= std::max(dev_vol[0], floor);
    ok = ok && tight;
    d += fmt("k=%d |rel-1| %.1e>%.1e>%.1e |vol-1| %.1e..%.1e; ", k, dev_rel[0], dev_rel[1], dev_rel[2], dev_vol[0], dev_vol[2]);
  }
  ok = ok && lo >= 0.9 && hi <= 1.1;
  d.resize(d.size() - 2);
  return {ok, fmt("ratios in [%.5f, %.5f]; ", lo, hi) + d};
}

Outcome hanzawa_identities() {
  const PhaseSet strong({circle({0, 0}, 1.0, 256)}, Box{});
  const hanzawa::HanzawaMap m(strong, polar(strong, [](double t) { return 0.01 * std::cos(3 * t); }));
  const auto r = hanzawa::verify_map(m, 100, 2024);
  return {r.jacobian.max <= 1e-5 && r.determinant.max <= 1e-12,
          fmt("100 samples: max |grad Psi - FD| %.2e (<= 1e-5), det formula rel. error %.2e (<= 1e-12)", r.jacobian.max,
              r.determinant.max)};
}

Outcome interpolation() {
  const PhaseSet ph({circle({0, 0}, 1.0, 256)}, Box{});
  const double ell = 0.9;
  std::mt19937 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  double sup = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> a(17), b(17);
    for (int k = 0; k <= 16; ++k) {
      a[k] = g(rng);
      b[k] = g(rng);
    }
    const auto f = polar(ph, [&](double t) {
      double v = 0.0;
      for (int k = 0; k <= 16; ++k) v += a[k] * std::cos(k * t) + b[k] * std::sin(k * t);
      return v;
    });
    sup = std::max(sup, hilbert::interpolation_ratio(ph, f, ell));
  }
  auto closed = [ell](int k) { return std::sqrt(2 * pi * k) / (std::sqrt(pi) / ell + k * std::sqrt(pi)); };
  const double r1 = hilbert::interpolation_ratio(ph, polar(ph, [](double t) { return std::cos(t); }), ell);
  const double r8 = hilbert::interpolation_ratio(ph, polar(ph, [](double t) { return std::cos(8 * t); }), ell);
  const double e1 = std::abs(r1 / closed(1) - 1), e8 = std::abs(r8 / closed(8) - 1);
  return {sup <= 3.0 && e1 <= 0.02 && e8 <= 0.02,
          fmt("sup over 40 random polynomials %.3f (<= 3); cos t %.4f vs %.4f, cos 8t %.4f vs %.4f (2%%)", sup, r1, closed(1), r8,
              closed(8))};
}

Outcome classifier() {
  const PhaseSet strong({circle({0, 0}, 1.0, 256)}, Box{});
  const auto f = entropy::build_fields(strong);
  const auto ss = flow::make_state(strong);
  entropy::EntropyParams p;  // Λ = 10, M = 20, C = 8
  const auto w = flow::make_state(PhaseSet({perturbed_circle({0, 0}, 1.0, 0.001, 3, 256)}, Box{}));
  const auto r = entropy::error_report(w, ss, f, p);
  const bool good = r.classification.label == entropy::TimeClass::Good && r.fit.graph && r.fit.small &&
                    r.fit.graph->smallness <= 1.0 / (16 * 8);

  const auto spurious = flow::make_state(PhaseSet({perturbed_circle({0, 0}, 1.0, 0.001, 3, 256), circle({3, 3}, 0.4, 96)}, Box{}));
  const auto r2 = entropy::error_report(spurious, ss, f, p);
  entropy::EntropyParams large = p;
  large.M = 1e4;
  const auto r3 = entropy::error_report(spurious, ss, f, large);
  const bool flips = !r2.fit.graph && r3.classification.label == entropy::TimeClass::Bad2;
  return {good && flips, fmt("perturbed: %s, smallness %.4f (<= %.4f); with far component: graph %s (clause %s), M=1e4 -> %s",
                             to_string(r.classification.label), r.fit.graph ? r.fit.graph->smallness : -1.0, 1.0 / 128,
                             r2.fit.graph ? "present" : "absent", r2.fit.failed == entropy::FitClause::C ? "c" : "other",
                             to_string(r3.classification.label))};
}

entropy::StabilityAudit stability_run() {
  const double eps = 0.02;
  flow::FlowControls c;
  c.output_interval = 0.002;
  const auto weak = flow::run(PhaseSet({perturbed_circle({0, 0}, 1.0, eps, 3, 256)}, Box{}), 0.06, c);
  const auto strong = flow::run(PhaseSet({circle({0, 0}, std::sqrt(1 + 0.5 * eps * eps), 512)}, Box{}), 0.06, c);
  return entropy::audit_stability(weak, strong);
}

Outcome gronwall(const entropy::StabilityAudit& a) {
  if (a.aborted) return {false, "audit aborted: " + a.abort_reason};
  // linearized amplitude decay exp(−σ₃ t); decay time: amplitude down to 10%
  const double t_d = std::log(10.0) / flow::linearized_decay_rate(3, 1.0);
  double e_td = -1.0;
  for (std::size_t k = 0; k + 1 < a.rows.size(); ++k) {
    const auto &r0 = a.rows[k], &r1 = a.rows[k + 1];
    if (r0.t <= t_d && t_d <= r1.t) {
      const double w = (t_d - r0.t) / (r1.t - r0.t);
      e_td = std::exp((1 - w) * std::log(r0.report.E_total) + w * std::log(r1.report.E_total));
    }
  }
  const double e0 = a.rows.front().report.E_total;
  const bool decayed = e_td >= 0.0 && e_td <= 0.1 * e0;
  return {a.gronwall_ok && decayed, fmt("C_hat %.2f, bound holds at all %zu outputs (worst excess %.1e); E_total(t_d=%.4f)/E_total(0) = %.4f (<= 0.1)",
                                        a.C_hat, a.rows.size(), a.gronwall_worst, t_d, e_td / e0)};
}

Outcome inequality(const entropy::StabilityAudit& a) {
  if (a.aborted) return {false, "audit aborted: " + a.abort_reason};
  double worst = -1e300;
  for (double r : a.entropy_residuals) worst = std::max(worst, r);
  return {a.inequality_ok, fmt("max residual %.3e over %zu intervals (<= %.3e = 0.05 x %.3f)", worst, a.entropy_residuals.size(),
                               0.05 * a.scale, a.scale)};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const char* name, double budget, const std::function<Outcome()>& fn) {
    const auto t0 = clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    if (secs > budget) {
      o.pass = false;
      o.detail += fmt(" [runtime %.1f s exceeds %.0f s]", secs, budget);
    }
    failures += o.pass ? 0 : 1;
    std::printf("AC%-2d %s  %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "circle equilibrium", 30, circle_equilibrium);
  report(2, "DtN spectral oracle", 10, dtn_spectrum);
  report(3, "mass conservation", 300, ripening_mass);
  report(4, "energy dissipation", 300, energy_dissipation);
  report(5, "coercivity", 60, coercivity);
  report(6, "Hanzawa identities", 10, hanzawa_identities);
  report(7, "interpolation estimate", 30, interpolation);
  report(8, "classifier and graph gate", 60, classifier);

  entropy::StabilityAudit audit;
  const auto t0 = clock::now();
  report(9, "Gronwall stability audit", 600, [&] {
    audit = stability_run();
    return gronwall(audit);
  });
  const double audit_secs = std::chrono::duration<double>(clock::now() - t0).count();
  report(10, "preliminary inequality audit", 600 - audit_secs, [&] { return inequality(audit); });

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
