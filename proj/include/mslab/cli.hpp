#pragma once

// Scenario configuration and the run / stability / converge commands.
//
// Exit codes: 0 success, 2 configuration error, 3 solver error, 4 audit failure.

#include "mslab/flow.hpp"
#include "mslab/grid_oracle.hpp"
#include "mslab/stability.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>

namespace mslab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { Ok = 0, ConfigFailure = 2, SolverFailure = 3, AuditFailure = 4 };

struct ScenarioConfig {
  std::string name = "scenario";
  json initial;
  geometry::Box box;
  double t_end = 0.0;
  double output_interval = 0.0;
  flow::FlowControls controls;
  entropy::EntropyParams entropy;
  bool oracle = false;
  unsigned seed = 0;
  fs::path base_dir;  ///< relative file paths in `initial` resolve here
};

struct StabilityConfig {
  std::string name = "stability";
  ScenarioConfig weak;
  ScenarioConfig strong;
  entropy::StabilityParams params;
};

struct ConvergeConfig {
  ScenarioConfig scenario;
  std::string study = "flow";
  std::vector<double> resolutions;
  int mode = 3;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Best-effort source line of a dotted key path, for diagnostics.
inline std::string where(const std::string& text, const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string key = "\"" + (dot == std::string::npos ? path : path.substr(dot + 1)) + "\"";
  const auto pos = text.find(key);
  if (pos == std::string::npos) return "";
  return "line " + std::to_string(line_col(text, pos).first) + ": ";
}

class Reader {
 public:
  Reader(const json& j, std::string path, const std::string& text) : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const std::string p = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    throw ConfigError(where(text_, p) + "'" + (p.empty() ? "<root>" : p) + "': " + msg);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, std::optional<double> def = std::nullopt) const {
    seen_.push_back(key);
    if (!j_.contains(key)) {
      if (def) return *def;
      fail(key, "missing required number");
    }
    if (!j_.at(key).is_number()) fail(key, "expected a number");
    const double v = j_.at(key).get<double>();
    if (!std::isfinite(v)) fail(key, "must be finite");
    return v;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) const {
    const double v = number(key, def);
    if (!(v > 0.0)) fail(key, "must be positive");
    return v;
  }

  double nonnegative(const std::string& key, double def) const {
    const double v = number(key, def);
    if (v < 0.0) fail(key, "must be nonnegative");
    return v;
  }

  long long integer(const std::string& key, std::optional<long long> def = std::nullopt) const {
    seen_.push_back(key);
    if (!j_.contains(key)) {
      if (def) return *def;
      fail(key, "missing required integer");
    }
    if (!j_.at(key).is_number_integer()) fail(key, "expected an integer");
    return j_.at(key).get<long long>();
  }

  std::size_t nodes(const std::string& key, std::optional<long long> def = std::nullopt) const {
    const long long n = integer(key, def);
    if (n < static_cast<long long>(laplace::detail::min_nodes)) fail(key, "node count must be at least 32");
    return static_cast<std::size_t>(n);
  }

  bool boolean(const std::string& key, bool def) const {
    seen_.push_back(key);
    if (!j_.contains(key)) return def;
    if (!j_.at(key).is_boolean()) fail(key, "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) const {
    seen_.push_back(key);
    if (!j_.contains(key)) {
      if (def) return *def;
      fail(key, "missing required string");
    }
    if (!j_.at(key).is_string()) fail(key, "expected a string");
    return j_.at(key).get<std::string>();
  }

  Vec2 point(const std::string& key, Vec2 def) const {
    seen_.push_back(key);
    if (!j_.contains(key)) return def;
    const auto& a = j_.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) fail(key, "expected [x, y]");
    return {a[0].get<double>(), a[1].get<double>()};
  }

  std::vector<double> numbers(const std::string& key) const {
    seen_.push_back(key);
    if (!j_.contains(key)) return {};
    const auto& a = j_.at(key);
    if (!a.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : a) {
      if (!v.is_number()) fail(key, "expected an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }

  Reader child(const std::string& key) const {
    seen_.push_back(key);
    if (!j_.contains(key)) fail(key, "missing required section");
    return Reader(j_.at(key), path_.empty() ? key : path_ + "." + key, text_);
  }

  const json& raw(const std::string& key) const {
    seen_.push_back(key);
    return j_.at(key);
  }

  void no_unknown_keys() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) fail(it.key(), "unknown key");
  }

  const std::string& text() const { return text_; }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  const std::string& text_;
  mutable std::vector<std::string> seen_;
};

inline json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    const auto col_at = msg.find("column ");
    if (col_at != std::string::npos && msg.find(": ", col_at) != std::string::npos) msg = msg.substr(msg.find(": ", col_at) + 2);
    throw ConfigError(origin + ": line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void validate_shape(const Reader& r) {
  const std::string type = r.string("type");
  if (type == "circle") {
    r.point("center", Vec2::Zero());
    r.positive("R");
    r.nodes("n");
  } else if (type == "perturbed_circle") {
    r.point("center", Vec2::Zero());
    r.positive("R");
    const double eps = r.number("eps");
    if (std::abs(eps) >= 1.0) r.fail("eps", "must satisfy |eps| < 1");
    if (r.integer("k") < 1) r.fail("k", "mode must be at least 1");
    r.nodes("n");
  } else if (type == "ellipse") {
    r.point("center", Vec2::Zero());
    r.positive("a");
    r.positive("b");
    r.nodes("n");
  } else if (type == "two_circles") {
    r.point("center_a", {-2.0, 0.0});
    r.point("center_b", {2.0, 0.0});
    r.positive("R_a");
    r.positive("R_b");
    r.nodes("n");
  } else if (type == "file") {
    r.string("path");
  } else {
    r.fail("type", "unknown shape '" + type + "' (circle, perturbed_circle, ellipse, two_circles, file)");
  }
  if (r.has("noise")) {
    const auto nr = r.child("noise");
    nr.nonnegative("amplitude", 0.0);
    if (nr.integer("modes", 8) < 2) nr.fail("modes", "must be at least 2");
    nr.no_unknown_keys();
  }
  r.no_unknown_keys();
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const json& j, const std::string& text, const std::string& path = "") {
  detail::Reader r(j, path, text);
  ScenarioConfig c;
  c.name = r.string("name", "scenario");
  detail::validate_shape(r.child("initial"));
  c.initial = r.raw("initial");
  if (r.has("box")) {
    const auto b = r.numbers("box");
    if (b.size() != 4 || !(b[0] < b[2]) || !(b[1] < b[3])) r.fail("box", "expected [xmin, ymin, xmax, ymax] with min < max");
    c.box = geometry::Box{b[0], b[1], b[2], b[3]};
  }
  c.t_end = r.positive("t_end");
  c.output_interval = r.nonnegative("output_interval", 0.0);
  if (r.has("solver")) {
    const auto s = r.child("solver");
    auto& ctl = c.controls;
    const std::string scheme = s.string("scheme", "implicit");
    if (scheme == "implicit") ctl.scheme = flow::Scheme::Implicit;
    else if (scheme == "explicit") ctl.scheme = flow::Scheme::Explicit;
    else s.fail("scheme", "expected 'implicit' or 'explicit'");
    ctl.dt_max = s.positive("dt_max", ctl.dt_max);
    ctl.dt_factor = s.positive("dt_factor", ctl.dt_factor);
    ctl.cfl_motion = s.positive("cfl_motion", ctl.cfl_motion);
    ctl.c_cfl = s.positive("c_cfl", ctl.c_cfl);
    ctl.fixed_dt = s.nonnegative("fixed_dt", ctl.fixed_dt);
    ctl.energy_slack = s.nonnegative("energy_slack", ctl.energy_slack);
    ctl.area_tolerance = s.positive("area_tolerance", ctl.area_tolerance);
    const long long mh = s.integer("max_halvings", ctl.max_halvings);
    if (mh < 0 || mh > 60) s.fail("max_halvings", "must lie in [0, 60]");
    ctl.max_halvings = static_cast<int>(mh);
    ctl.adaptive_nodes = s.boolean("adaptive_nodes", ctl.adaptive_nodes);
    ctl.min_nodes = s.nodes("min_nodes", static_cast<long long>(ctl.min_nodes));
    ctl.extinction_factor = s.positive("extinction_factor", ctl.extinction_factor);
    ctl.contact_factor = s.positive("contact_factor", ctl.contact_factor);
    s.no_unknown_keys();
  }
  c.controls.output_interval = c.output_interval;
  if (r.has("entropy")) {
    const auto e = r.child("entropy");
    c.entropy.Lambda = e.positive("Lambda", c.entropy.Lambda);
    c.entropy.M = e.positive("M", c.entropy.M);
    c.entropy.C = e.positive("C", c.entropy.C);
    e.no_unknown_keys();
  }
  c.oracle = r.boolean("oracle", false);
  const long long seed = r.integer("seed", 0);
  if (seed < 0 || seed > 0xffffffffLL) r.fail("seed", "must lie in [0, 2^32)");
  c.seed = static_cast<unsigned>(seed);
  r.no_unknown_keys();
  return c;
}

namespace detail {

template <class F>
auto with_origin(const fs::path& p, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(p.string(), 0) == 0) throw;
    throw ConfigError(p.string() + ": " + what);
  }
}

}  // namespace detail

inline ScenarioConfig load_scenario(const fs::path& p) {
  const std::string text = detail::read_file(p);
  const json j = detail::parse_text(text, p.string());
  auto c = detail::with_origin(p, [&] { return parse_scenario(j, text); });
  c.base_dir = p.parent_path();
  return c;
}

/// {"weak": scenario, "strong": scenario | "path.json", "stability": {...}}
inline StabilityConfig parse_stability(const json& j, const std::string& text, const fs::path& base) {
  detail::Reader r(j, "", text);
  StabilityConfig c;
  c.name = r.string("name", "stability");
  c.weak = parse_scenario(r.raw("weak"), text, "weak");
  c.weak.base_dir = base;
  if (!r.has("strong")) r.fail("strong", "missing required section");
  const json& js = r.raw("strong");
  if (js.is_string()) {
    c.strong = load_scenario(base / js.get<std::string>());
  } else {
    c.strong = parse_scenario(js, text, "strong");
    c.strong.base_dir = base;
  }
  if (r.has("stability")) {
    const auto s = r.child("stability");
    c.params.gronwall_rel_tol = s.nonnegative("gronwall_rel_tol", c.params.gronwall_rel_tol);
    c.params.gronwall_abs_tol = s.nonnegative("gronwall_abs_tol", c.params.gronwall_abs_tol);
    c.params.inequality_tol = s.nonnegative("inequality_tol", c.params.inequality_tol);
    s.no_unknown_keys();
  }
  c.params.entropy = c.weak.entropy;
  r.no_unknown_keys();
  const auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
  if (!same(c.weak.t_end, c.strong.t_end) || !same(c.weak.output_interval, c.strong.output_interval))
    throw ConfigError("weak and strong runs need the same t_end and output_interval");
  return c;
}

inline StabilityConfig load_stability(const fs::path& p) {
  const std::string text = detail::read_file(p);
  const json j = detail::parse_text(text, p.string());
  return detail::with_origin(p, [&] { return parse_stability(j, text, p.parent_path()); });
}

/// A scenario plus {"converge": {"study": ..., "resolutions": [...], "mode": k}}.
inline ConvergeConfig load_converge(const fs::path& p) {
  const std::string text = detail::read_file(p);
  json j = detail::parse_text(text, p.string());
  return detail::with_origin(p, [&] {
    ConvergeConfig c;
    if (!j.is_object() || !j.contains("converge")) throw ConfigError("'converge': missing required section");
    const detail::Reader r(j.at("converge"), "converge", text);
    c.study = r.string("study", "flow");
    if (c.study != "flow" && c.study != "flow_dt" && c.study != "curvature" && c.study != "dtn")
      r.fail("study", "expected flow, flow_dt, curvature or dtn");
    c.resolutions = r.numbers("resolutions");
    const long long k = r.integer("mode", 3);
    if (k < 1) r.fail("mode", "must be at least 1");
    c.mode = static_cast<int>(k);
    r.no_unknown_keys();
    json rest = j;
    rest.erase("converge");
    c.scenario = parse_scenario(rest, text);
    c.scenario.base_dir = p.parent_path();
    return c;
  });
}

// ---------------------------------------------------------------------------
// Initial phases

namespace detail {

inline geometry::InterfaceCurve add_noise(const geometry::InterfaceCurve& c, double amplitude, int modes, std::mt19937& rng) {
  if (amplitude == 0.0) return c;
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(modes + 1), b(modes + 1);
  for (int m = 2; m <= modes; ++m) {
    a[m] = g(rng) / m;
    b[m] = g(rng) / m;
  }
  Vec2 centre = Vec2::Zero();
  for (const auto& p : c.nodes()) centre += p;
  centre /= static_cast<double>(c.size());
  std::vector<Vec2> pts;
  for (const auto& p : c.nodes()) {
    const Vec2 d = p - centre;
    const double th = std::atan2(d.y(), d.x());
    double delta = 0.0;
    for (int m = 2; m <= modes; ++m) delta += a[m] * std::cos(m * th) + b[m] * std::sin(m * th);
    pts.push_back(p + amplitude * delta * d.normalized());
  }
  return geometry::InterfaceCurve(std::move(pts));
}

// Node counts scaled by `refine` (used by converge and derived strong runs).
inline std::vector<geometry::InterfaceCurve> shapes(const json& j, const fs::path& base, double refine) {
  const std::string type = j.at("type");
  auto n_of = [&](const char* key) {
    return std::max<std::size_t>(laplace::detail::min_nodes,
                                 static_cast<std::size_t>(std::llround(j.at(key).get<double>() * refine)));
  };
  auto center = [&](const char* key, Vec2 def) {
    return j.contains(key) ? Vec2(j.at(key)[0].get<double>(), j.at(key)[1].get<double>()) : def;
  };
  if (type == "circle") return {geometry::circle(center("center", Vec2::Zero()), j.at("R"), n_of("n"))};
  if (type == "perturbed_circle")
    return {geometry::perturbed_circle(center("center", Vec2::Zero()), j.at("R"), j.at("eps"), j.at("k"), n_of("n"))};
  if (type == "ellipse") return {geometry::ellipse(center("center", Vec2::Zero()), j.at("a"), j.at("b"), n_of("n"))};
  if (type == "two_circles")
    return {geometry::circle(center("center_a", {-2.0, 0.0}), j.at("R_a"), n_of("n")),
            geometry::circle(center("center_b", {2.0, 0.0}), j.at("R_b"), n_of("n"))};
  const fs::path p = base / j.at("path").get<std::string>();
  try {
    const auto ph = geometry::phase_from_json(read_file(p));
    return ph.components();
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  } catch (const GeometryError& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline geometry::PhaseSet initial_phase(const ScenarioConfig& c, double refine = 1.0) {
  auto comps = detail::shapes(c.initial, c.base_dir, refine);
  if (c.initial.contains("noise")) {
    const auto& nz = c.initial.at("noise");
    std::mt19937 rng(c.seed);
    for (auto& comp : comps)
      comp = detail::add_noise(comp, nz.value("amplitude", 0.0), nz.value("modes", 8), rng);
  }
  for (const auto& comp : comps)
    for (const auto& p : comp.nodes())
      if (!c.box.contains(p)) throw ConfigError("initial interface leaves the box");
  return geometry::PhaseSet(std::move(comps), c.box);
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::mutex& io_mutex() {
  static std::mutex m;
  return m;
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::lock_guard<std::mutex> lock(io_mutex());
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string state_name(std::size_t k) {
  std::ostringstream os;
  os << "state_" << std::setw(4) << std::setfill('0') << k << ".json";
  return os.str();
}

inline void write_trajectory(const flow::Trajectory& tr, const fs::path& dir) {
  std::ostringstream csv;
  flow::write_csv(tr, csv);
  write_text(dir / "trajectory.csv", csv.str());
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    json st;
    st["time"] = tr.states[k].time;
    st["phase"] = json::parse(geometry::to_json(tr.states[k].phase));
    write_text(dir / "states" / state_name(k), dump(st));
  }
  write_text(dir / "events.json", dump(flow::events_json(tr)));
}

inline json describe(const ScenarioConfig& c) {
  return {{"name", c.name}, {"initial", c.initial}, {"t_end", c.t_end}, {"output_interval", c.output_interval},
          {"seed", c.seed}, {"oracle", c.oracle}};
}

// Mean-relative L² difference between the boundary-integral and grid velocities.
inline double oracle_velocity_check(const geometry::PhaseSet& phase) {
  const auto kappa = geometry::curvature(phase);
  const auto sol = laplace::solve_dirichlet_dtn(phase, kappa);
  const auto& b = phase.box();
  const double half = 4.0 * std::max(b.width(), b.height());
  const double cx = 0.5 * (b.xmin + b.xmax), cy = 0.5 * (b.ymin + b.ymax);
  const geometry::PhaseSet far(phase.components(), geometry::Box{cx - half, cy - half, cx + half, cy + half});
  laplace::GridOptions opt;
  opt.core_spacing = 1.0 / 64;
  const auto gj = laplace::grid_jump(laplace::grid_oracle_solve(far, kappa, 0, opt), far, kappa);
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < phase.size(); ++c)
    for (std::size_t i = 0; i < phase[c].size(); ++i) {
      const double w = sol.weights[c][i];
      num += w * std::pow(gj[c][i] - sol.jump[c][i], 2);
      den += w * std::pow(sol.jump[c][i], 2);
    }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace detail

struct RunResult {
  flow::Trajectory trajectory;
  json diagnostics;
};

inline RunResult run_scenario(const ScenarioConfig& c, double refine = 1.0) {
  auto ctl = c.controls;
  ctl.record_steps = true;
  RunResult r;
  r.trajectory = flow::run(initial_phase(c, refine), c.t_end, ctl);
  const auto& tr = r.trajectory;
  json d;
  d["scenario"] = detail::describe(c);
  d["dissipation_residual"] = flow::dissipation_residual(tr);
  const auto zero = [](const Vec2&, double) { return 0.0; };
  d["weak_form_residual"] = {
      {"one", flow::weak_form_residual(tr, [](const Vec2&, double) { return 1.0; }, zero)},
      {"x1", flow::weak_form_residual(tr, [](const Vec2& x, double) { return x.x(); }, zero)},
      {"x1_squared", flow::weak_form_residual(tr, [](const Vec2& x, double) { return x.x() * x.x(); }, zero)}};
  d["initial_energy"] = tr.states.front().energy;
  d["final_energy"] = tr.states.back().energy;
  d["initial_area"] = tr.states.front().area;
  d["final_area"] = tr.states.back().area;
  d["steps"] = tr.dt_history.size();
  d["max_area_shift"] = tr.max_area_shift;
  d["topology_stop"] = tr.topology_stop;
  d["events"] = tr.events.size();
  if (c.oracle) d["oracle_velocity_rel_l2"] = detail::oracle_velocity_check(tr.states.front().phase);
  r.diagnostics = std::move(d);
  return r;
}

inline int cmd_run(const ScenarioConfig& c, const fs::path& out, std::ostream& log) {
  try {
    auto r = run_scenario(c);
    detail::write_trajectory(r.trajectory, out);
    detail::write_text(out / "diagnostics.json", detail::dump(r.diagnostics));
    log << "run " << c.name << ": " << r.trajectory.states.size() << " states, E " << geometry::format_double(
               r.trajectory.states.front().energy) << " -> " << geometry::format_double(r.trajectory.states.back().energy)
        << '\n';
    return Ok;
  } catch (const flow::RunFailed& e) {
    detail::write_trajectory(e.partial(), out);
    log << "solver error: " << e.what() << '\n';
    return SolverFailure;
  }
}

inline int cmd_stability(const StabilityConfig& c, const fs::path& out, std::ostream& log) {
  auto launch = [](const ScenarioConfig& s) { return std::async(std::launch::async, [&s] { return run_scenario(s); }); };
  auto fw = launch(c.weak);
  auto fs_ = launch(c.strong);
  RunResult weak, strong;
  std::string failure;
  for (auto* pr : {&fw, &fs_}) {
    try {
      (pr == &fw ? weak : strong) = pr->get();
    } catch (const flow::RunFailed& e) {
      detail::write_trajectory(e.partial(), out / (pr == &fw ? "weak" : "strong"));
      failure = e.what();
    }
  }
  if (!failure.empty()) {
    log << "solver error: " << failure << '\n';
    return SolverFailure;
  }
  detail::write_trajectory(weak.trajectory, out / "weak");
  detail::write_trajectory(strong.trajectory, out / "strong");
  detail::write_text(out / "weak" / "diagnostics.json", detail::dump(weak.diagnostics));
  detail::write_text(out / "strong" / "diagnostics.json", detail::dump(strong.diagnostics));

  const auto a = entropy::audit_stability(weak.trajectory, strong.trajectory, c.params);
  std::ostringstream trace;
  entropy::write_trace_csv(a, trace);
  detail::write_text(out / "stability_trace.csv", trace.str());
  json rep;
  rep["name"] = c.name;
  rep["strong_solution"] = "finer-resolution trajectory of the same scheme, standing in for the exact classical solution";
  rep["weak"] = detail::describe(c.weak);
  rep["strong"] = detail::describe(c.strong);
  rep["ell"] = a.ell;
  rep["C_hat"] = a.C_hat;
  rep["gronwall_ok"] = a.gronwall_ok;
  rep["gronwall_worst_excess"] = a.gronwall_worst;
  rep["inequality_ok"] = a.inequality_ok;
  rep["inequality_scale"] = a.scale;
  rep["entropy_residuals"] = a.entropy_residuals;
  rep["bulk_residuals"] = a.bulk_residuals;
  rep["aborted"] = a.aborted;
  if (a.aborted) rep["abort_reason"] = a.abort_reason;
  rep["E_total_initial"] = a.rows.empty() ? 0.0 : a.rows.front().report.E_total;
  rep["E_total_final"] = a.rows.empty() ? 0.0 : a.rows.back().report.E_total;
  detail::write_text(out / "stability_report.json", detail::dump(rep));
  log << "stability " << c.name << ": C_hat " << geometry::format_double(a.C_hat) << ", gronwall "
      << (a.gronwall_ok ? "ok" : "violated") << (a.aborted ? ", aborted: " + a.abort_reason : std::string()) << '\n';
  return a.passed() ? Ok : AuditFailure;
}

// ---------------------------------------------------------------------------
// Convergence studies

struct ConvergeRow {
  double parameter = 0.0;
  double error = 0.0;
  double order = std::numeric_limits<double>::quiet_NaN();
  double energy = std::numeric_limits<double>::quiet_NaN();
  double dissipation_residual = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void fill_orders(std::vector<ConvergeRow>& rows) {
  constexpr double floor = 1e-15;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double ratio = rows[k - 1].parameter / rows[k].parameter;
    const double e0 = std::max(rows[k - 1].error, floor), e1 = std::max(rows[k].error, floor);
    rows[k].order = std::log(e0 / e1) / std::log(ratio > 1 ? ratio : 1.0 / ratio);
  }
}

}  // namespace detail

inline std::vector<ConvergeRow> converge_study(const ConvergeConfig& c) {
  std::vector<ConvergeRow> rows;
  const auto& res = c.resolutions;
  if (res.size() < 2) throw ConfigError("'converge.resolutions': need at least two entries");
  const bool dt_study = c.study == "flow_dt";
  for (std::size_t k = 0; k < res.size(); ++k) {
    if (!(res[k] > 0.0)) throw ConfigError("'converge.resolutions': entries must be positive");
    if (k > 0 && (dt_study ? !(res[k] < res[k - 1]) : !(res[k] > res[k - 1])))
      throw ConfigError(std::string("'converge.resolutions': must be strictly ") + (dt_study ? "decreasing" : "increasing"));
    if (!dt_study && res[k] < laplace::detail::min_nodes) throw ConfigError("'converge.resolutions': node counts must be at least 32");
  }

  if (c.study == "curvature") {
    // closed-form ellipse curvature at the parametric nodes
    const double a = c.scenario.initial.value("a", 2.0), b = c.scenario.initial.value("b", 1.0);
    for (double n : res) {
      const auto curve = geometry::ellipse({0, 0}, a, b, static_cast<std::size_t>(n));
      const auto kap = geometry::curvature(curve);
      double err = 0.0;
      for (std::size_t i = 0; i < kap.size(); ++i) {
        const double t = 2 * pi * i / n;
        const double exact = a * b / std::pow(a * a * std::sin(t) * std::sin(t) + b * b * std::cos(t) * std::cos(t), 1.5);
        err = std::max(err, std::abs(kap[i] - exact));
      }
      rows.push_back({n, err});
    }
  } else if (c.study == "dtn") {
    // unit circle, data cos kθ: jump −2k cos kθ
    const int k = c.mode;
    for (double n : res) {
      const geometry::PhaseSet ph({geometry::circle({0, 0}, 1.0, static_cast<std::size_t>(n))}, geometry::Box{});
      PhaseScalarField g(1);
      for (const auto& p : ph[0].nodes()) g[0].push_back(std::cos(k * std::atan2(p.y(), p.x())));
      const auto sol = laplace::solve_dirichlet_dtn(ph, g);
      double err = 0.0;
      for (std::size_t i = 0; i < g[0].size(); ++i) err = std::max(err, std::abs(sol.jump[0][i] + 2.0 * k * g[0][i]));
      rows.push_back({n, err});
    }
  } else {
    std::vector<flow::Trajectory> runs;
    for (double r : res) {
      ScenarioConfig s = c.scenario;
      double refine = 1.0;
      if (dt_study) {
        s.controls.fixed_dt = r;
      } else {
        refine = r / c.scenario.initial.value("n", r);
      }
      auto tr = flow::run(initial_phase(s, refine), s.t_end, s.controls);
      ConvergeRow row;
      row.parameter = r;
      row.energy = tr.states.back().energy;
      row.dissipation_residual = flow::dissipation_residual(tr);
      rows.push_back(row);
      runs.push_back(std::move(tr));
    }
    const auto& ref = runs.back().states.back().phase;
    for (std::size_t k = 0; k + 1 < runs.size(); ++k) rows[k].error = geometry::hausdorff_distance(runs[k].states.back().phase, ref);
    rows.pop_back();
  }
  detail::fill_orders(rows);
  return rows;
}

inline int cmd_converge(const ConvergeConfig& c, const fs::path& out, std::ostream& log) {
  try {
    const auto rows = converge_study(c);
    std::ostringstream csv;
    csv << "level,parameter,error,order,energy,dissipation_residual\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      csv << k << ',' << geometry::format_double(r.parameter) << ',' << geometry::format_double(r.error) << ','
          << geometry::format_double(r.order) << ',' << geometry::format_double(r.energy) << ','
          << geometry::format_double(r.dissipation_residual) << '\n';
    }
    detail::write_text(out / "converge.csv", csv.str());
    double min_order = std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (std::isfinite(r.order)) min_order = std::min(min_order, r.order);
    detail::write_text(out / "converge.json",
                       detail::dump({{"study", c.study}, {"levels", rows.size()}, {"min_order", min_order}}));
    log << "converge " << c.study << ": min order " << geometry::format_double(min_order) << '\n';
    return Ok;
  } catch (const flow::RunFailed& e) {
    log << "solver error: " << e.what() << '\n';
    return SolverFailure;
  }
}

}  // namespace mslab::cli
