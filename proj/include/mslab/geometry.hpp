#pragma once

// Closed interface curves, phases bounded by them, and the differential
// geometry used throughout: curvature, nearest-point projection, signed
// distance and an admissible tubular neighborhood width.
//
// Conventions: components are stored counter-clockwise so the phase lies to
// the left, the normal n points into the phase, the signed distance s is
// positive inside, and a disk of radius R has curvature +1/R.

#include "mslab/common.hpp"
#include "mslab/spline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mslab::geometry {

class InterfaceCurve {
 public:
  InterfaceCurve() = default;

  explicit InterfaceCurve(std::vector<Vec2> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 3) throw GeometryError("interface curve needs at least 3 nodes");
    for (const auto& p : nodes_)
      if (!std::isfinite(p.x()) || !std::isfinite(p.y())) throw GeometryError("non-finite node coordinate");
    double chord_min = std::numeric_limits<double>::infinity();
    double shoelace = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Vec2& a = nodes_[i];
      const Vec2& b = nodes_[(i + 1) % nodes_.size()];
      chord_min = std::min(chord_min, (b - a).norm());
      shoelace += 0.5 * cross(a, b);
    }
    if (!(chord_min > 0.0)) throw GeometryError("coincident consecutive nodes");
    if (shoelace < 0.0) std::reverse(nodes_.begin() + 1, nodes_.end());
    spline_ = std::make_shared<const CurveSpline>(nodes_);
    if (!(spline_->length() > 1e-12)) throw GeometryError("degenerate curve: perimeter below tolerance");
  }

  const std::vector<Vec2>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const Vec2& operator[](std::size_t i) const { return nodes_[i]; }
  /// Components are normalized to positive orientation on construction.
  bool orientation() const { return true; }
  const CurveSpline& spline() const { return *spline_; }

  double perimeter() const { return spline_->length(); }
  double area() const { return spline_->signed_area(); }
  double mean_spacing() const { return perimeter() / static_cast<double>(size()); }
  double parameter(std::size_t i) const { return spline_->knot(i); }

  /// Inward unit normals at the nodes.
  std::vector<Vec2> node_normals() const {
    std::vector<Vec2> n(size());
    for (std::size_t i = 0; i < size(); ++i) n[i] = spline_->normal(parameter(i));
    return n;
  }

  /// Trapezoid arclength weights: half the spline length of the two adjacent segments.
  std::vector<double> node_weights() const {
    const std::size_t n = size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t im = wrap(static_cast<std::ptrdiff_t>(i) - 1, n);
      const double lm = spline_->arclength_at_knot(im + 1) - spline_->arclength_at_knot(im);
      const double lp = spline_->arclength_at_knot(i + 1) - spline_->arclength_at_knot(i);
      w[i] = 0.5 * (lm + lp);
    }
    return w;
  }

  /// Dense polyline through the spline, `per_segment` points per segment.
  std::vector<Vec2> refined(int per_segment) const {
    std::vector<Vec2> pts;
    pts.reserve(size() * per_segment);
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& s = spline_->segment(i);
      for (int k = 0; k < per_segment; ++k) pts.push_back(s.value(s.h * k / per_segment));
    }
    return pts;
  }

 private:
  std::vector<Vec2> nodes_;
  std::shared_ptr<const CurveSpline> spline_;
};

struct Box {
  double xmin = -4, ymin = -4, xmax = 4, ymax = 4;

  bool contains(const Vec2& p) const { return p.x() > xmin && p.x() < xmax && p.y() > ymin && p.y() < ymax; }
  double distance_to_boundary(const Vec2& p) const {
    return std::min({p.x() - xmin, xmax - p.x(), p.y() - ymin, ymax - p.y()});
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

namespace detail {

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

inline double point_segment_distance2(const Vec2& p, const Vec2& a, const Vec2& b, double* frac) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (frac) *frac = t;
  return (a + t * ab - p).squaredNorm();
}

/// Crossing-number point-in-polygon test.
inline bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

}  // namespace detail

/// True if the polygon through the nodes has no crossing non-adjacent edges.
inline bool is_simple(const InterfaceCurve& c) {
  const auto& p = c.nodes();
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 &a = p[i], &b = p[(i + 1) % n];
    const Vec2 lo = a.cwiseMin(b), hi = a.cwiseMax(b);
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      const Vec2 &c0 = p[j], &d0 = p[(j + 1) % n];
      if (std::max(c0.x(), d0.x()) < lo.x() || std::min(c0.x(), d0.x()) > hi.x() ||
          std::max(c0.y(), d0.y()) < lo.y() || std::min(c0.y(), d0.y()) > hi.y())
        continue;
      if (detail::segments_cross(a, b, c0, d0)) return false;
    }
  }
  return true;
}

/// A finite union of disjoint interface curves inside a rectangular domain.
class PhaseSet {
 public:
  PhaseSet() = default;

  PhaseSet(std::vector<InterfaceCurve> components, Box box) : components_(std::move(components)), box_(box) {
    if (!(box_.xmax > box_.xmin && box_.ymax > box_.ymin)) throw GeometryError("invalid domain box");
    for (const auto& c : components_) {
      for (const auto& p : c.nodes())
        if (!box_.contains(p)) throw GeometryError("interface node outside the domain box");
      if (!(c.area() > 0.0)) throw GeometryError("component with nonpositive enclosed area");
    }
    for (std::size_t i = 0; i < components_.size(); ++i)
      for (std::size_t j = i + 1; j < components_.size(); ++j)
        if (!disjoint(components_[i], components_[j]))
          throw GeometryError("components " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  }

  const std::vector<InterfaceCurve>& components() const { return components_; }
  const InterfaceCurve& operator[](std::size_t i) const { return components_[i]; }
  std::size_t size() const { return components_.size(); }
  bool empty() const { return components_.empty(); }
  const Box& box() const { return box_; }

  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& c : components_) n += c.size();
    return n;
  }

  /// Inside test against the node polygons (crossing number).
  bool contains(const Vec2& p) const {
    for (const auto& c : components_)
      if (detail::point_in_polygon(c.nodes(), p)) return true;
    return false;
  }

  static bool disjoint(const InterfaceCurve& a, const InterfaceCurve& b) {
    const auto& p = a.nodes();
    const auto& q = b.nodes();
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j)
        if (detail::segments_cross(p[i], p[(i + 1) % p.size()], q[j], q[(j + 1) % q.size()])) return false;
    return !detail::point_in_polygon(p, q[0]) && !detail::point_in_polygon(q, p[0]);
  }

 private:
  std::vector<InterfaceCurve> components_;
  Box box_;
};

/// n nodes equispaced in arclength along the curve's spline, starting at node 0.
inline InterfaceCurve resample(const InterfaceCurve& curve, std::size_t n) {
  if (n < 8) throw ResolutionError("resample needs n >= 8");
  const auto& sp = curve.spline();
  const double L = sp.length();
  if (!(L > 1e-12)) throw GeometryError("degenerate curve: perimeter below tolerance");
  std::vector<Vec2> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = sp.position(sp.parameter_at_arclength(L * k / n));
  return InterfaceCurve(std::move(out));
}

inline PhaseSet resample(const PhaseSet& phase, const std::vector<std::size_t>& counts) {
  std::vector<InterfaceCurve> comps;
  for (std::size_t i = 0; i < phase.size(); ++i) comps.push_back(resample(phase[i], counts[i]));
  return PhaseSet(std::move(comps), phase.box());
}

/// Nodal curvature from centered second differences of the chord-length
/// parametrization (three-point formulas for unequal spacing).
inline CurveScalarField curvature(const InterfaceCurve& curve) {
  const auto& p = curve.nodes();
  const std::size_t n = p.size();
  CurveScalarField k(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& xm = p[wrap(static_cast<std::ptrdiff_t>(i) - 1, n)];
    const Vec2& x0 = p[i];
    const Vec2& xp = p[(i + 1) % n];
    const double hm = (x0 - xm).norm(), hp = (xp - x0).norm();
    const double den = hm * hp * (hm + hp);
    const Vec2 d1 = (hm * hm * xp - hp * hp * xm + (hp * hp - hm * hm) * x0) / den;
    const Vec2 d2 = 2.0 * (hm * xp - (hm + hp) * x0 + hp * xm) / den;
    k[i] = cross(d1, d2) / std::pow(d1.norm(), 3);
  }
  return k;
}

inline PhaseScalarField curvature(const PhaseSet& phase) {
  PhaseScalarField out;
  for (const auto& c : phase.components()) out.push_back(curvature(c));
  return out;
}

/// d f/ds at the nodes from the periodic spline interpolant of f.
inline CurveScalarField tangential_derivative(const InterfaceCurve& c, const CurveScalarField& f) {
  if (f.size() != c.size()) throw ShapeError("field length differs from node count");
  const auto& sp = c.spline();
  const PeriodicScalarSpline g(sp, f);
  CurveScalarField d(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) d[i] = g.derivative(sp.knot(i)) / sp.first(sp.knot(i)).norm();
  return d;
}

inline double enclosed_area(const PhaseSet& phase) {
  double a = 0.0;
  for (const auto& c : phase.components()) a += c.area();
  return a;
}

inline double perimeter(const PhaseSet& phase) {
  double l = 0.0;
  for (const auto& c : phase.components()) l += c.perimeter();
  return l;
}

struct Projection {
  Vec2 point = Vec2::Zero();
  std::size_t component = 0;
  double parameter = 0.0;  ///< spline parameter on the component
  double arclength = 0.0;  ///< arclength coordinate from node 0
  double signed_distance = 0.0;
  Vec2 normal = Vec2::Zero();  ///< inward normal at the projected point
  Vec2 tangent = Vec2::Zero();
  double curvature = 0.0;  ///< spline curvature at the projected point
  bool ambiguous = false;  ///< |s| >= tubular width: uniqueness not guaranteed
};

namespace detail {

// Newton iteration for the stationary point of |c(t) - x|^2 starting at t0.
inline double refine_foot(const CurveSpline& sp, const Vec2& x, double t0, double step_cap) {
  double t = t0;
  for (int it = 0; it < 60; ++it) {
    const Vec2 c = sp.position(t), d1 = sp.first(t), d2 = sp.second(t);
    const Vec2 r = c - x;
    const double f = r.dot(d1);
    double fp = d1.squaredNorm() + r.dot(d2);
    if (fp <= 0.25 * d1.squaredNorm()) fp = d1.squaredNorm();
    double dt = std::clamp(f / fp, -step_cap, step_cap);
    t -= dt;
    if (std::abs(dt) < 1e-14 * (1.0 + std::abs(t))) break;
  }
  return t;
}

}  // namespace detail

inline Projection project_onto(const InterfaceCurve& curve, std::size_t component, const Vec2& x) {
  const auto& p = curve.nodes();
  const std::size_t n = p.size();
  double best = std::numeric_limits<double>::infinity(), frac = 0.0;
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double f;
    const double d2 = detail::point_segment_distance2(x, p[i], p[(i + 1) % n], &f);
    if (d2 < best) {
      best = d2;
      seg = i;
      frac = f;
    }
  }
  const auto& sp = curve.spline();
  const double h = sp.segment(seg).h;
  const double t = detail::refine_foot(sp, x, sp.knot(seg) + frac * h, 0.5 * h);
  Projection pr;
  pr.component = component;
  const auto [i, u] = sp.locate(t);
  pr.parameter = sp.knot(i) + u;
  pr.point = sp.position(pr.parameter);
  const Vec2 d1 = sp.first(pr.parameter);
  pr.tangent = d1.normalized();
  pr.normal = perp(pr.tangent);
  pr.curvature = sp.curvature(pr.parameter);
  const Vec2 r = x - pr.point;
  const double dist = r.norm();
  pr.signed_distance = r.dot(pr.normal) >= 0 ? dist : -dist;
  pr.arclength = sp.arclength_at_knot(i) + sp.segment_length(i, u);
  return pr;
}

/// Nearest point on the phase boundary. `ell` flags points outside the
/// tubular neighborhood where the projection need not be unique.
inline Projection project(const PhaseSet& phase, const Vec2& x,
                          double ell = std::numeric_limits<double>::infinity()) {
  if (phase.empty()) throw GeometryError("projection onto an empty phase");
  Projection best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < phase.size(); ++c) {
    const Projection pr = project_onto(phase[c], c, x);
    if (std::abs(pr.signed_distance) < best_d) {
      best_d = std::abs(pr.signed_distance);
      best = pr;
    }
  }
  best.ambiguous = !(best_d < ell);
  return best;
}

inline double signed_distance(const PhaseSet& phase, const Vec2& x) { return project(phase, x).signed_distance; }

/// Admissible tubular width: 0.9 * min(1/max|H|, half the minimal
/// inter-component distance, clearance to the domain boundary).
inline double tubular_width(const PhaseSet& phase) {
  if (phase.empty()) throw GeometryError("tubular width of an empty phase");
  double kmax = 0.0;
  for (const auto& c : phase.components())
    for (double k : curvature(c)) kmax = std::max(kmax, std::abs(k));
  double bound = kmax > 0 ? 1.0 / kmax : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < phase.size(); ++i) {
    for (const auto& p : phase[i].nodes()) bound = std::min(bound, phase.box().distance_to_boundary(p));
    for (std::size_t j = 0; j < phase.size(); ++j) {
      if (i == j) continue;
      const auto& q = phase[j].nodes();
      for (const auto& p : phase[i].nodes())
        for (std::size_t k = 0; k < q.size(); ++k)
          bound = std::min(bound, 0.5 * std::sqrt(detail::point_segment_distance2(p, q[k], q[(k + 1) % q.size()], nullptr)));
    }
  }
  const double ell = 0.9 * bound;
  if (!(ell > 0.0) || !std::isfinite(ell)) throw GeometryError("invalid geometry: nonpositive tubular width");
  return ell;
}

/// Symmetric Hausdorff distance between the node sets of two phases and the
/// other phase's boundary.
inline double hausdorff_distance(const PhaseSet& a, const PhaseSet& b) {
  double d = 0.0;
  for (const auto& c : a.components())
    for (const auto& p : c.nodes()) d = std::max(d, std::abs(project(b, p).signed_distance));
  for (const auto& c : b.components())
    for (const auto& p : c.nodes()) d = std::max(d, std::abs(project(a, p).signed_distance));
  return d;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_json(const PhaseSet& phase) {
  std::ostringstream os;
  const auto& b = phase.box();
  os << "{\"box\": [" << format_double(b.xmin) << ", " << format_double(b.ymin) << ", " << format_double(b.xmax)
     << ", " << format_double(b.ymax) << "], \"components\": [";
  for (std::size_t c = 0; c < phase.size(); ++c) {
    if (c) os << ", ";
    os << "{\"orientation\": true, \"nodes\": [";
    const auto& nodes = phase[c].nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i) os << ", ";
      os << "[" << format_double(nodes[i].x()) << ", " << format_double(nodes[i].y()) << "]";
    }
    os << "]}";
  }
  os << "]}";
  return os.str();
}

inline PhaseSet phase_from_json(const nlohmann::json& j) {
  try {
    const auto& jb = j.at("box");
    if (!jb.is_array() || jb.size() != 4) throw GeometryError("box must be [xmin, ymin, xmax, ymax]");
    Box box{jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(), jb[3].get<double>()};
    std::vector<InterfaceCurve> comps;
    for (const auto& jc : j.at("components")) {
      std::vector<Vec2> nodes;
      for (const auto& p : jc.at("nodes")) nodes.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      const bool positive = jc.value("orientation", true);
      // A clockwise listing with the phase on its left would be a hole, which
      // is not representable; treat negative orientation as a reversed listing.
      if (!positive) std::reverse(nodes.begin() + 1, nodes.end());
      comps.emplace_back(std::move(nodes));
    }
    return PhaseSet(std::move(comps), box);
  } catch (const nlohmann::json::exception& e) {
    throw GeometryError(std::string("malformed phase JSON: ") + e.what());
  }
}

inline PhaseSet phase_from_json(const std::string& text) { return phase_from_json(nlohmann::json::parse(text)); }

// ---------------------------------------------------------------------------
// Parametric shapes

inline InterfaceCurve circle(const Vec2& center, double radius, std::size_t n, double phase_shift = 0.0) {
  std::vector<Vec2> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = phase_shift + 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
    p[i] = center + radius * Vec2(std::cos(th), std::sin(th));
  }
  return InterfaceCurve(std::move(p));
}

/// r(theta) = R (1 + eps cos(k theta)), resampled to equal arclength.
inline InterfaceCurve perturbed_circle(const Vec2& center, double radius, double eps, int mode, std::size_t n) {
  const std::size_t fine = std::max<std::size_t>(4 * n, 512);
  std::vector<Vec2> p(fine);
  for (std::size_t i = 0; i < fine; ++i) {
    const double th = 2.0 * pi * static_cast<double>(i) / static_cast<double>(fine);
    const double r = radius * (1.0 + eps * std::cos(mode * th));
    p[i] = center + r * Vec2(std::cos(th), std::sin(th));
  }
  return resample(InterfaceCurve(std::move(p)), n);
}

/// Parametric ellipse samples x = a cos t, y = b sin t (not equispaced in arclength).
inline InterfaceCurve ellipse(const Vec2& center, double a, double b, std::size_t n) {
  std::vector<Vec2> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
    p[i] = center + Vec2(a * std::cos(t), b * std::sin(t));
  }
  return InterfaceCurve(std::move(p));
}

}  // namespace mslab::geometry
