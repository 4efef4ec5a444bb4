#pragma once

// Finite-difference reference solver for the interface Dirichlet problem on
// the box with homogeneous Neumann conditions on the box edges. Used only to
// cross-check the boundary-integral solver; requires UMFPACK.
//
// Cell-centred tensor grid (uniform, or uniform around the interfaces with
// geometric stretching toward the box), mirrored ghost cells on the box
// edges, and Shortley–Weller arms wherever a grid line crosses the interface
// between two cell centres, with the interface value interpolated from the
// nodal data.

#include "mslab/common.hpp"
#include "mslab/geometry.hpp"
#include "mslab/spline.hpp"

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <array>
#include <vector>

namespace mslab::laplace {

struct GridOptions {
  double tolerance = 1e-10;     ///< relative residual after refinement
  int max_refinements = 10;     ///< iterative-refinement sweeps after the direct solve
  double core_spacing = 0.0;    ///< > 0: uniform spacing near the interfaces, stretched outside
  double core_margin = 0.5;     ///< core extends this far beyond the interface bounding box
  double stretch_ratio = 1.1;   ///< geometric growth of cell widths outside the core
};

struct GridSolution {
  geometry::Box box;
  std::vector<double> xc, yc;  ///< cell centres
  std::vector<double> values;  ///< row-major, index j * nx + i
  std::vector<char> inside;    ///< cell centre inside the phase
  double solver_residual = 0.0;
  int iterations = 0;  ///< refinement sweeps used
  /// Largest |u - g| over interface crossings reconstructed from the grid arms.
  double interface_residual = 0.0;

  int nx() const { return static_cast<int>(xc.size()); }
  int ny() const { return static_cast<int>(yc.size()); }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * xc.size() + i]; }
  bool in(int i, int j) const { return inside[static_cast<std::size_t>(j) * xc.size() + i] != 0; }
  /// Largest cell width near the interfaces.
  double spacing = 0.0;
};

namespace detail {

struct Crossing {
  double pos;    ///< coordinate along the grid line
  double value;  ///< interpolated interface data
};

// Interface polylines refined from the spline, with data interpolated along them.
struct RefinedInterface {
  std::vector<std::vector<Vec2>> points;
  std::vector<std::vector<double>> data;
};

inline RefinedInterface refine(const geometry::PhaseSet& phase, const PhaseScalarField& g, int per_segment) {
  RefinedInterface r;
  for (std::size_t c = 0; c < phase.size(); ++c) {
    const auto& sp = phase[c].spline();
    PeriodicScalarSpline gs(sp, g[c]);
    std::vector<Vec2> pts;
    std::vector<double> vals;
    for (std::size_t i = 0; i < phase[c].size(); ++i) {
      const auto& seg = sp.segment(i);
      for (int k = 0; k < per_segment; ++k) {
        const double u = seg.h * k / per_segment;
        pts.push_back(seg.value(u));
        vals.push_back(gs.value(sp.knot(i) + u));
      }
    }
    r.points.push_back(std::move(pts));
    r.data.push_back(std::move(vals));
  }
  return r;
}

// Crossings of the line {coord[1 - axis] = level} with the refined interface, sorted.
inline std::vector<Crossing> line_crossings(const RefinedInterface& ri, int axis, double level) {
  const int other = 1 - axis;
  std::vector<Crossing> out;
  for (std::size_t c = 0; c < ri.points.size(); ++c) {
    const auto& p = ri.points[c];
    const auto& v = ri.data[c];
    const std::size_t n = p.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = p[k];
      const Vec2& b = p[(k + 1) % n];
      if ((a[other] > level) != (b[other] > level)) {
        const double t = (level - a[other]) / (b[other] - a[other]);
        out.push_back({a[axis] + t * (b[axis] - a[axis]), v[k] + t * (v[(k + 1) % n] - v[k])});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Crossing& l, const Crossing& r) { return l.pos < r.pos; });
  return out;
}

inline double cubic_weight(double t) {
  // Catmull-Rom cubic convolution kernel
  t = std::abs(t);
  if (t < 1) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

// Cell faces on [lo, hi]: uniform width h on [core_lo, core_hi], growing by
// `ratio` per cell outside it.
inline std::vector<double> stretched_faces(double lo, double hi, double core_lo, double core_hi, double h, double ratio) {
  core_lo = std::max(core_lo, lo);
  core_hi = std::min(core_hi, hi);
  const int m = std::max(1, static_cast<int>(std::ceil((core_hi - core_lo) / h)));
  const double hc = (core_hi - core_lo) / m;
  std::vector<double> right{core_lo};
  for (int k = 1; k <= m; ++k) right.push_back(core_lo + k * hc);
  auto grow = [&](double start, double end, double dir) {
    std::vector<double> f;
    double w = hc, x = start;
    while (dir * (end - x) > 1e-12) {
      w *= ratio;
      if (dir * (end - (x + dir * w)) < 0.5 * w) {
        x = end;
      } else {
        x += dir * w;
      }
      f.push_back(x);
    }
    return f;
  };
  const auto left = grow(core_lo, lo, -1.0);
  const auto rest = grow(core_hi, hi, 1.0);
  std::vector<double> faces(left.rbegin(), left.rend());
  faces.insert(faces.end(), right.begin(), right.end());
  faces.insert(faces.end(), rest.begin(), rest.end());
  return faces;
}

}  // namespace detail

/// Solve on a uniform n x n grid (n >= 128), or on a stretched grid when
/// options.core_spacing > 0 (n is then ignored).
inline GridSolution grid_oracle_solve(const geometry::PhaseSet& phase, const PhaseScalarField& g, int n,
                                      const GridOptions& options = {}) {
  if (options.core_spacing <= 0 && n < 128) throw ResolutionError("grid oracle needs n >= 128");
  if (g.size() != phase.size()) throw ShapeError("data has wrong number of components");
  for (std::size_t c = 0; c < g.size(); ++c)
    if (g[c].size() != phase[c].size()) throw ShapeError("data length differs from node count");

  GridSolution gs;
  gs.box = phase.box();
  std::vector<double> xf, yf;
  if (options.core_spacing > 0) {
    Vec2 lo = Vec2::Constant(1e300), hi = Vec2::Constant(-1e300);
    for (const auto& c : phase.components())
      for (const auto& p : c.nodes()) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    const double m = options.core_margin;
    xf = detail::stretched_faces(gs.box.xmin, gs.box.xmax, lo.x() - m, hi.x() + m, options.core_spacing,
                                 options.stretch_ratio);
    yf = detail::stretched_faces(gs.box.ymin, gs.box.ymax, lo.y() - m, hi.y() + m, options.core_spacing,
                                 options.stretch_ratio);
    gs.spacing = options.core_spacing;
  } else {
    for (int k = 0; k <= n; ++k) {
      xf.push_back(gs.box.xmin + gs.box.width() * k / n);
      yf.push_back(gs.box.ymin + gs.box.height() * k / n);
    }
    gs.spacing = std::max(gs.box.width(), gs.box.height()) / n;
  }
  for (std::size_t k = 0; k + 1 < xf.size(); ++k) gs.xc.push_back(0.5 * (xf[k] + xf[k + 1]));
  for (std::size_t k = 0; k + 1 < yf.size(); ++k) gs.yc.push_back(0.5 * (yf[k] + yf[k + 1]));
  const int nx = gs.nx(), ny = gs.ny();

  const auto ri = detail::refine(phase, g, 8);
  const std::size_t N = static_cast<std::size_t>(nx) * ny;
  gs.inside.assign(N, 0);

  // Arm lengths toward each neighbour (0: -x, 1: +x, 2: -y, 3: +y), the
  // Dirichlet value when the arm ends on the interface, and whether it does.
  std::vector<std::array<double, 4>> arm(N);
  std::vector<std::array<double, 4>> bval(N, {0.0, 0.0, 0.0, 0.0});
  std::vector<std::array<char, 4>> cut(N, {0, 0, 0, 0});

  for (int axis = 0; axis < 2; ++axis) {
    const auto& along = axis == 0 ? gs.xc : gs.yc;
    const auto& across = axis == 0 ? gs.yc : gs.xc;
    const auto& faces = axis == 0 ? xf : yf;
    const int nal = static_cast<int>(along.size());
    for (int line = 0; line < static_cast<int>(across.size()); ++line) {
      const auto cr = detail::line_crossings(ri, axis, across[line]);
      std::size_t k = 0;
      for (int m = 0; m < nal; ++m) {
        const int i = axis == 0 ? m : line, j = axis == 0 ? line : m;
        const std::size_t id = static_cast<std::size_t>(j) * nx + i;
        const double pos = along[m];
        while (k < cr.size() && cr[k].pos <= pos) ++k;
        if (axis == 0) gs.inside[id] = (k % 2 == 1);
        // mirrored ghost across the box edge sits at distance 2 * (pos - face)
        const double dlo = m > 0 ? pos - along[m - 1] : 2.0 * (pos - faces[0]);
        const double dhi = m + 1 < nal ? along[m + 1] - pos : 2.0 * (faces[nal] - pos);
        arm[id][2 * axis] = dlo;
        arm[id][2 * axis + 1] = dhi;
        if (k > 0 && pos - cr[k - 1].pos < dlo) {
          arm[id][2 * axis] = pos - cr[k - 1].pos;
          bval[id][2 * axis] = cr[k - 1].value;
          cut[id][2 * axis] = 1;
        }
        if (k < cr.size() && cr[k].pos - pos < dhi) {
          arm[id][2 * axis + 1] = cr[k].pos - pos;
          bval[id][2 * axis + 1] = cr[k].value;
          cut[id][2 * axis + 1] = 1;
        }
      }
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * N);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  const double h2 = gs.spacing * gs.spacing;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const auto id = static_cast<Eigen::Index>(static_cast<std::size_t>(j) * nx + i);
      const auto& a = arm[id];
      int dmin = 0;
      for (int d = 1; d < 4; ++d)
        if (a[d] < a[dmin]) dmin = d;
      if (cut[id][dmin] && a[dmin] < 1e-9 * gs.spacing) {
        // cell centre on the interface
        trip.emplace_back(id, id, 1.0);
        rhs[id] = bval[id][dmin];
        continue;
      }
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      double diag = 0.0;
      for (int axis = 0; axis < 2; ++axis) {
        const int lo = 2 * axis, hi = 2 * axis + 1;
        const double f = h2 * 2.0 / (a[lo] + a[hi]);
        for (int side : {lo, hi}) {
          const bool outside_box = ni[side] < 0 || nj[side] < 0 || ni[side] >= nx || nj[side] >= ny;
          if (outside_box && !cut[id][side]) continue;  // mirrored ghost: zero flux
          const double c = f / a[side];
          diag -= c;
          if (cut[id][side]) {
            rhs[id] -= c * bval[id][side];
          } else {
            trip.emplace_back(id, static_cast<Eigen::Index>(static_cast<std::size_t>(nj[side]) * nx + ni[side]), c);
          }
        }
      }
      trip.emplace_back(id, id, diag);
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  A.setFromTriplets(trip.begin(), trip.end());

  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu(A);
  if (lu.info() != Eigen::Success) throw SolverError("grid oracle: sparse factorization failed");
  Eigen::VectorXd u = lu.solve(rhs);
  const double bnorm = std::max(rhs.norm(), 1e-300);
  double res = (rhs - A * u).norm() / bnorm;
  int sweeps = 0;
  while (!(res <= options.tolerance) && sweeps < options.max_refinements) {
    const Eigen::VectorXd r = rhs - A * u;
    const Eigen::VectorXd du = lu.solve(r);
    u += du;
    res = (rhs - A * u).norm() / bnorm;
    ++sweeps;
  }
  gs.iterations = sweeps;
  gs.solver_residual = res;
  if (!(res <= options.tolerance))
    throw SolverError("grid oracle: residual " + std::to_string(res) + " above tolerance after " +
                      std::to_string(sweeps) + " refinement sweeps");
  gs.values.assign(u.data(), u.data() + u.size());

  // Linear extrapolation from the two nearest cells along each cut arm
  // reproduces the interface value up to O(h²); report the worst mismatch.
  double ires = 0.0;
  for (int j = 1; j + 1 < ny; ++j)
    for (int i = 1; i + 1 < nx; ++i) {
      const std::size_t id = static_cast<std::size_t>(j) * nx + i;
      for (int d = 0; d < 4; ++d) {
        if (!cut[id][d] || arm[id][d] < 1e-9 * gs.spacing) continue;
        const int di = d == 0 ? 1 : d == 1 ? -1 : 0, dj = d == 2 ? 1 : d == 3 ? -1 : 0;
        const std::size_t back = static_cast<std::size_t>(j + dj) * nx + (i + di);
        if (cut[back][d] || gs.inside[back] != gs.inside[id]) continue;
        const double t = arm[id][d] / arm[back][d];
        ires = std::max(ires, std::abs(u[id] + t * (u[id] - u[back]) - bval[id][d]));
      }
    }
  gs.interface_residual = ires;
  return gs;
}

/// Cubic-convolution interpolation of the grid values (assumes locally
/// uniform cells). When `side` is 0 or 1, returns false if the stencil
/// touches a cell on the other side.
inline bool grid_interpolate(const GridSolution& gs, const Vec2& p, double& out, int side = -1) {
  auto locate = [](const std::vector<double>& c, double x, int& i0, double& frac) {
    auto it = std::upper_bound(c.begin(), c.end(), x);
    i0 = std::clamp(static_cast<int>(it - c.begin()) - 1, 0, static_cast<int>(c.size()) - 2);
    frac = (x - c[i0]) / (c[i0 + 1] - c[i0]);
  };
  int i0, j0;
  double fx, fy;
  locate(gs.xc, p.x(), i0, fx);
  locate(gs.yc, p.y(), j0, fy);
  double sum = 0.0;
  for (int dj = -1; dj <= 2; ++dj)
    for (int di = -1; di <= 2; ++di) {
      const int i = std::clamp(i0 + di, 0, gs.nx() - 1), j = std::clamp(j0 + dj, 0, gs.ny() - 1);
      if (side >= 0 && gs.in(i, j) != (side == 1)) return false;
      sum += detail::cubic_weight(fx - di) * detail::cubic_weight(fy - dj) * gs.at(i, j);
    }
  out = sum;
  return true;
}

/// Normal-derivative jump (inside minus outside, inward normal) at the
/// interface nodes from one-sided quadratic fits through the interface value
/// and two interpolated samples on each side.
inline PhaseScalarField grid_jump(const GridSolution& gs, const geometry::PhaseSet& phase, const PhaseScalarField& g) {
  const double h = gs.spacing;
  PhaseScalarField out(phase.size());
  for (std::size_t c = 0; c < phase.size(); ++c) {
    const auto normals = phase[c].node_normals();
    for (std::size_t i = 0; i < phase[c].size(); ++i) {
      const Vec2 x = phase[c][i];
      double d[2] = {0.0, 0.0};
      for (int side = 0; side < 2; ++side) {
        const Vec2 dir = side == 1 ? normals[i] : Vec2(-normals[i]);
        bool ok = false;
        for (double delta = 3.0 * h; delta <= 12.0 * h && !ok; delta += h) {
          double u1, u2;
          if (grid_interpolate(gs, x + delta * dir, u1, side) && grid_interpolate(gs, x + 2 * delta * dir, u2, side)) {
            d[side] = (-3.0 * g[c][i] + 4.0 * u1 - u2) / (2.0 * delta);
            ok = true;
          }
        }
        if (!ok) throw SolverError("grid jump: no one-sided stencil; interface too close to another interface or the box");
      }
      // d[1] = n·∇u from inside, d[0] = -n·∇u from outside
      out[c].push_back(d[1] + d[0]);
    }
  }
  return out;
}

}  // namespace mslab::laplace
