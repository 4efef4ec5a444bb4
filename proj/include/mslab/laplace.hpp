#pragma once

// Free-space single-layer solver for the two-phase Dirichlet problem
//
//   -Δu = 0 off the interface,  u = g on the interface,
//
// with u = S μ + c and the zero-total-flux side condition ∮ μ = 0. The jump of
// the normal derivative (inside minus outside, normal pointing inward) equals
// -μ, and the Dirichlet energy is ∮ g μ.
//
// Each component is treated as a 2π-periodic curve parametrized by node index.
// The logarithmic singularity on the diagonal block is integrated with Kress'
// product quadrature, which is spectrally accurate on smooth curves.

#include "mslab/common.hpp"
#include "mslab/geometry.hpp"

#include <Eigen/LU>

#include <map>
#include <memory>

namespace mslab::laplace {

struct DtnSolution {
  PhaseScalarField data;
  PhaseScalarField density;
  double constant = 0.0;
  PhaseScalarField jump;
  double dirichlet_energy = 0.0;
  /// Quadrature weights used by the discretization (arclength per node).
  PhaseScalarField weights;
};

namespace detail {

inline constexpr std::size_t min_nodes = 32;

// Kress weights R(d), d = |i - j| mod N, for ∫ log(4 sin²((t-τ)/2)) f(τ) dτ.
inline const std::vector<double>& kress_weights(std::size_t n) {
  thread_local std::map<std::size_t, std::vector<double>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> r(n, 0.0);
  const double N = static_cast<double>(n);
  const std::size_t m_max = (n % 2 == 0) ? n / 2 - 1 : (n - 1) / 2;
  for (std::size_t d = 0; d < n; ++d) {
    double s = 0.0;
    for (std::size_t m = 1; m <= m_max; ++m) s += std::cos(2.0 * pi * m * d / N) / m;
    r[d] = -(4.0 * pi / N) * s;
    if (n % 2 == 0) r[d] -= (4.0 * pi / (N * N)) * ((d % 2 == 0) ? 1.0 : -1.0);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

// |dx/dt| for the index parametrization t_i = 2π i / N, fourth-order differences.
inline std::vector<double> index_speed(const std::vector<Vec2>& x) {
  const std::size_t n = x.size();
  const double dt = 2.0 * pi / static_cast<double>(n);
  std::vector<double> sp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto at = [&](std::ptrdiff_t k) -> const Vec2& { return x[wrap(static_cast<std::ptrdiff_t>(i) + k, n)]; };
    const Vec2 d = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * dt);
    sp[i] = d.norm();
  }
  return sp;
}

}  // namespace detail

/// Single-layer matrix and quadrature weights for a phase.
struct SingleLayer {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd weights;
  std::vector<std::size_t> offsets;  ///< start of each component in the flattened ordering
};

inline SingleLayer assemble_single_layer(const geometry::PhaseSet& phase) {
  if (phase.empty()) throw GeometryError("boundary system for an empty phase");
  SingleLayer sl;
  const std::size_t total = phase.total_nodes();
  sl.matrix.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  sl.weights.resize(static_cast<Eigen::Index>(total));
  std::vector<std::vector<double>> speed(phase.size());
  std::size_t off = 0;
  for (std::size_t c = 0; c < phase.size(); ++c) {
    const auto& comp = phase[c];
    if (comp.size() < detail::min_nodes)
      throw ResolutionError("component " + std::to_string(c) + " has " + std::to_string(comp.size()) +
                            " nodes; at least 32 are required");
    double hmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < comp.size(); ++i) hmin = std::min(hmin, (comp[(i + 1) % comp.size()] - comp[i]).norm());
    if (hmin < 1e-8 * comp.mean_spacing()) throw ConditioningError("near-duplicate nodes make the boundary system singular");
    speed[c] = detail::index_speed(comp.nodes());
    sl.offsets.push_back(off);
    const double dt = 2.0 * pi / static_cast<double>(comp.size());
    for (std::size_t i = 0; i < comp.size(); ++i) sl.weights[static_cast<Eigen::Index>(off + i)] = speed[c][i] * dt;
    off += comp.size();
  }
  sl.offsets.push_back(off);

  const double inv4pi = 1.0 / (4.0 * pi);
  for (std::size_t ci = 0; ci < phase.size(); ++ci) {
    const auto& xi = phase[ci].nodes();
    const std::size_t ni = xi.size();
    for (std::size_t cj = 0; cj < phase.size(); ++cj) {
      const auto& xj = phase[cj].nodes();
      const std::size_t nj = xj.size();
      if (ci == cj) {
        const auto& R = detail::kress_weights(ni);
        const double dt = 2.0 * pi / static_cast<double>(ni);
        for (std::size_t i = 0; i < ni; ++i) {
          for (std::size_t j = 0; j < ni; ++j) {
            const std::size_t d = i > j ? i - j : j - i;
            double k2;
            if (i == j) {
              k2 = -inv4pi * std::log(speed[ci][i] * speed[ci][i]);
            } else {
              const double s = std::sin(0.5 * dt * (static_cast<double>(i) - static_cast<double>(j)));
              k2 = -inv4pi * std::log((xi[i] - xj[j]).squaredNorm() / (4.0 * s * s));
            }
            sl.matrix(static_cast<Eigen::Index>(sl.offsets[ci] + i), static_cast<Eigen::Index>(sl.offsets[cj] + j)) =
                speed[cj][j] * (-inv4pi * R[d] + dt * k2);
          }
        }
      } else {
        for (std::size_t i = 0; i < ni; ++i) {
          for (std::size_t j = 0; j < nj; ++j) {
            const double w = sl.weights[static_cast<Eigen::Index>(sl.offsets[cj] + j)];
            sl.matrix(static_cast<Eigen::Index>(sl.offsets[ci] + i), static_cast<Eigen::Index>(sl.offsets[cj] + j)) =
                -2.0 * inv4pi * w * std::log((xi[i] - xj[j]).norm());
          }
        }
      }
    }
  }
  return sl;
}

inline PhaseScalarField unflatten(const Eigen::VectorXd& v, const std::vector<std::size_t>& offsets) {
  PhaseScalarField out(offsets.size() - 1);
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c)
    out[c].assign(v.data() + offsets[c], v.data() + offsets[c + 1]);
  return out;
}

/// Bordered system [S 1; wᵀ 0] and its LU factorization for one phase.
/// Reusable across right-hand sides.
class DtnSolver {
 public:
  static constexpr double min_rcond = 1e-13;

  explicit DtnSolver(const geometry::PhaseSet& phase) : phase_(phase), sl_(assemble_single_layer(phase)) {
    factorize(bordered(sl_.matrix));
  }

  /// Factorize a caller-modified operator block (same layout as single_layer().matrix).
  DtnSolver(const geometry::PhaseSet& phase, SingleLayer sl, const Eigen::MatrixXd& block)
      : phase_(phase), sl_(std::move(sl)) {
    factorize(bordered(block));
  }

  const SingleLayer& single_layer() const { return sl_; }
  const geometry::PhaseSet& phase() const { return phase_; }

  DtnSolution solve(const PhaseScalarField& g) const {
    check_shape(g);
    const Eigen::Index n = sl_.matrix.rows();
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = flatten(g);
    rhs[n] = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite(rhs[i])) throw Error("non-finite Dirichlet data");
    const Eigen::VectorXd sol = lu_.solve(rhs);
    DtnSolution out;
    out.data = g;
    out.density = unflatten(sol.head(n), sl_.offsets);
    out.constant = sol[n];
    out.jump = out.density;
    for (auto& c : out.jump)
      for (double& v : c) v = -v;
    out.weights = unflatten(sl_.weights, sl_.offsets);
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) e += sl_.weights[i] * rhs[i] * sol[i];
    out.dirichlet_energy = e;
    return out;
  }

  /// Raw solve of the bordered system with an arbitrary right-hand side.
  Eigen::VectorXd solve_bordered(const Eigen::VectorXd& rhs) const { return lu_.solve(rhs); }

  void check_shape(const PhaseScalarField& g) const {
    if (g.size() != phase_.size()) throw ShapeError("field has wrong number of components");
    for (std::size_t c = 0; c < g.size(); ++c)
      if (g[c].size() != phase_[c].size()) throw ShapeError("field length differs from node count");
  }

 private:
  Eigen::MatrixXd bordered(const Eigen::MatrixXd& block) const {
    const Eigen::Index n = block.rows();
    Eigen::MatrixXd A(n + 1, n + 1);
    A.topLeftCorner(n, n) = block;
    A.topRightCorner(n, 1).setOnes();
    A.bottomLeftCorner(1, n) = sl_.weights.transpose();
    A(n, n) = 0.0;
    return A;
  }

  void factorize(const Eigen::MatrixXd& A) {
    lu_.compute(A);
    const double rc = lu_.rcond();
    if (!(rc > min_rcond)) throw ConditioningError("boundary system is numerically singular (rcond " + std::to_string(rc) + ")");
  }

  geometry::PhaseSet phase_;
  SingleLayer sl_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

inline DtnSolution solve_dirichlet_dtn(const geometry::PhaseSet& phase, const PhaseScalarField& g) {
  return DtnSolver(phase).solve(g);
}

/// ∫|∇(u_a - u_b)|² via linearity of the layer representation.
inline double dirichlet_energy_of_difference(const DtnSolution& a, const DtnSolution& b) {
  if (a.weights.size() != b.weights.size()) throw ShapeError("solutions live on different phases");
  double e = 0.0;
  for (std::size_t c = 0; c < a.weights.size(); ++c) {
    if (a.weights[c].size() != b.weights[c].size()) throw ShapeError("solutions live on different phases");
    for (std::size_t i = 0; i < a.weights[c].size(); ++i) {
      if (std::abs(a.weights[c][i] - b.weights[c][i]) > 1e-12 * (1.0 + std::abs(a.weights[c][i])))
        throw ShapeError("solutions live on different node sets");
      e += a.weights[c][i] * (a.data[c][i] - b.data[c][i]) * (a.density[c][i] - b.density[c][i]);
    }
  }
  return std::max(e, 0.0);
}

/// u(x) = Σ ∮ G(x, y) μ(y) ds(y) + c at a point away from the interface
/// (trapezoid rule; accurate at distances of a few node spacings or more).
inline double evaluate(const geometry::PhaseSet& phase, const DtnSolution& sol, const Vec2& x) {
  double u = sol.constant;
  for (std::size_t c = 0; c < phase.size(); ++c)
    for (std::size_t j = 0; j < phase[c].size(); ++j)
      u -= sol.weights[c][j] * sol.density[c][j] * std::log((x - phase[c][j]).norm()) / (2.0 * pi);
  return u;
}

/// ∇u at a point away from the interface.
inline Vec2 evaluate_gradient(const geometry::PhaseSet& phase, const DtnSolution& sol, const Vec2& x) {
  Vec2 g = Vec2::Zero();
  for (std::size_t c = 0; c < phase.size(); ++c)
    for (std::size_t j = 0; j < phase[c].size(); ++j) {
      const Vec2 r = x - phase[c][j];
      g -= sol.weights[c][j] * sol.density[c][j] * r / (2.0 * pi * r.squaredNorm());
    }
  return g;
}

}  // namespace mslab::laplace
