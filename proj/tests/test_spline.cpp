#include "mslab/spline.hpp"

#include <gtest/gtest.h>

#include <random>

using mslab::CurveSpline;
using mslab::PeriodicScalarSpline;
using mslab::Vec2;

namespace {

std::vector<Vec2> circle_nodes(int n, double r) {
  std::vector<Vec2> p;
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * mslab::pi * i / n;
    p.emplace_back(r * std::cos(t), r * std::sin(t));
  }
  return p;
}

}  // namespace

TEST(Spline, InterpolatesNodes) {
  const auto nodes = circle_nodes(37, 1.3);
  CurveSpline sp(nodes);
  for (std::size_t i = 0; i < nodes.size(); ++i) EXPECT_LT((sp.position(sp.knot(i)) - nodes[i]).norm(), 1e-14);
}

TEST(Spline, PeriodicC2AtSeam) {
  CurveSpline sp(circle_nodes(24, 1.0));
  const double eps = 1e-9;
  EXPECT_LT((sp.first(sp.period() - eps) - sp.first(eps)).norm(), 1e-6);
  EXPECT_LT((sp.second(sp.period() - eps) - sp.second(eps)).norm(), 1e-5);
}

TEST(Spline, CyclicSolverMatchesDense) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  const int n = 9;
  std::vector<double> lo(n), di(n), up(n), rhs(n);
  for (int i = 0; i < n; ++i) {
    lo[i] = u(rng);
    up[i] = u(rng);
    di[i] = 4.0 + u(rng);
    rhs[i] = u(rng);
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = di[i];
    A(i, (i + n - 1) % n) += lo[i];
    A(i, (i + 1) % n) += up[i];
  }
  const auto x = mslab::detail::solve_cyclic_tridiagonal<double>(lo, di, up, rhs);
  Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n);
  EXPECT_LT((A * xv - b).norm(), 1e-12);
}

TEST(Spline, LengthAndAreaOfCircleConverge) {
  CurveSpline sp(circle_nodes(128, 1.0));
  EXPECT_NEAR(sp.length(), 2.0 * mslab::pi, 1e-6);
  EXPECT_NEAR(sp.signed_area(), mslab::pi, 1e-6);
}

TEST(Spline, CornersArePreserved) {
  std::vector<Vec2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CurveSpline sp(sq);
  EXPECT_TRUE(sp.has_corners());
  EXPECT_NEAR(sp.length(), 4.0, 1e-12);
  EXPECT_NEAR(sp.signed_area(), 1.0, 1e-12);
}

TEST(Spline, ArclengthInverse) {
  CurveSpline sp(circle_nodes(50, 2.0));
  for (double s : {0.0, 0.3, 4.0, 11.0}) EXPECT_NEAR(sp.arclength(sp.parameter_at_arclength(s)), s, 1e-12);
}

TEST(Spline, ScalarSplineReproducesSmoothData) {
  CurveSpline sp(circle_nodes(64, 1.0));
  std::vector<double> v;
  for (int i = 0; i < 64; ++i) v.push_back(std::cos(3.0 * 2.0 * mslab::pi * i / 64));
  PeriodicScalarSpline f(sp, v);
  const double t = 0.5 * (sp.knot(10) + sp.knot(11));
  const Vec2 p = sp.position(t);
  EXPECT_NEAR(f.value(t), std::cos(3.0 * std::atan2(p.y(), p.x())), 1e-4);
}
