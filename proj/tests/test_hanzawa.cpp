#include "mslab/hanzawa.hpp"

#include <gtest/gtest.h>

using namespace mslab;
using namespace mslab::geometry;
using namespace mslab::hanzawa;

namespace {

PhaseSet unit_circle(std::size_t n = 256) { return PhaseSet({circle({0, 0}, 1.0, n)}, Box{}); }

PhaseScalarField polar(const PhaseSet& ph, const std::function<double(double)>& h) {
  PhaseScalarField out(ph.size());
  for (std::size_t c = 0; c < ph.size(); ++c)
    for (const auto& p : ph[c].nodes()) out[c].push_back(h(std::atan2(p.y(), p.x())));
  return out;
}

}  // namespace

TEST(Hanzawa, ZeroHeightIsIdentity) {
  const auto ph = unit_circle();
  const HanzawaMap m(ph, polar(ph, [](double) { return 0.0; }));
  for (const auto& x : band_samples(ph, m.ell(), 0.6, 50, 3)) {
    EXPECT_EQ(m.psi(x), x);
    EXPECT_LT((m.grad_psi(x) - Mat2::Identity()).norm(), 1e-15);
    EXPECT_EQ(m.det_psi(x), 1.0);
    EXPECT_LT((m.a_h(x) - Mat2::Identity()).norm(), 1e-15);
    EXPECT_EQ(m.inverse(x), x);
  }
}

TEST(Hanzawa, PointExample) {
  const auto ph = unit_circle();
  const HanzawaMap m(ph, polar(ph, [](double t) { return 0.01 * std::cos(3 * t); }));
  const Vec2 x(0.995, 0.0);
  const Mat2 g = m.grad_psi(x);
  EXPECT_NEAR(m.det_psi(x), g.determinant(), 1e-10);
  const double step = 1e-6;
  Mat2 fd;
  fd.col(0) = (m.psi(x + Vec2(step, 0)) - m.psi(x - Vec2(step, 0))) / (2 * step);
  fd.col(1) = (m.psi(x + Vec2(0, step)) - m.psi(x - Vec2(0, step))) / (2 * step);
  EXPECT_NEAR(m.det_psi(x), fd.determinant(), 1e-6);
  // ζ = 1 here, so Ψ(x) = x − h n with n = −x/|x|: a radial move by +h
  EXPECT_NEAR(m.psi(x).x(), 0.995 + 0.01, 1e-6);
}

TEST(Hanzawa, GraphMapsOntoInterface) {
  const auto ph = unit_circle();
  const HanzawaMap m(ph, polar(ph, [](double t) { return 0.02 * std::cos(3 * t) + 0.01 * std::sin(5 * t); }));
  const auto& sp = ph[0].spline();
  for (int k = 0; k < 97; ++k) {
    const double t = sp.period() * (k + 0.37) / 97;
    const auto l = m.local(sp.position(t));
    const Vec2 y = sp.position(t) + l.h * sp.normal(t);
    EXPECT_LT(std::abs(signed_distance(ph, m.psi(y))), 1e-8);
    EXPECT_LT((m.psi(y) - sp.position(t)).norm(), 1e-8);
  }
}

TEST(Hanzawa, IdentityOutsideCutoff) {
  const auto ph = unit_circle();
  const HanzawaMap m(ph, polar(ph, [](double t) { return 0.01 * std::cos(3 * t); }));
  for (double r : {0.3, 0.45, 1.0 + 0.51 * m.ell(), 2.5}) {
    const Vec2 x(r * std::cos(0.3), r * std::sin(0.3));
    EXPECT_EQ(m.psi(x), x);
    EXPECT_LT((m.grad_psi(x) - Mat2::Identity()).norm(), 1e-15);
  }
}

TEST(Hanzawa, JacobianAgainstFiniteDifferences) {
  const auto circ = unit_circle();
  const HanzawaMap a(circ, polar(circ, [](double t) { return 0.01 * std::cos(3 * t); }));
  PhaseSet two({ellipse({-1.5, 0}, 1.0, 0.7, 256), circle({1.5, 0.2}, 0.6, 192)}, Box{});
  const HanzawaMap b(two, polar(two, [](double t) { return 0.005 * std::sin(4 * t) + 0.003; }));
  for (const auto* m : {&a, &b}) {
    const auto r = verify_map(*m, 100, 17);
    EXPECT_EQ(r.jacobian.count, 100u);
    EXPECT_LT(r.jacobian.max, 1e-5);
    EXPECT_LT(r.determinant.max, 1e-12);
    EXPECT_GT(r.min_det, 0.0);
    EXPECT_LT(r.interface.max, 1e-8);
    EXPECT_LT(r.inverse.max, 1e-8);
    EXPECT_LT(r.max_asymmetry, 1e-14);
    EXPECT_GT(r.min_eig, 0.0);
  }
}

TEST(Hanzawa, InverseBothWays) {
  const auto ph = unit_circle();
  const HanzawaMap m(ph, polar(ph, [](double t) { return 0.03 * std::cos(2 * t); }));
  for (const auto& x : band_samples(ph, m.ell(), 0.45, 100, 8)) {
    EXPECT_LT((m.psi(m.inverse(x)) - x).norm(), 1e-8);
    EXPECT_LT((m.inverse(m.psi(x)) - x).norm(), 1e-8);
  }
  // closed form x + h̄ n̄ is exact where ζ ≡ 1
  const Vec2 x(1.0, 0.0);
  EXPECT_NEAR(m.inverse(x).x(), 1.0 - 0.03, 1e-9);
}

TEST(Hanzawa, SmallnessGivesEllipticity) {
  const auto ph = unit_circle();
  const double ell = tubular_width(ph);
  const double eps = 0.001;
  const int k = 3;
  ASSERT_LE(eps / ell + k * eps, 1.0 / (16 * 8));
  const HanzawaMap m(ph, polar(ph, [&](double t) { return eps * std::cos(k * t); }));
  const auto r = verify_map(m, 300, 4);
  EXPECT_GE(r.min_eig, 0.5);
  EXPECT_LE(r.max_eig, 2.0);
}

TEST(Hanzawa, FromFittedHeight) {
  const auto strong = unit_circle();
  const PhaseSet weak({perturbed_circle({0, 0}, 1.0, 0.01, 3, 256)}, Box{});
  const auto fit = entropy::fit_graph(weak, strong, 8.0);
  ASSERT_TRUE(fit.graph.has_value());
  const HanzawaMap m(strong, *fit.graph);
  for (const auto& p : weak[0].nodes()) EXPECT_LT(std::abs(signed_distance(strong, m.psi(p))), 1e-5);
}

TEST(Hanzawa, RejectsBadHeights) {
  const auto ph = unit_circle();
  EXPECT_THROW(HanzawaMap(ph, PhaseScalarField{}), ShapeError);
  EXPECT_THROW(HanzawaMap(ph, PhaseScalarField{CurveScalarField(10, 0.0)}), ShapeError);
  auto h = polar(ph, [](double) { return 0.0; });
  h[0][3] = std::nan("");
  EXPECT_THROW(HanzawaMap(ph, h), Error);
}

TEST(Identities, CircleRadialClosedForm) {
  const auto ph = unit_circle();
  const auto r = verify_identities(ph, 200, 1);
  EXPECT_LT(r.div_xi.max, 1e-6);
  EXPECT_LT(r.grad_s.max, 1e-6);
  EXPECT_LT(r.grad_xi.max, 1e-6);
  // ∇·n̄ = −1/r up to the spline curvature error
  for (double rad : {0.7, 0.9, 1.2, 1.4}) {
    const auto pr = project(ph, {rad, 0.0});
    EXPECT_NEAR(-pr.curvature / (1 - pr.curvature * pr.signed_distance), -1.0 / rad, 1e-4 / rad);
  }
}

TEST(Identities, Ellipse) {
  PhaseSet ph({ellipse({0, 0}, 2.0, 1.0, 512)}, Box{});
  const auto r = verify_identities(ph, 300, 2);
  EXPECT_LT(r.max(), 1e-4);
  EXPECT_EQ(r.grad_s.count, 300u);
}

TEST(Identities, TwoCirclesPerComponent) {
  PhaseSet ph({circle({-1.5, 0}, 0.5, 256), circle({1.5, 0}, 1.0, 256)}, Box{});
  const auto r = verify_identities(ph, 200, 3);
  ASSERT_EQ(r.per_component.size(), 2u);
  for (const auto& c : r.per_component) {
    EXPECT_GT(c.count, 0u);
    EXPECT_LT(c.max, 1e-4);
  }
  const auto j = r.json();
  for (const char* key : {"grad_s", "div_xi", "grad_xi", "per_component"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j["div_xi"]["samples"], 200);
}
