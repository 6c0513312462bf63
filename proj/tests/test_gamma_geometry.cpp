#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "ymh/gamma_geometry.hpp"

using namespace ymh;
using std::numbers::pi;

namespace {

// (X, Y) = ((x1, x3), (x2, x4)), written out in complex coordinates
Vec4 complex_map(double e, double st, double tt, double a, double b) {
  const double s = e * st, th = e * tt, S = std::sin(2 * s);
  const double c0 = std::cos(th), s0 = std::sin(th);
  const double X1 = std::cos(s) / (e * std::sqrt(S)) * c0 + a * std::sin(s) * c0 + b * std::sin(s) * s0;
  const double X2 = std::cos(s) / (e * std::sqrt(S)) * s0 + a * std::sin(s) * s0 - b * std::sin(s) * c0;
  const double Y1 = std::sin(s) / (e * std::sqrt(S)) * c0 + a * std::cos(s) * c0 - b * std::cos(s) * s0;
  const double Y2 = std::sin(s) / (e * std::sqrt(S)) * s0 + a * std::cos(s) * s0 + b * std::cos(s) * c0;
  return Vec4(X1, Y1, X2, Y2);
}

}  // namespace

TEST_CASE("surface point and frame") {
  CHECK(gamma_point(pi / 4, 0.0).position.norm() == Catch::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(gamma_point(0.0, 0.0), Error);
  CHECK_THROWS_AS(gamma_point(pi / 2, 0.0), Error);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> us(0.05, pi / 2 - 0.05), ut(0, 2 * pi);
  double frame = 0.0, tang = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double s = us(rng), th = ut(rng), h = 1e-5;
    const GammaPoint g = gamma_point(s, th);
    frame = std::max({frame, std::abs(g.m.dot(g.n)), std::abs(g.m.norm() - 1), std::abs(g.n.norm() - 1)});
    const Vec4 ds = (gamma_point(s + h, th).position - gamma_point(s - h, th).position) / (2 * h);
    const Vec4 dt = (gamma_point(s, th + h).position - gamma_point(s, th - h).position) / (2 * h);
    tang = std::max({tang, std::abs(g.m.dot(ds)), std::abs(g.n.dot(dt)), std::abs(g.m.dot(dt)),
                     std::abs(g.n.dot(ds)), (ds - g.ds).norm() / g.ds.norm()});
  }
  CHECK(frame < 1e-12);
  CHECK(tang < 1e-6);
}

TEST_CASE("Fermi map agrees with the complex-coordinate formula") {
  FermiChart c = make_chart(0.1);
  CHECK((fermi_map(c, 7.0, 3.0, 0.0, 0.0) - gamma_point(0.7, 0.3).position / 0.1).norm() < 1e-12);
  const Vec4 d = fermi_map(c, 7.0, 3.0, 0.3, -0.4) - fermi_map(c, 7.0, 3.0, 0.0, 0.0);
  CHECK(std::abs(d.norm() - 0.5) < 1e-12);

  FermiChart one;
  one.epsilon = 1.0;
  CHECK((fermi_map(one, pi / 4, 0.0, 0.1, 0.0) - complex_map(1.0, pi / 4, 0.0, 0.1, 0.0)).norm() < 1e-12);
  CHECK((fermi_map(c, 9.0, 11.0, 0.7, 0.2) - complex_map(0.1, 9.0, 11.0, 0.7, 0.2)).norm() < 1e-12);
  CHECK_THROWS_AS(fermi_map(c, 7.0, 0.0, 100.0, 0.0), Error);
}

TEST_CASE("metric blocks at the surface") {
  FermiChart one;
  one.epsilon = 1.0;
  const double s = 0.6, S = std::sin(2 * s);
  const MetricValue m = metric_at(one, s, 0.2, 0.0, 0.0);
  CHECK(m.g(0, 0) == Catch::Approx(std::pow(S, -3)).epsilon(1e-13));
  CHECK(m.g(1, 1) == Catch::Approx(1 / S).epsilon(1e-13));
  CHECK(m.g(0, 1) == 0.0);
  CHECK(m.g.block<2, 2>(0, 2).cwiseAbs().maxCoeff() == 0.0);
  const Mat4 gi = m.g.inverse();
  CHECK(std::abs(gi(0, 0) - std::pow(weight_rho_unscaled(s), -6)) < 1e-12);
  CHECK(std::abs(gi(1, 1) - std::pow(weight_rho_unscaled(s), -2)) < 1e-12);

  const FermiChart c = make_chart(0.05);
  const MetricValue q = metric_at(c, 20.0, 5.0, 0.4, -0.9);
  CHECK(q.g(2, 2) == 1.0);
  CHECK(q.g(3, 3) == 1.0);
  CHECK(q.g(2, 3) == 0.0);
  CHECK((q.g - q.g.transpose()).norm() == 0.0);
}

TEST_CASE("metric equals the Gram matrix of the Fermi map") {
  for (double e : {0.1, 0.05}) {
    const GramCheck gc = metric_gram_check(make_chart(e), 100, 2024, 1e-5);
    INFO("eps = " << e);
    CHECK(gc.points == 100);
    CHECK(gc.max_gap < 1e-6);
  }
}

TEST_CASE("metric is positive definite on chart grids") {
  const FermiChart c = make_chart(0.08);
  bool ok = true;
  for (int i = 1; i < c.surface.Ns; ++i)
    for (int k = 0; k < c.fiber.K; ++k)
      for (int l = 0; l < c.fiber.M; l += 4) {
        const double st = c.surface.s(i) / c.epsilon, r = c.fiber.r(k);
        if (r * r >= c.r_eps2(st)) continue;
        const MetricValue m = metric_at(c, st, 0.0, r * std::cos(c.fiber.phi(l)), r * std::sin(c.fiber.phi(l)));
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m.g.block<2, 2>(0, 0));
        ok = ok && m.detG > 0 && es.eigenvalues().minCoeff() > 0;
      }
  CHECK(ok);
}

TEST_CASE("inverse metric expansion orders") {
  const auto ex = inverse_metric_expansion_check(pi / 3, 0.3, 0.7, -0.4, {0.04, 0.02, 0.01});
  for (double r : ex.ratio1) {
    CHECK(r > 3.0);
    CHECK(r < 5.0);
  }
  for (double r : ex.ratio2) {
    CHECK(r > 6.0);
    CHECK(r < 10.0);
  }
  // linear-in-(a, b) terms drop out on the surface
  const Mat4 m0 = inverse_metric_first(0.03, 0.8, 0.0, 0.0);
  const Mat4 zeroth = inverse_metric_first(0.0, 0.8, 0.0, 0.0);
  CHECK((m0 - zeroth).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("weights and Jacobi fields") {
  CHECK(weight_rho_unscaled(pi / 4) == Catch::Approx(1.0));
  CHECK_THROWS_AS(weight_rho_unscaled(0.0), Error);
  for (double s : {0.3, 0.1, 0.01, 1e-4}) CHECK(weight_rho_unscaled(s) / gamma_point(s, 0.0).position.norm() == Catch::Approx(1.0));

  const auto n5 = jacobi_field(5, pi / 4, 1.0);
  CHECK(n5.first == Catch::Approx(1.0));
  CHECK(n5.second == 0.0);
  const auto n1 = jacobi_field(1, pi / 2 - 1e-9, 0.0);
  CHECK(n1.first == Catch::Approx(1.0));
  CHECK(n1.second == 0.0);
  double sup = 0.0;
  for (int i = 1; i <= 6; ++i)
    for (int k = 1; k < 200; ++k)
      for (double th : {0.0, 1.0, 2.5, 4.0}) {
        const auto [a, b] = jacobi_field(i, k * pi / 400, th);
        sup = std::max(sup, std::hypot(a, b));
      }
  CHECK(sup <= 1.0 + 1e-12);
  CHECK_THROWS_AS(jacobi_field(7, 0.5, 0.0), Error);
}

TEST_CASE("one-form pairing") {
  const FermiChart c = make_chart(0.05);
  const Mat4 g = metric_at(c, 15.0, 2.0, 0.0, 0.0).g;
  CHECK(form_inner(Vec4(0, 0, 1, 0), Vec4(0, 0, 1, 0), g) == Catch::Approx(1.0));
  CHECK(std::abs(form_inner(Vec4(1, 0, 0, 0), Vec4(0, 0, 1, 0), g)) < 1e-15);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const Mat4 h = metric_at(c, 15.0, 2.0, 0.3, 0.5).g;
  for (int k = 0; k < 20; ++k) {
    const Vec4 a(nd(rng), nd(rng), nd(rng), nd(rng)), b(nd(rng), nd(rng), nd(rng), nd(rng));
    CHECK(std::abs(form_inner(a, b, h) - form_inner(b, a, h)) < 1e-14 * (1 + std::abs(form_inner(a, b, h))));
  }
  CHECK_THROWS_AS(form_inner(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3, 4}, g), Error);
}
