#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ymh/core/order_fit.hpp"
#include "ymh/vortex_profile.hpp"

using namespace ymh;
using Catch::Approx;

namespace {

const VortexProfile& base_profile() {
  static const VortexProfile p = solve_vortex(1.0, 1, {.R_max = 20.0, .N = 2000});
  return p;
}

}  // namespace

TEST_CASE("unit-coupling profile is bounded, monotone and saturates") {
  const auto& p = base_profile();
  CHECK(p.U[0] == 0.0);
  CHECK(p.V[0] == 0.0);
  CHECK(bounded_and_monotone(p));
  CHECK(p.U.back() > 0.999);
  CHECK(p.residual_norm < p.tol);
}

TEST_CASE("independent stencil residual is small") {
  const auto r1 = vortex_residual(base_profile());
  CHECK(r1.res_U < 1e-8);
  CHECK(r1.res_V < 1e-8);
  const auto r2 = vortex_residual(solve_vortex(2.0, 1));
  CHECK(r2.res_U < 1e-8);
  CHECK(r2.res_V < 1e-8);
}

TEST_CASE("residual of the zero branch vanishes") {
  VortexProfile z = base_profile();
  std::fill(z.U.begin(), z.U.end(), 0.0);
  std::fill(z.V.begin(), z.V.end(), 0.0);
  const auto r = vortex_residual(z);
  CHECK(r.res_U == 0.0);
  CHECK(r.res_V == 0.0);
}

TEST_CASE("residual reacts to a single-node kick like 1/h^2") {
  VortexProfile q = base_profile();
  const int i = q.N() / 3;
  q.U[i] += 1e-3;
  const double jump = vortex_residual(q).res_U;
  const double expected = 1e-3 * 30.0 / (12.0 * q.h * q.h);
  CHECK(jump > 0.5 * expected);
  CHECK(jump < 2.0 * expected);
}

TEST_CASE("degree sign does not matter") {
  const auto& a = base_profile();
  const auto b = solve_vortex(1.0, -1, {.R_max = 20.0, .N = 2000});
  double d = 0.0;
  for (int i = 0; i <= a.N(); ++i) d = std::max({d, std::abs(a.U[i] - b.U[i]), std::abs(a.V[i] - b.V[i])});
  CHECK(d < 1e-12);
}

TEST_CASE("decay rates match min(sqrt lambda, 2) and 1") {
  for (double lam : {0.5, 1.0, 2.0, 4.0, 9.0}) {
    const auto p = solve_vortex(lam, 1);
    const auto r = fit_decay_rates(p);
    INFO("lambda = " << lam);
    CHECK(std::abs(r.rate_U / decay_rate(lam) - 1.0) < 0.05);
    CHECK(std::abs(r.rate_V - 1.0) < 0.05);
    CHECK(bounded_and_monotone(p));
  }
}

TEST_CASE("decay fit rejects a window outside (0,1)") {
  CHECK_THROWS_AS(fit_decay_rates(base_profile(), 0.5, 1.2), Error);
}

TEST_CASE("interpolation is exact at nodes and regular at the origin") {
  const auto& p = base_profile();
  const int i = 777;
  const auto v = evaluate_profile(p, p.r[i]);
  CHECK(v.U == p.U[i]);
  CHECK(v.V == p.V[i]);
  CHECK(v.dU == p.dU[i]);
  const auto o = evaluate_profile(p, 0.0);
  CHECK(o.U == 0.0);
  CHECK(o.V == 0.0);
  CHECK(o.dU == Approx(p.c1).epsilon(1e-6));
  CHECK(std::abs(o.dV) < 1e-12);
  CHECK_THROWS_AS(evaluate_profile(p, p.R_max() + 1.0), Error);
}

TEST_CASE("mid-interval interpolation agrees with a doubled solve") {
  const auto& p = base_profile();
  const auto q = solve_vortex(1.0, 1, {.R_max = 20.0, .N = 4000});
  double d = 0.0;
  for (int i = 10; i < p.N(); i += 37) {
    const double r = p.r[i] + 0.5 * p.h;
    d = std::max(d, std::abs(evaluate_profile(p, r).U - q.U[2 * i + 1]));
  }
  // sixth-order solver plus cubic Hermite: both errors far below h^2
  CHECK(d < 1e-7);
}

TEST_CASE("second-order solver converges at order two") {
  const auto ref = solve_vortex(1.0, 1, {.R_max = 20.0, .N = 8000, .tol = 1e-12, .order = 6});
  std::vector<double> h, e;
  for (int N : {500, 1000, 2000}) {
    const auto p = solve_vortex(1.0, 1, {.R_max = 20.0, .N = N, .tol = 1e-12, .order = 2});
    const int step = 8000 / N;
    double err = 0.0;
    for (int i = 0; i <= N; ++i) err = std::max({err, std::abs(p.U[i] - ref.U[i * step]), std::abs(p.V[i] - ref.V[i * step])});
    h.push_back(p.h);
    e.push_back(err);
  }
  const auto f = fit_order(h, e);
  CHECK(f.slope > 1.8);
  CHECK(f.slope < 2.2);
}

TEST_CASE("solver rejects bad input") {
  CHECK_THROWS_AS(solve_vortex(-1.0, 1), Error);
  CHECK_THROWS_AS(solve_vortex(1.0, 0), Error);
  CHECK_THROWS_AS(solve_vortex(1.0, 1, {.N = 50}), Error);
  CHECK_THROWS_AS(solve_vortex(1.0, 1, {.R_max = 3.0}), Error);
}

TEST_CASE("solves are deterministic") {
  const auto a = solve_vortex(2.0, 1);
  const auto b = solve_vortex(2.0, 1);
  CHECK(a.U == b.U);
  CHECK(a.V == b.V);
}
