#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ymh/vortex_linearization.hpp"

using namespace ymh;

namespace {

const VortexProfile& profile1() {
  static const VortexProfile p = solve_vortex(1.0, 1);
  return p;
}

FiberState random_state(const PolarGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  FiberState s = FiberState::zeros(g);
  for (int k = 0; k < g.K; ++k)
    for (int l = 0; l < g.M; ++l) {
      s.xi(k, l) = cd(nd(rng), nd(rng));
      s.B1(k, l) = nd(rng);
      s.B2(k, l) = nd(rng);
    }
  return s;
}

FiberState gauge_direction(const VortexProfile& p, const PolarGrid& g) {
  ProfileSampler sm(p);
  FiberState s = FiberState::zeros(g);
  for (int k = 0; k < g.K; ++k)
    for (int l = 0; l < g.M; ++l) {
      const double r = g.r(k), ph = g.phi(l), x = r * std::cos(ph), y = r * std::sin(ph);
      const double gam = std::exp(-(x - 0.5) * (x - 0.5) - y * y);
      s.xi(k, l) = cd(0, gam) * sm(r).U * std::polar(1.0, ph);
      s.B1(k, l) = -2 * (x - 0.5) * gam;
      s.B2(k, l) = -2 * y * gam;
    }
  return s;
}

}  // namespace

TEST_CASE("fiber kernels match the closed forms") {
  const auto& p = profile1();
  const PolarGrid g = make_polar_grid(0.05, 20.0, 16);
  const auto K = build_fiber_kernels(p, g);
  const FiberRadial f = sample_radial(p, g);
  double gap = 0.0, im0 = 0.0, dot = 0.0;
  for (int k = 0; k < g.K; ++k) {
    const double r = g.r(k), want = f.dU[k] * f.dU[k] + std::pow(f.U[k] * (1.0 - f.V[k]) / r, 2);
    im0 = std::max(im0, std::abs(K.K1.xi(k, 0).imag()));
    for (int l = 0; l < g.M; ++l) {
      gap = std::max(gap, std::abs(std::norm(K.K1.xi(k, l)) + std::norm(K.K2.xi(k, l)) - want));
      dot = std::max(dot, std::abs(K.K1.B1(k, l) * K.K2.B1(k, l) + K.K1.B2(k, l) * K.K2.B2(k, l)));
    }
  }
  CHECK(im0 < 1e-14);
  CHECK(gap < 1e-12);
  CHECK(dot == 0.0);
}

TEST_CASE("kernel identities hold to 1e-6") {
  for (double lam : {0.5, 1.0, 2.0, 4.0}) {
    const auto p = solve_vortex(lam, 1, {.R_max = 24.0, .N = 4800});
    const auto rep = kernel_identities(p);
    INFO("lambda = " << lam);
    REQUIRE(rep.rows.size() == 5);
    for (const auto& r : rep.rows) {
      INFO(r.name);
      CHECK(r.gap < 1e-6);
    }
    CHECK(std::abs(rep.re_T1T2) < 1e-10);
  }
}

TEST_CASE("linearized operator is linear and symmetric") {
  const auto& p = profile1();
  const PolarGrid g = make_polar_grid(0.05, 24.0, 16);
  CHECK(fiber_sup(fiber_linop_apply(p, FiberState::zeros(g))) == 0.0);
  const auto u = random_state(g, 1), v = random_state(g, 2);
  const double a = fiber_inner(fiber_linop_apply(p, u), v);
  const double b = fiber_inner(u, fiber_linop_apply(p, v));
  CHECK(std::abs(a - b) < 1e-10 * std::sqrt(fiber_inner(u, u) * fiber_inner(v, v)));
}

TEST_CASE("translation kernels converge at order two") {
  std::vector<PolarGrid> grids;
  for (double h : {0.04, 0.02, 0.01}) grids.push_back(make_polar_grid(h, 24.0, 16));
  const auto t = fiber_kernel_residual(profile1(), grids);
  CHECK(t.fit1.slope > 1.8);
  CHECK(t.fit1.slope < 2.2);
  CHECK(t.fit2.slope > 1.8);
  CHECK(t.fit2.slope < 2.2);
  CHECK(t.rows.back().res1 < 1e-4);
  CHECK(t.rows.back().res2 < 1e-4);
  // the two kernels are rotations of each other and M = 16 contains the quarter turn
  for (const auto& r : t.rows) CHECK(std::abs(r.res1 - r.res2) < 1e-10);
}

TEST_CASE("kernel ladder needs three grids") {
  std::vector<PolarGrid> grids{make_polar_grid(0.04, 24.0, 16), make_polar_grid(0.02, 24.0, 16)};
  CHECK_THROWS_AS(fiber_kernel_residual(profile1(), grids), Error);
}

TEST_CASE("gauge directions lie in the kernel without gauge fixing") {
  std::vector<double> res;
  for (double h : {0.04, 0.02, 0.01}) {
    const PolarGrid g = make_polar_grid(h, 24.0, 32);
    const auto s = gauge_direction(profile1(), g);
    res.push_back(fiber_sup(fiber_linop_apply(profile1(), s, {.gauge_fixed = false})));
    CHECK(fiber_sup(fiber_linop_apply(profile1(), s)) > 1e-2);
  }
  // the first ring limits the un-fixed operator to order one
  CHECK(res[0] / res[1] > 1.8);
  CHECK(res[1] / res[2] > 1.8);
  CHECK(res[2] < 0.05);
}

TEST_CASE("degree-one spectra are stable") {
  for (double lam : {0.5, 1.0, 2.0}) {
    const auto rep = fiber_spectrum(solve_vortex(lam, 1));
    INFO("lambda = " << lam);
    CHECK(rep.smallest >= -1e-6);
    CHECK(rep.dense_validated);
  }
}

TEST_CASE("degree-two spectra split at unit coupling") {
  const auto unstable = fiber_spectrum(solve_vortex(1.5, 2));
  CHECK(unstable.smallest < -1e-3);
  const auto stable = fiber_spectrum(solve_vortex(0.5, 2));
  CHECK(stable.smallest >= -1e-6);

  const auto& ms = unstable.modes[unstable.smallest_mode];
  const double rate = eigenfunction_decay_rate(ms, unstable.grid);
  CHECK(rate >= 0.9 * std::sqrt(2.0) / 2.0 * std::min(std::sqrt(1.5), 1.0));
}

TEST_CASE("smallest degree-one eigenvalue does not increase with the disk") {
  const auto p = solve_vortex(1.0, 1);
  const double small = fiber_spectrum(p, {.mode_max = 2, .h = 0.004, .R_fib = 8.0}).smallest;
  const double large = fiber_spectrum(p, {.mode_max = 2, .h = 0.004, .R_fib = 16.0}).smallest;
  CHECK(large <= small + 1e-9);
}

TEST_CASE("first correction solves the forced problem") {
  const auto cp = solve_first_correction(profile1(), {.h = 0.024});
  CHECK(cp.operator_residual < 1e-6);
  CHECK(cp.rhs_defect1 < 1e-8);
  CHECK(cp.rhs_defect2 < 1e-8);
  CHECK(cp.sol_defect1 < 1e-8);
  CHECK(cp.sol_defect2 < 1e-8);
}

TEST_CASE("first correction is set up for degree one only") {
  CHECK_THROWS_AS(solve_first_correction(solve_vortex(0.5, 2)), Error);
}

TEST_CASE("differentiated gauge equation holds") {
  std::vector<double> r;
  for (int N : {1000, 2000, 4000}) r.push_back(check_ode_derivative_identity(solve_vortex(1.0, 1, {.N = N})));
  CHECK(r.back() < 1e-6);
  CHECK(r[0] / r[2] > 4.0);

  VortexProfile z = profile1();
  std::fill(z.U.begin(), z.U.end(), 0.0);
  std::fill(z.V.begin(), z.V.end(), 0.0);
  CHECK(check_ode_derivative_identity(z) == 0.0);
}
