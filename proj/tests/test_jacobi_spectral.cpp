#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ymh/jacobi_spectral.hpp"

using namespace ymh;
using std::numbers::pi;

namespace {

NormalField bump_field(const SurfaceGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double c[2][3][2];
  for (auto& a : c)
    for (auto& b : a)
      for (auto& x : b) x = nd(rng);
  const double lo = g.s_lo, hi = g.s_hi;
  return sample_normal_field(g, [&](double s, double th) {
    const double t = (s - lo) / (hi - lo), w = std::pow(std::sin(pi * t), 4);
    double k[2] = {0, 0};
    for (int q = 0; q < 2; ++q)
      for (int m = 0; m < 3; ++m) k[q] += w * (c[q][m][0] * std::cos(m * th) + c[q][m][1] * std::sin(m * th)) * (1 + t);
    return std::pair<double, double>{k[0], k[1]};
  });
}

NormalField cut_n5(const SurfaceGrid& g, double R) {
  return sample_normal_field(g, [R](double s, double th) {
    const auto [a, b] = jacobi_field(5, s, th);
    const double w = rho_cutoff(s, R);
    return std::pair<double, double>{w * a, w * b};
  });
}

}  // namespace

TEST_CASE("constant field sees only the potential") {
  const SurfaceGrid g = make_surface_grid(5.0, 50, 8);
  const NormalField one = sample_normal_field(g, [](double, double) { return std::pair<double, double>{1.0, 0.0}; });
  const NormalField L = apply_jacobi(one);
  double gap = 0.0;
  for (int i = 1; i < g.Ns; ++i) {
    const double rho = weight_rho_unscaled(g.s(i)), c = std::cos(2 * g.s(i));
    const double want = std::pow(rho, -2) * (2 * std::pow(rho, -4) - c * c);
    for (int j = 0; j < g.Ntheta; ++j) gap = std::max({gap, std::abs(L.k1(i, j) - want), std::abs(L.k2(i, j))});
  }
  CHECK(gap < 1e-12);
}

TEST_CASE("all six Jacobi fields converge to zero at order two") {
  for (int i = 1; i <= 6; ++i) {
    const auto t = jacobi_kernel_residual(i);
    INFO("N" << i);
    CHECK(t.fit.slope > 1.8);
    CHECK(t.fit.slope < 2.2);
  }
  CHECK(interior_sup(apply_jacobi(jacobi_fields(make_surface_grid(5.0, 800, 8), 5))) < 1e-4);
}

TEST_CASE("non-Jacobi field stays away from zero") {
  const auto t = jacobi_negative_control();
  for (const auto& r : t.rows) CHECK(r.residual > 1e-2);
}

TEST_CASE("first-order stencil converges at order one") {
  const auto t = jacobi_kernel_residual(1, {100, 200, 400}, 5.0, JacobiStencil::FirstOrder);
  CHECK(t.fit.slope > 0.8);
  CHECK(t.fit.slope < 1.2);
}

TEST_CASE("kernel ladder needs three grids") {
  CHECK_THROWS_AS(jacobi_kernel_residual(1, {100, 200}), Error);
  CHECK_THROWS_AS(jacobi_kernel_residual(7), Error);
}

TEST_CASE("quadratic form matches the operator pairing") {
  const SurfaceGrid g = make_surface_grid(8.0, 400, 16);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const NormalField N = bump_field(g, seed);
    const double Q = quadratic_form_Q(N);
    const double ibp = -surface_inner(apply_jacobi(N), N);
    CHECK(std::abs(Q - ibp) < 1e-4 * std::max(1.0, std::abs(Q)));
    CHECK(Q >= -1e-6 * surface_inner(N, N, true));
  }
  CHECK(quadratic_form_Q(NormalField::zeros(g)) == 0.0);
  CHECK(quadratic_form_Q(cut_n5(g, 8.0)) >= 0.0);
  CHECK_THROWS_AS(quadratic_form_Q(jacobi_fields(g, 5)), Error);
}

TEST_CASE("operator is self-adjoint in the area pairing") {
  const SurfaceGrid g = make_surface_grid(8.0, 200, 16);
  const NormalField N = bump_field(g, 11), M = bump_field(g, 12);
  const double a = surface_inner(apply_jacobi(N), M), b = surface_inner(N, apply_jacobi(M));
  CHECK(std::abs(a - b) <= 1e-8 * std::sqrt(surface_inner(N, N) * surface_inner(M, M)));
}

TEST_CASE("truncated spectra are stable and shrink towards zero") {
  const auto s5 = jacobi_smallest_eig(5.0), s10 = jacobi_smallest_eig(10.0), s20 = jacobi_smallest_eig(20.0);
  for (const auto* s : {&s5, &s10, &s20}) {
    CHECK(s->mu_min >= -1e-6);
    CHECK(s->max_residual <= 1e-8);
    CHECK(s->dense_validated);
  }
  CHECK(s10.mu_min <= s5.mu_min + 1e-8);
  CHECK(s20.mu_min <= s10.mu_min + 1e-8);
  CHECK(s20.mu_min < s5.mu_min);
  CHECK(s20.mu_min < 0.1);
}

TEST_CASE("Fourier blocks reproduce the joint assembly") {
  const double R = 5.0;
  const int Ns = 40, Nt = 8;
  const SurfaceGrid g = make_surface_grid(R, Ns, Nt);
  const int n = (Ns - 1) * Nt * 2;
  auto id = [&](int i, int j, int c) { return ((i - 1) * Nt + j) * 2 + c; };
  Eigen::MatrixXd A(n, n), B = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < Ns; ++i)
    for (int j = 0; j < Nt; ++j)
      for (int c = 0; c < 2; ++c) {
        NormalField e = NormalField::zeros(g);
        (c == 0 ? e.k1 : e.k2)(i, j) = 1.0;
        const NormalField L = apply_jacobi(e);
        for (int i2 = 1; i2 < Ns; ++i2)
          for (int j2 = 0; j2 < Nt; ++j2) {
            const double w = 1.0 / std::pow(std::sin(2 * g.s(i2)), 2);  // area weight rho^4
            A(id(i2, j2, 0), id(i, j, c)) = -w * L.k1(i2, j2);
            A(id(i2, j2, 1), id(i, j, c)) = -w * L.k2(i2, j2);
          }
        B(id(i, j, c), id(i, j, c)) = std::sin(2 * g.s(i));  // rho^-6 rho^4
      }
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-8 * A.cwiseAbs().maxCoeff());
  const Eigen::MatrixXd As = 0.5 * (A + A.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(As, B);
  std::vector<double> joint(es.eigenvalues().data(), es.eigenvalues().data() + 6);

  std::vector<double> blocks;
  for (int m = 0; m <= 3; ++m) {
    const JacobiBlock blk = assemble_jacobi_mode(R, Ns, m);
    for (double v : dense_generalized_eigs(blk.A, blk.B, 6)) {
      blocks.push_back(v);
      if (m > 0) blocks.push_back(v);
    }
  }
  std::sort(blocks.begin(), blocks.end());
  for (int k = 0; k < 6; ++k) CHECK(std::abs(joint[k] - blocks[k]) < 1e-10 * std::max(1.0, std::abs(blocks[k])));
}
