#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "ymh/core/error.hpp"
#include "ymh/core/lanczos.hpp"
#include "ymh/core/order_fit.hpp"
#include "ymh/gamma_geometry.hpp"

namespace ymh {

// Smooth step: 0 for t <= 0, 1 for t >= 1, C-infinity in between.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// 1 on rho <= R/2, 0 on rho >= R.
inline double rho_cutoff(double s, double R) {
  const double rho = weight_rho_unscaled(s);
  return 1.0 - smooth_step((rho - 0.5 * R) / (0.5 * R));
}

// Jacobi coefficients in terms of S = sin 2s = rho^{-2} and c = cos 2s.
struct JacobiCoeffs {
  double S, c;
  explicit JacobiCoeffs(double s) : S(std::sin(2.0 * s)), c(std::cos(2.0 * s)) {}
  double r2() const { return S; }            // rho^-2
  double r4() const { return S * S; }        // rho^-4
  double r6() const { return S * S * S; }    // rho^-6
};

enum class JacobiStencil {
  Flux,        // second order, symmetric in the rho^4 pairing
  FirstOrder,  // forward difference for the k_s term; negative control for convergence studies
};

// L_Gamma N on the interior s-nodes; rows 0 and Ns are left at zero.
inline NormalField apply_jacobi(const NormalField& N, JacobiStencil stencil = JacobiStencil::Flux) {
  const SurfaceGrid& g = N.grid;
  require(N.k1.rows() == g.Ns + 1 && N.k1.cols() == g.Ntheta && N.k2.rows() == g.Ns + 1 && N.k2.cols() == g.Ntheta,
          ErrorCode::GridMismatch, "normal field does not match its grid");
  require(g.Ntheta >= 4 && g.Ntheta % 2 == 0, ErrorCode::GridMismatch, "theta grid must be even and >= 4");
  Eigen::MatrixXd D1, D2;
  detail::periodic_diff(g.Ntheta, D1, D2);
  const Eigen::MatrixXd t1 = N.k1 * D1.transpose(), t2 = N.k2 * D1.transpose();
  const Eigen::MatrixXd tt1 = N.k1 * D2.transpose(), tt2 = N.k2 * D2.transpose();
  const double h = g.hs();
  NormalField out = NormalField::zeros(g);
  for (int i = 1; i < g.Ns; ++i) {
    const JacobiCoeffs q(g.s(i));
    const double pot = q.r2() * (2.0 * q.r4() - q.c * q.c);
    const double Sp = std::sin(2.0 * (g.s(i) + 0.5 * h)), Sm = std::sin(2.0 * (g.s(i) - 0.5 * h));
    for (int j = 0; j < g.Ntheta; ++j) {
      // rho^-6 k_ss + 2 rho^-4 c k_s = S^2 (S k_s)', differenced in flux form so the weighted pairing is symmetric
      double f1 = (Sp * (N.k1(i + 1, j) - N.k1(i, j)) - Sm * (N.k1(i, j) - N.k1(i - 1, j))) / (h * h);
      double f2 = (Sp * (N.k2(i + 1, j) - N.k2(i, j)) - Sm * (N.k2(i, j) - N.k2(i - 1, j))) / (h * h);
      if (stencil == JacobiStencil::FirstOrder) {
        f1 = q.S * (N.k1(i + 1, j) - 2 * N.k1(i, j) + N.k1(i - 1, j)) / (h * h) +
             2 * q.c * (N.k1(i + 1, j) - N.k1(i, j)) / h;
        f2 = q.S * (N.k2(i + 1, j) - 2 * N.k2(i, j) + N.k2(i - 1, j)) / (h * h) +
             2 * q.c * (N.k2(i + 1, j) - N.k2(i, j)) / h;
      }
      out.k1(i, j) = q.r4() * f1 + q.r2() * tt1(i, j) - 2 * q.r2() * q.c * t2(i, j) + pot * N.k1(i, j);
      out.k2(i, j) = q.r4() * f2 + q.r2() * tt2(i, j) + 2 * q.r2() * q.c * t1(i, j) + pot * N.k2(i, j);
    }
  }
  return out;
}

inline double interior_sup(const NormalField& N) {
  double m = 0.0;
  for (int i = 1; i < N.grid.Ns; ++i)
    for (int j = 0; j < N.grid.Ntheta; ++j) m = std::max({m, std::abs(N.k1(i, j)), std::abs(N.k2(i, j))});
  return m;
}

// Weighted pairing int <N, M> w dvol with dvol = rho^4 ds dtheta; w = rho^{-6} when weighted.
inline double surface_inner(const NormalField& N, const NormalField& M, bool rho6_weight = false) {
  require(N.grid == M.grid, ErrorCode::GridMismatch, "fields live on different grids");
  const SurfaceGrid& g = N.grid;
  const double h = g.hs(), ht = 2.0 * std::numbers::pi / g.Ntheta;
  double total = 0.0;
  for (int i = 0; i <= g.Ns; ++i) {
    const double wi = (i == 0 || i == g.Ns) ? 0.5 : 1.0;
    const JacobiCoeffs q(g.s(i));
    const double w = wi * h * ht / (q.S * q.S) * (rho6_weight ? q.r6() : 1.0);
    double row = 0.0;
    for (int j = 0; j < g.Ntheta; ++j) row += N.k1(i, j) * M.k1(i, j) + N.k2(i, j) * M.k2(i, j);
    total += w * row;
  }
  return total;
}

// Q(N) = int |nabla^nu N|^2 - 2 rho^{-6} |N|^2 dvol, expanded with the normal connection nabla_theta m = cos2s n.
inline double quadratic_form_Q(const NormalField& N, double boundary_tol = 1e-12) {
  const SurfaceGrid& g = N.grid;
  require(g.Ntheta >= 4 && g.Ntheta % 2 == 0, ErrorCode::GridMismatch, "theta grid must be even and >= 4");
  const double scale = std::max({1.0, N.k1.cwiseAbs().maxCoeff(), N.k2.cwiseAbs().maxCoeff()});
  for (int j = 0; j < g.Ntheta; ++j)
    for (int i : {0, g.Ns})
      require(std::abs(N.k1(i, j)) <= boundary_tol * scale && std::abs(N.k2(i, j)) <= boundary_tol * scale,
              ErrorCode::BoundaryNonzero, "normal field does not vanish on rho = R");
  Eigen::MatrixXd D1, D2;
  detail::periodic_diff(g.Ntheta, D1, D2);
  const Eigen::MatrixXd t1 = N.k1 * D1.transpose(), t2 = N.k2 * D1.transpose();
  const double h = g.hs(), ht = 2.0 * std::numbers::pi / g.Ntheta;
  double grad_s = 0.0, rest = 0.0;
  // s-gradient on the staggered midpoints: rho^-6 * rho^4 = S
  for (int i = 0; i < g.Ns; ++i) {
    const double S = std::sin(2.0 * (g.s(i) + 0.5 * h));
    double row = 0.0;
    for (int j = 0; j < g.Ntheta; ++j) {
      const double d1 = N.k1(i + 1, j) - N.k1(i, j), d2 = N.k2(i + 1, j) - N.k2(i, j);
      row += d1 * d1 + d2 * d2;
    }
    grad_s += S * row / h;
  }
  for (int i = 1; i < g.Ns; ++i) {
    const JacobiCoeffs q(g.s(i));
    double row = 0.0;
    for (int j = 0; j < g.Ntheta; ++j) {
      const double a = N.k1(i, j), b = N.k2(i, j);
      row += t1(i, j) * t1(i, j) + t2(i, j) * t2(i, j) + 2.0 * q.c * (a * t2(i, j) - b * t1(i, j)) -
             (2.0 * q.S * q.S - q.c * q.c) * (a * a + b * b);
    }
    rest += row / q.S * h;  // rho^-2 * rho^4 = 1/S
  }
  return (grad_s + rest) * ht;
}

// ---------------------------------------------------------------------------------------------
// Kernel residual ladder

struct JacobiKernelRow {
  int Ns = 0;
  double h = 0.0;
  double residual = 0.0;
};

struct JacobiKernelTable {
  int index = 0;
  double R = 0.0;
  std::vector<JacobiKernelRow> rows;
  OrderFit fit;
};

template <class F>
JacobiKernelTable jacobi_residual_ladder(F&& field, double R, const std::vector<int>& Ns_list, int Ntheta = 8,
                                         JacobiStencil stencil = JacobiStencil::Flux) {
  require(Ns_list.size() >= 3, ErrorCode::InsufficientLadder, "need at least three grids");
  JacobiKernelTable t;
  t.R = R;
  std::vector<double> hs, es;
  for (int Ns : Ns_list) {
    const SurfaceGrid g = make_surface_grid(R, Ns, Ntheta);
    const double r = interior_sup(apply_jacobi(sample_normal_field(g, field), stencil));
    t.rows.push_back({Ns, g.hs(), r});
    hs.push_back(g.hs());
    es.push_back(r);
  }
  t.fit = fit_order(hs, es);
  return t;
}

inline JacobiKernelTable jacobi_kernel_residual(int index, const std::vector<int>& Ns_list = {100, 200, 400},
                                               double R = 5.0, JacobiStencil stencil = JacobiStencil::Flux) {
  require(index >= 1 && index <= 6, ErrorCode::BadIndex, "Jacobi field index must be 1..6");
  auto t = jacobi_residual_ladder([index](double s, double th) { return jacobi_field(index, s, th); }, R, Ns_list, 8,
                                  stencil);
  t.index = index;
  return t;
}

// (sin 2s)^0.6 m: not a Jacobi field.
inline JacobiKernelTable jacobi_negative_control(const std::vector<int>& Ns_list = {100, 200, 400}, double R = 5.0) {
  auto t = jacobi_residual_ladder(
      [](double s, double) { return std::pair<double, double>{std::pow(std::sin(2.0 * s), 0.6), 0.0}; }, R,
      Ns_list);
  t.index = 0;
  return t;
}

// ---------------------------------------------------------------------------------------------
// Generalized eigenproblem -(Delta^nu + 2 rho^-6) N = mu rho^-6 N on Gamma^R

struct JacobiBlock {
  SpMat A, B;
  int n_inner = 0;
};

// Mode m: k1 = K1(s) cos m theta, k2 = K2(s) sin m theta. Unknowns interleaved (2i, 2i+1) over interior nodes.
inline JacobiBlock assemble_jacobi_mode(double R, int Ns, int m) {
  require(R > 2.0, ErrorCode::OutOfRange, "truncation radius must exceed 2");
  require(m >= 0, ErrorCode::BadIndex, "mode index must be nonnegative");
  const SurfaceGrid g = make_surface_grid(R, Ns, 1);
  const double h = g.hs();
  const int n = Ns - 1;
  std::vector<Eigen::Triplet<double>> ta, tb;
  for (int i = 1; i < Ns; ++i) {
    const int row = i - 1;
    const double s = g.s(i), S = std::sin(2 * s), c = std::cos(2 * s);
    const double Sp = std::sin(2 * (s + 0.5 * h)), Sm = std::sin(2 * (s - 0.5 * h));
    const double diag = (Sp + Sm) / h + h * (m * m + c * c - 2 * S * S) / S;
    for (int comp = 0; comp < 2; ++comp) {
      const int id = 2 * row + comp;
      ta.emplace_back(id, id, diag);
      if (i > 1) ta.emplace_back(id, id - 2, -Sm / h);
      if (i < Ns - 1) ta.emplace_back(id, id + 2, -Sp / h);
      tb.emplace_back(id, id, h * S);
    }
    if (m != 0) {
      const double cpl = h * 2.0 * m * c / S;
      ta.emplace_back(2 * row, 2 * row + 1, cpl);
      ta.emplace_back(2 * row + 1, 2 * row, cpl);
    }
  }
  JacobiBlock b;
  b.n_inner = n;
  b.A.resize(2 * n, 2 * n);
  b.B.resize(2 * n, 2 * n);
  b.A.setFromTriplets(ta.begin(), ta.end());
  b.B.setFromTriplets(tb.begin(), tb.end());
  return b;
}

struct JacobiModeSpectrum {
  int mode = 0;
  std::vector<double> values, residuals;
};

struct JacobiSpectrum {
  double R = 0.0;
  int Ns = 0;
  std::vector<JacobiModeSpectrum> modes;
  double mu_min = 0.0;
  int mode_min = 0;
  double max_residual = 0.0;
  bool dense_validated = false;
  double dense_gap = 0.0;
};

struct JacobiSpectrumOptions {
  int Ns = 0;  // 0 picks max(800, 8 R^2)
  int mode_max = 4;
  int nev = 2;
  double sigma = -1.0;
  std::uint64_t seed = 12345;
  int dense_Ns = 160;
};

inline int default_jacobi_Ns(double R) { return std::max(800, static_cast<int>(std::ceil(8.0 * R * R))); }

inline JacobiSpectrum jacobi_smallest_eig(double R, JacobiSpectrumOptions opt = {}) {
  require(R > 2.0, ErrorCode::OutOfRange, "truncation radius must exceed 2");
  JacobiSpectrum rep;
  rep.R = R;
  rep.Ns = opt.Ns > 0 ? opt.Ns : default_jacobi_Ns(R);
  rep.mu_min = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= opt.mode_max; ++m) {
    const JacobiBlock blk = assemble_jacobi_mode(R, rep.Ns, m);
    LanczosOptions lo;
    lo.nev = opt.nev;
    lo.sigma = opt.sigma;
    lo.seed = opt.seed + m;
    const EigenPairs ep = shift_invert_lanczos(blk.A, blk.B, lo);
    JacobiModeSpectrum ms{m, ep.values, ep.residuals};
    for (double r : ep.residuals) rep.max_residual = std::max(rep.max_residual, r);
    if (ep.values.front() < rep.mu_min) {
      rep.mu_min = ep.values.front();
      rep.mode_min = m;
    }
    rep.modes.push_back(ms);
  }
  // the iterative path against a dense solve on a coarse grid
  double gap = 0.0;
  for (int m = 0; m <= opt.mode_max; ++m) {
    const JacobiBlock blk = assemble_jacobi_mode(R, opt.dense_Ns, m);
    LanczosOptions lo;
    lo.nev = opt.nev;
    lo.sigma = opt.sigma;
    lo.seed = opt.seed + m;
    const EigenPairs ep = shift_invert_lanczos(blk.A, blk.B, lo);
    const std::vector<double> dv = dense_generalized_eigs(blk.A, blk.B, opt.nev);
    for (int k = 0; k < opt.nev; ++k) gap = std::max(gap, std::abs(ep.values[k] - dv[k]) / std::max(1.0, std::abs(dv[k])));
  }
  rep.dense_gap = gap;
  require(gap < 1e-8, ErrorCode::ValidationGap, "shift-invert and dense spectra disagree");
  rep.dense_validated = true;
  return rep;
}

}  // namespace ymh
