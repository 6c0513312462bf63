#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ymh/core/error.hpp"
#include "ymh/core/lanczos.hpp"
#include "ymh/core/order_fit.hpp"
#include "ymh/core/quadrature.hpp"
#include "ymh/vortex_profile.hpp"

namespace ymh {

using cd = std::complex<double>;
using Grid2c = Eigen::MatrixXcd;  // rows: radial node k, cols: angular node l
using Grid2 = Eigen::MatrixXd;

// Half-offset polar grid: r_k = (k + 1/2) h, k < K, Dirichlet at (K + 1/2) h; phi_l = 2 pi l / M.
struct PolarGrid {
  double h = 0.024;
  int K = 500;
  int M = 16;

  double r(int k) const { return (k + 0.5) * h; }
  double phi(int l) const { return 2.0 * std::numbers::pi * l / M; }
  double R() const { return (K + 0.5) * h; }
  double cell(int k) const { return r(k) * h * 2.0 * std::numbers::pi / M; }

  bool operator==(const PolarGrid& o) const { return h == o.h && K == o.K && M == o.M; }
};

inline PolarGrid make_polar_grid(double h, double R_fib, int M) {
  require(h > 0 && R_fib > h, ErrorCode::OutOfRange, "bad polar grid extent");
  require(M >= 4 && M % 2 == 0, ErrorCode::GridMismatch, "angular count must be even and >= 4");
  PolarGrid g;
  g.h = h;
  g.K = static_cast<int>(std::floor(R_fib / h - 0.5));
  g.M = M;
  return g;
}

inline double default_R_fib(double lambda) { return std::max(12.0, 24.0 / decay_rate(lambda)); }

struct FiberState {
  PolarGrid grid;
  Grid2c xi;
  Grid2 B1, B2;  // components along dt1, dt2

  static FiberState zeros(const PolarGrid& g) {
    return {g, Grid2c::Zero(g.K, g.M), Grid2::Zero(g.K, g.M), Grid2::Zero(g.K, g.M)};
  }
};

// Euclidean fiber pairing with the polar quadrature weights.
inline double fiber_inner(const FiberState& u, const FiberState& v) {
  require(u.grid == v.grid, ErrorCode::GridMismatch, "states live on different grids");
  double s = 0.0;
  for (int k = 0; k < u.grid.K; ++k) {
    double row = 0.0;
    for (int l = 0; l < u.grid.M; ++l)
      row += (std::conj(u.xi(k, l)) * v.xi(k, l)).real() + u.B1(k, l) * v.B1(k, l) + u.B2(k, l) * v.B2(k, l);
    s += row * u.grid.cell(k);
  }
  return s;
}

inline double fiber_sup(const FiberState& u) {
  double m = 0.0;
  for (int k = 0; k < u.grid.K; ++k)
    for (int l = 0; l < u.grid.M; ++l)
      m = std::max({m, std::abs(u.xi(k, l)), std::hypot(u.B1(k, l), u.B2(k, l))});
  return m;
}

// Profile data on the radial nodes of a polar grid.
struct FiberRadial {
  std::vector<double> r, U, dU, V, dV, W;  // W = j (1-V) U / r
  double lambda = 1.0;
  int degree = 1;
};

inline FiberRadial sample_radial(const VortexProfile& p, const PolarGrid& g) {
  require(g.R() <= p.R_max() + 1e-12, ErrorCode::GridMismatch, "fiber disk exceeds the profile domain");
  ProfileSampler s(p);
  FiberRadial f;
  f.lambda = p.lambda;
  f.degree = p.degree;
  for (int k = 0; k < g.K; ++k) {
    const double r = g.r(k);
    auto jt = s(r);
    f.r.push_back(r);
    f.U.push_back(jt.U);
    f.dU.push_back(jt.dU);
    f.V.push_back(jt.V);
    f.dV.push_back(jt.dV);
    f.W.push_back(p.degree * jt.Z * jt.U / r);
  }
  return f;
}

struct FiberKernels {
  PolarGrid grid;
  FiberState K1, K2;  // (T1, TB1) and (T2, TB2)
  const VortexProfile* profile = nullptr;
};

// T1 = nabla_{A,1} psi, TB1 = iota_{d/dt1} F, and likewise for t2.
inline FiberKernels build_fiber_kernels(const VortexProfile& p, const PolarGrid& g) {
  FiberRadial f = sample_radial(p, g);
  const double j = p.degree;
  FiberKernels out{g, FiberState::zeros(g), FiberState::zeros(g), &p};
  for (int k = 0; k < g.K; ++k) {
    const double b = j * f.dV[k] / f.r[k];
    for (int l = 0; l < g.M; ++l) {
      const double ph = g.phi(l), c = std::cos(ph), s = std::sin(ph);
      const cd e = std::polar(1.0, j * ph);
      out.K1.xi(k, l) = cd(f.dU[k] * c, -f.W[k] * s) * e;
      out.K2.xi(k, l) = cd(f.dU[k] * s, f.W[k] * c) * e;
      out.K1.B1(k, l) = 0.0;
      out.K1.B2(k, l) = b;
      out.K2.B1(k, l) = -b;
      out.K2.B2(k, l) = 0.0;
    }
  }
  return out;
}

struct IdentityRow {
  std::string name;
  double lhs_2d = 0.0;
  double rhs_1d = 0.0;
  double gap = 0.0;  // relative, or absolute for the vanishing identity
};

struct IdentityReport {
  double lambda = 0.0;
  std::vector<IdentityRow> rows;  // five relative identities then Re int conj(T1) T2
  double re_T1T2 = 0.0;
};

struct IdentityOptions {
  double h2 = 0.05;  // Cartesian spacing of the 2D rule
  double L = 0.0;    // half-width; 0 picks R_max / sqrt(2)
};

inline IdentityReport kernel_identities(const VortexProfile& p, IdentityOptions opt = {}) {
  const double L = opt.L > 0 ? opt.L : p.R_max() / std::sqrt(2.0);
  const int n = 2 * static_cast<int>(std::round(L / opt.h2));  // even, so no node lands on the origin
  const double h2 = 2.0 * L / n;
  const double j = p.degree;
  ProfileSampler s(p);

  double t11 = 0, t22 = 0, re12 = 0, im12 = 0, b11 = 0, b22 = 0;
  // cell-centred tensor trapezoid; integrands decay exponentially so this is spectrally accurate
  for (int a = 0; a < n; ++a) {
    const double x = -L + (a + 0.5) * h2;
    double r11 = 0, r22 = 0, rre = 0, rim = 0, rb1 = 0, rb2 = 0;
    for (int b = 0; b < n; ++b) {
      const double y = -L + (b + 0.5) * h2;
      const double r = std::hypot(x, y);
      const double c = x / r, sn = y / r;
      auto jt = s(r);
      const double W = j * jt.Z * jt.U / r;
      const cd z1(jt.dU * c, -W * sn), z2(jt.dU * sn, W * c);  // common phase cancels in every pairing
      const double bb = j * jt.dV / r;
      r11 += std::norm(z1);
      r22 += std::norm(z2);
      const cd p12 = std::conj(z1) * z2;
      rre += p12.real();
      rim += p12.imag();
      rb1 += bb * bb;
      rb2 += bb * bb;
    }
    t11 += r11;
    t22 += r22;
    re12 += rre;
    im12 += rim;
    b11 += rb1;
    b22 += rb2;
  }
  const double w2 = h2 * h2;
  t11 *= w2;
  t22 *= w2;
  re12 *= w2;
  im12 *= w2;
  b11 *= w2;
  b22 *= w2;

  // radial side on the profile nodes
  const int N = p.N();
  std::vector<double> fT(N + 1), fI(N + 1), fB(N + 1);
  for (int i = 0; i <= N; ++i) {
    const double r = p.r[i];
    if (i == 0) {
      fT[i] = 0.0;
      fB[i] = 0.0;
    } else {
      fT[i] = r * p.dU[i] * p.dU[i] + j * j * p.U[i] * p.U[i] * p.Z[i] * p.Z[i] / r;
      fB[i] = j * j * p.dV[i] * p.dV[i] / r;
    }
    fI[i] = j * p.U[i] * p.dU[i] * p.Z[i];
  }
  const double pi = std::numbers::pi;
  const double T = pi * quad::simpson(fT, p.h);
  const double I = 2.0 * pi * quad::simpson(fI, p.h);
  const double Bv = 2.0 * pi * quad::simpson(fB, p.h);

  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  IdentityReport rep;
  rep.lambda = p.lambda;
  rep.rows = {{"int|T1|^2", t11, T, rel(t11, T)},
              {"int|T2|^2", t22, T, rel(t22, T)},
              {"Im int conj(T1)T2", im12, I, rel(im12, I)},
              {"int|TB1|^2", b11, Bv, rel(b11, Bv)},
              {"int|TB2|^2", b22, Bv, rel(b22, Bv)}};
  rep.re_T1T2 = re12;
  return rep;
}

// ---------------------------------------------------------------------------------------------
// 2D operator

struct FiberOpFlags {
  bool gauge_fixed = true;
};

namespace detail {

// Fourier differentiation matrices on M equispaced points (even M).
inline void periodic_diff(int M, Eigen::MatrixXd& D1, Eigen::MatrixXd& D2) {
  const double hp = 2.0 * std::numbers::pi / M;
  D1 = Eigen::MatrixXd::Zero(M, M);
  D2 = Eigen::MatrixXd::Zero(M, M);
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < M; ++k) {
      if (i == k) {
        D2(i, k) = -std::numbers::pi * std::numbers::pi / (3.0 * hp * hp) - 1.0 / 6.0;
        continue;
      }
      const int d = i - k;
      const double sgn = (d % 2 == 0) ? 1.0 : -1.0;
      D1(i, k) = 0.5 * sgn / std::tan(d * hp / 2.0);
      const double sn = std::sin(d * hp / 2.0);
      D2(i, k) = -0.5 * sgn / (sn * sn);
    }
}

struct Rot {
  Grid2 p, q, br, bp;
};

inline Rot to_rotating(const FiberState& s, int j) {
  const PolarGrid& g = s.grid;
  Rot o{Grid2(g.K, g.M), Grid2(g.K, g.M), Grid2(g.K, g.M), Grid2(g.K, g.M)};
  for (int l = 0; l < g.M; ++l) {
    const double ph = g.phi(l), c = std::cos(ph), sn = std::sin(ph);
    const cd e = std::polar(1.0, -j * ph);
    for (int k = 0; k < g.K; ++k) {
      const cd z = s.xi(k, l) * e;
      o.p(k, l) = z.real();
      o.q(k, l) = z.imag();
      o.br(k, l) = c * s.B1(k, l) + sn * s.B2(k, l);
      o.bp(k, l) = -sn * s.B1(k, l) + c * s.B2(k, l);
    }
  }
  return o;
}

inline FiberState from_rotating(const Rot& o, const PolarGrid& g, int j) {
  FiberState s = FiberState::zeros(g);
  for (int l = 0; l < g.M; ++l) {
    const double ph = g.phi(l), c = std::cos(ph), sn = std::sin(ph);
    const cd e = std::polar(1.0, j * ph);
    for (int k = 0; k < g.K; ++k) {
      s.xi(k, l) = cd(o.p(k, l), o.q(k, l)) * e;
      s.B1(k, l) = c * o.br(k, l) - sn * o.bp(k, l);
      s.B2(k, l) = sn * o.br(k, l) + c * o.bp(k, l);
    }
  }
  return s;
}

// -(1/r)(r f')' with zero flux at r = 0 and f = 0 beyond the last node.
inline Grid2 neg_radial_lap(const Grid2& f, const PolarGrid& g) {
  Grid2 o(g.K, g.M);
  const double h = g.h;
  for (int k = 0; k < g.K; ++k) {
    const double rp = (k + 1) * h, rm = k * h, r = g.r(k);
    for (int l = 0; l < g.M; ++l) {
      const double fk = f(k, l);
      const double fp = (k + 1 < g.K) ? f(k + 1, l) : 0.0;
      const double fm = (k > 0) ? f(k - 1, l) : 0.0;
      o(k, l) = -(rp * (fp - fk) - rm * (fk - fm)) / (h * h * r);
    }
  }
  return o;
}

}  // namespace detail

inline FiberState fiber_linop_apply(const VortexProfile& p, const FiberState& st, FiberOpFlags flags = {}) {
  const PolarGrid& g = st.grid;
  require(st.xi.rows() == g.K && st.xi.cols() == g.M && st.B1.rows() == g.K && st.B2.cols() == g.M,
          ErrorCode::GridMismatch, "state shape does not match its grid");
  const int j = p.degree;
  const double lam = p.lambda;
  FiberRadial f = sample_radial(p, g);
  Eigen::MatrixXd D1, D2;
  detail::periodic_diff(g.M, D1, D2);

  detail::Rot x = detail::to_rotating(st, j);
  // phi-derivatives act on rows: f * D^T
  auto dphi = [&](const Grid2& a) -> Grid2 { return a * D1.transpose(); };
  auto dphi2 = [&](const Grid2& a) -> Grid2 { return a * D2.transpose(); };

  detail::Rot o;
  o.p = detail::neg_radial_lap(x.p, g);
  o.q = detail::neg_radial_lap(x.q, g);
  o.br = detail::neg_radial_lap(x.br, g);
  o.bp = detail::neg_radial_lap(x.bp, g);
  Grid2 pp = dphi2(x.p), qq = dphi2(x.q), rr = dphi2(x.br), ss = dphi2(x.bp);
  Grid2 p1 = dphi(x.p), q1 = dphi(x.q), r1 = dphi(x.br), s1 = dphi(x.bp);
  for (int k = 0; k < g.K; ++k) {
    const double r = f.r[k], r2 = r * r;
    const double a = j * (1.0 - f.V[k]);
    const double U = f.U[k], U2 = U * U, dU = f.dU[k], W = f.W[k];
    for (int l = 0; l < g.M; ++l) {
      const double P = x.p(k, l), Q = x.q(k, l), X = x.br(k, l), Y = x.bp(k, l);
      o.p(k, l) += -pp(k, l) / r2 + 2.0 * a * q1(k, l) / r2 + a * a * P / r2 - 2.0 * W * Y + 0.5 * lam * (3.0 * U2 - 1.0) * P;
      o.q(k, l) += -qq(k, l) / r2 - 2.0 * a * p1(k, l) / r2 + a * a * Q / r2 + 2.0 * dU * X +
                   ((0.5 * lam + 1.0) * U2 - 0.5 * lam) * Q;
      o.br(k, l) += -rr(k, l) / r2 + 2.0 * s1(k, l) / r2 + X / r2 + 2.0 * dU * Q + U2 * X;
      o.bp(k, l) += -ss(k, l) / r2 - 2.0 * r1(k, l) / r2 + Y / r2 - 2.0 * W * P + U2 * Y;
    }
  }

  if (!flags.gauge_fixed) {
    // subtract the gauge-fixing gradient: g = -div b + U q, L = LL - (0, U g, dg/dr, (1/r) dg/dphi)
    require(g.M % 2 == 0, ErrorCode::GridMismatch, "parity ghosts need even M");
    const int half = g.M / 2;
    const double h = g.h;
    Grid2 gg(g.K, g.M);
    for (int k = 0; k < g.K; ++k) {
      const double r = f.r[k];
      for (int l = 0; l < g.M; ++l) {
        const double bp = (k + 1 < g.K) ? x.br(k + 1, l) : 0.0;
        // ghost at -h/2 is the antipodal node with radial component flipped
        const double bm = (k > 0) ? x.br(k - 1, l) : -x.br(0, (l + half) % g.M);
        // div b = b_r' + (b_r + d_phi b_phi) / r; the bracket is O(r) and spectral in phi
        gg(k, l) = -(bp - bm) / (2.0 * h) - (x.br(k, l) + s1(k, l)) / r + f.U[k] * x.q(k, l);
      }
    }
    Grid2 gphi = gg * D1.transpose();
    for (int k = 0; k < g.K; ++k) {
      const double r = f.r[k];
      for (int l = 0; l < g.M; ++l) {
        const double gp = (k + 1 < g.K) ? gg(k + 1, l) : 0.0;
        const double gm = (k > 0) ? gg(k - 1, l) : gg(0, (l + half) % g.M);
        o.q(k, l) -= f.U[k] * gg(k, l);
        o.br(k, l) -= (gp - gm) / (2.0 * h);
        o.bp(k, l) -= gphi(k, l) / r;
      }
    }
  }
  return detail::from_rotating(o, g, j);
}

struct KernelResidualRow {
  double h = 0.0;
  double res1 = 0.0, res2 = 0.0;
};

struct KernelResidualTable {
  std::vector<KernelResidualRow> rows;
  OrderFit fit1, fit2;
};

inline KernelResidualTable fiber_kernel_residual(const VortexProfile& p, const std::vector<PolarGrid>& grids) {
  require(grids.size() >= 3, ErrorCode::InsufficientLadder, "need at least three grids");
  KernelResidualTable t;
  std::vector<double> hs, e1, e2;
  for (const auto& g : grids) {
    auto K = build_fiber_kernels(p, g);
    const double r1 = fiber_sup(fiber_linop_apply(p, K.K1));
    const double r2 = fiber_sup(fiber_linop_apply(p, K.K2));
    t.rows.push_back({g.h, r1, r2});
    hs.push_back(g.h);
    e1.push_back(r1);
    e2.push_back(r2);
  }
  t.fit1 = fit_order(hs, e1);
  t.fit2 = fit_order(hs, e2);
  return t;
}

// ---------------------------------------------------------------------------------------------
// Per-mode blocks. Unknowns (P, Q, X, Y) per node with p = P cos n phi, q = Q sin n phi,
// b_r = X sin n phi, b_phi = Y cos n phi in the rotating frame. Rows are scaled by r h,
// so A is symmetric and B = diag(r h).

struct ModeBlock {
  SpMat A, B;
  int K = 0;
};

inline ModeBlock assemble_mode(const FiberRadial& f, const PolarGrid& g, int n) {
  const int K = g.K;
  const double h = g.h, lam = f.lambda, j = f.degree;
  std::vector<Eigen::Triplet<double>> t, tb;
  auto id = [](int comp, int k) { return 4 * k + comp; };  // interleaved, so the band stays narrow
  for (int k = 0; k < K; ++k) {
    const double r = f.r[k], r2 = r * r, w = r * h;
    const double rp = (k + 1) * h, rm = k * h;
    const double a = j * (1.0 - f.V[k]);
    const double U2 = f.U[k] * f.U[k], dU = f.dU[k], W = f.W[k];
    const double diag_lap = (rp + rm) / h;
    const double pot[4] = {(n * n + a * a) / r2 + 0.5 * lam * (3.0 * U2 - 1.0),
                           (n * n + a * a) / r2 + (0.5 * lam + 1.0) * U2 - 0.5 * lam, (n * n + 1.0) / r2 + U2,
                           (n * n + 1.0) / r2 + U2};
    for (int c = 0; c < 4; ++c) {
      t.emplace_back(id(c, k), id(c, k), diag_lap + w * pot[c]);
      if (k + 1 < K) {
        t.emplace_back(id(c, k), id(c, k + 1), -rp / h);
        t.emplace_back(id(c, k + 1), id(c, k), -rp / h);
      }
      tb.emplace_back(id(c, k), id(c, k), w);
    }
    auto sym = [&](int c1, int c2, double v) {
      t.emplace_back(id(c1, k), id(c2, k), w * v);
      t.emplace_back(id(c2, k), id(c1, k), w * v);
    };
    sym(0, 1, 2.0 * a * n / r2);
    sym(0, 3, -2.0 * W);
    sym(1, 2, 2.0 * dU);
    sym(2, 3, -2.0 * n / r2);
  }
  ModeBlock mb;
  mb.K = K;
  mb.A.resize(4 * K, 4 * K);
  mb.B.resize(4 * K, 4 * K);
  mb.A.setFromTriplets(t.begin(), t.end());
  mb.B.setFromTriplets(tb.begin(), tb.end());
  return mb;
}

struct ModeSpectrum {
  int mode = 0;
  double eig1 = 0.0, eig2 = 0.0;
  double residual = 0.0;
  Eigen::VectorXd vec1;  // B-normalised (P,Q,X,Y) stacked
};

struct SpectrumReport {
  double lambda = 0.0;
  int degree = 1;
  PolarGrid grid;
  std::vector<ModeSpectrum> modes;
  double smallest = 0.0;
  int smallest_mode = 0;
  bool dense_validated = false;
  double dense_gap = 0.0;
};

struct SpectrumOptions {
  int mode_max = 8;
  double h = 0.001;   // the zero mode needs a fine radial grid to stay within 1e-6
  double R_fib = 0.0; // 0: default_R_fib
  std::uint64_t seed = 12345;
  int dense_K = 60;   // coarse grid for validation against a dense solver
};

inline EigenPairs mode_eigs(const ModeBlock& mb, double lam, std::uint64_t seed) {
  LanczosOptions lo;
  lo.nev = 2;
  lo.sigma = -1.0 - lam;
  lo.seed = seed;
  return shift_invert_lanczos(mb.A, mb.B, lo);
}

inline SpectrumReport fiber_spectrum(const VortexProfile& p, SpectrumOptions opt = {}) {
  const double h = opt.h > 0 ? opt.h : 2.0 * p.h;
  const double R = opt.R_fib > 0 ? opt.R_fib : std::min(default_R_fib(p.lambda), p.R_max());
  PolarGrid g = make_polar_grid(h, R, 16);
  FiberRadial f = sample_radial(p, g);
  SpectrumReport rep;
  rep.lambda = p.lambda;
  rep.degree = p.degree;
  rep.grid = g;
  rep.smallest = std::numeric_limits<double>::infinity();
  for (int n = 0; n <= opt.mode_max; ++n) {
    ModeBlock mb = assemble_mode(f, g, n);
    EigenPairs ep = mode_eigs(mb, p.lambda, opt.seed + n);
    ModeSpectrum ms;
    ms.mode = n;
    ms.eig1 = ep.values[0];
    ms.eig2 = ep.values[1];
    ms.residual = std::max(ep.residuals[0], ep.residuals[1]);
    ms.vec1 = ep.vectors.col(0);
    if (ms.eig1 < rep.smallest) {
      rep.smallest = ms.eig1;
      rep.smallest_mode = n;
    }
    rep.modes.push_back(std::move(ms));
  }
  // dense cross-check of the iterative solver on a coarse disk
  PolarGrid gc = make_polar_grid(g.R() / (opt.dense_K + 0.5), g.R(), g.M);
  FiberRadial fc = sample_radial(p, gc);
  double gap = 0.0;
  for (int n : {0, 1, rep.smallest_mode}) {
    ModeBlock mb = assemble_mode(fc, gc, n);
    auto it = mode_eigs(mb, p.lambda, opt.seed);
    auto de = dense_generalized_eigs(mb.A, mb.B, 2);
    for (int k = 0; k < 2; ++k) gap = std::max(gap, std::abs(it.values[k] - de[k]) / std::max(1.0, std::abs(de[k])));
  }
  rep.dense_gap = gap;
  rep.dense_validated = gap < 1e-8;
  require(rep.dense_validated, ErrorCode::ValidationGap, "iterative and dense eigenvalues disagree");
  return rep;
}

// Decay rate of |eigenfunction| on the outer half of the disk.
inline double eigenfunction_decay_rate(const ModeSpectrum& ms, const PolarGrid& g) {
  const int K = g.K;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int k = K / 2; k < K - K / 8; ++k) {
    double a = 0.0;
    for (int c = 0; c < 4; ++c) a = std::max(a, std::abs(ms.vec1[4 * k + c]));
    if (!(a > 0)) continue;
    const double x = g.r(k), y = -std::log(a);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------------------------

struct CorrectionPair {
  FiberState state;               // (eta1, B1)
  std::vector<double> P, Y;       // radial parts: eta1 = e^{i phi} P, B1 = Y e_phi
  double operator_residual = 0.0;
  double rhs_defect1 = 0.0, rhs_defect2 = 0.0;
  double sol_defect1 = 0.0, sol_defect2 = 0.0;
};

inline FiberState first_correction_rhs(const VortexProfile& p, const PolarGrid& g) {
  FiberRadial f = sample_radial(p, g);
  FiberState s = FiberState::zeros(g);
  for (int k = 0; k < g.K; ++k)
    for (int l = 0; l < g.M; ++l) {
      const double ph = g.phi(l);
      s.xi(k, l) = f.r[k] * f.dU[k] * std::polar(1.0, ph);
      s.B1(k, l) = -std::sin(ph) * f.dV[k];
      s.B2(k, l) = std::cos(ph) * f.dV[k];
    }
  return s;
}

struct CorrectionOptions {
  double h = 0.0;
  double R_fib = 0.0;
  int M = 16;
  double tol = 1e-8;
};

inline CorrectionPair solve_first_correction(const VortexProfile& p, CorrectionOptions opt = {}) {
  require(p.degree == 1, ErrorCode::DegreeUnsupported, "first correction is set up for degree one");
  const double h = opt.h > 0 ? opt.h : 2.0 * p.h;
  const double R = opt.R_fib > 0 ? opt.R_fib : std::min(default_R_fib(p.lambda), p.R_max());
  PolarGrid g = make_polar_grid(h, R, opt.M);
  FiberRadial f = sample_radial(p, g);
  auto K = build_fiber_kernels(p, g);
  FiberState rhs = first_correction_rhs(p, g);

  CorrectionPair cp;
  const double nr = std::sqrt(fiber_inner(rhs, rhs));
  const double n1 = std::sqrt(fiber_inner(K.K1, K.K1)), n2 = std::sqrt(fiber_inner(K.K2, K.K2));
  cp.rhs_defect1 = std::abs(fiber_inner(rhs, K.K1)) / (nr * n1);
  cp.rhs_defect2 = std::abs(fiber_inner(rhs, K.K2)) / (nr * n2);
  require(cp.rhs_defect1 < opt.tol && cp.rhs_defect2 < opt.tol, ErrorCode::SolvabilityDefect,
          "right-hand side is not orthogonal to the kernels");

  // mode 0 block; the right-hand side lives in (P, Y)
  ModeBlock mb = assemble_mode(f, g, 0);
  const int Kr = g.K;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * Kr);
  for (int k = 0; k < Kr; ++k) {
    const double w = f.r[k] * g.h;
    b[4 * k] = w * f.r[k] * f.dU[k];
    b[4 * k + 3] = w * f.dV[k];
  }
  Eigen::SparseLU<SpMat> lu(mb.A);
  require(lu.info() == Eigen::Success, ErrorCode::SolvabilityDefect, "mode-0 block is singular");
  Eigen::VectorXd x = lu.solve(b);
  for (int k = 0; k < Kr; ++k) {
    cp.P.push_back(x[4 * k]);
    cp.Y.push_back(x[4 * k + 3]);
  }

  FiberState s = FiberState::zeros(g);
  for (int k = 0; k < Kr; ++k)
    for (int l = 0; l < g.M; ++l) {
      const double ph = g.phi(l);
      const double P = x[4 * k], Q = x[4 * k + 1], X = x[4 * k + 2], Y = x[4 * k + 3];
      s.xi(k, l) = cd(P, Q) * std::polar(1.0, ph);
      s.B1(k, l) = std::cos(ph) * X - std::sin(ph) * Y;
      s.B2(k, l) = std::sin(ph) * X + std::cos(ph) * Y;
    }
  // project out any kernel component picked up from round-off
  const double c1 = fiber_inner(s, K.K1) / (n1 * n1), c2 = fiber_inner(s, K.K2) / (n2 * n2);
  s.xi -= c1 * K.K1.xi + c2 * K.K2.xi;
  s.B1 -= c1 * K.K1.B1 + c2 * K.K2.B1;
  s.B2 -= c1 * K.K1.B2 + c2 * K.K2.B2;
  const double ns = std::sqrt(fiber_inner(s, s));
  cp.sol_defect1 = std::abs(fiber_inner(s, K.K1)) / (ns * n1);
  cp.sol_defect2 = std::abs(fiber_inner(s, K.K2)) / (ns * n2);

  FiberState Ls = fiber_linop_apply(p, s);
  Ls.xi -= rhs.xi;
  Ls.B1 -= rhs.B1;
  Ls.B2 -= rhs.B2;
  cp.operator_residual = fiber_sup(Ls);
  cp.state = std::move(s);
  return cp;
}

// ---------------------------------------------------------------------------------------------

// sup of -V''' - V''/r + V'/r^2 - 2 U U' (1-V) + U^2 V' on nodes 3..N-3, fourth-order stencils.
inline double check_ode_derivative_identity(const VortexProfile& p) {
  const int N = p.N();
  double m = 0.0;
  for (int i = 3; i <= N - 3; ++i) {
    const double h = p.r[i + 1] - p.r[i], r = p.r[i];
    const auto& V = p.V;
    const auto& U = p.U;
    const double v1 = (V[i - 2] - 8 * V[i - 1] + 8 * V[i + 1] - V[i + 2]) / (12 * h);
    const double v2 = (-V[i - 2] + 16 * V[i - 1] - 30 * V[i] + 16 * V[i + 1] - V[i + 2]) / (12 * h * h);
    const double v3 = (-V[i + 3] + 8 * V[i + 2] - 13 * V[i + 1] + 13 * V[i - 1] - 8 * V[i - 2] + V[i - 3]) / (8 * h * h * h);
    const double u1 = (U[i - 2] - 8 * U[i - 1] + 8 * U[i + 1] - U[i + 2]) / (12 * h);
    const double res = -v3 + v2 / r - v1 / (r * r) - 2.0 * U[i] * u1 * (1.0 - V[i]) + U[i] * U[i] * v1;
    m = std::max(m, std::abs(res));
  }
  return m;
}

}  // namespace ymh
