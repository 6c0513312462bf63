#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include "ymh/core/error.hpp"
#include "ymh/core/quadrature.hpp"
#include "ymh/core/spline.hpp"
#include "ymh/gamma_geometry.hpp"
#include "ymh/jacobi_spectral.hpp"
#include "ymh/vortex_linearization.hpp"
#include "ymh/vortex_profile.hpp"

namespace ymh {

using Vec4c = Eigen::Matrix<cd, 4, 1>;

// 4th-order central difference of f along coordinate i.
template <class F>
auto fd4(F&& f, const Vec4& y, int i, double h) {
  using T = std::decay_t<decltype(f(y))>;
  Vec4 a = y, b = y, c = y, d = y;
  a[i] -= 2 * h;
  b[i] -= h;
  c[i] += h;
  d[i] += 2 * h;
  T r = (f(a) - 8.0 * f(b) + 8.0 * f(c) - f(d)) / (12.0 * h);
  return r;
}

struct FieldValue {
  cd psi;
  Vec4 A;  // covariant components along (ds~, dtheta~, da, db)
};

struct PairValue {
  cd xi;
  Vec4 B;
};

struct ApproxOptions {
  bool correction = false;   // subtract 2 eps^2 rho^-6 (eta1, B1)
  bool flat_metric = false;  // test hook: identity metric and no normal-connection term
  CorrectionOptions corr;
};

// (psi0, A0) in Fermi coordinates y = (s~, theta~, a, b), optionally with the first-correction layer.
class ApproxSolution {
 public:
  ApproxSolution(FermiChart chart, std::shared_ptr<const VortexProfile> p, ApproxOptions opt = {})
      : chart_(std::move(chart)), p_(std::move(p)), ps_(*p_), opt_(opt) {
    require(p_->degree == 1, ErrorCode::DegreeUnsupported, "the approximate solution uses the degree-one vortex");
    if (opt_.correction) {
      const CorrectionPair cp = solve_first_correction(*p_, opt_.corr);
      const PolarGrid& g = cp.state.grid;
      std::vector<double> r{0.0}, P{0.0}, Y{0.0};
      for (int k = 0; k < g.K; ++k) {
        r.push_back(g.r(k));
        P.push_back(cp.P[k]);
        Y.push_back(cp.Y[k]);
      }
      r.push_back(g.R());
      P.push_back(0.0);
      Y.push_back(0.0);
      P_ = CubicSpline(r, P);
      Y_ = CubicSpline(r, Y);
    }
  }

  const FermiChart& chart() const { return chart_; }
  const VortexProfile& profile() const { return *p_; }
  std::shared_ptr<const VortexProfile> profile_ptr() const { return p_; }
  const ProfileSampler& sampler() const { return ps_; }
  const ApproxOptions& options() const { return opt_; }
  double epsilon() const { return chart_.epsilon; }
  double lambda() const { return p_->lambda; }

  struct Fiber {
    double r, phi, t1, t2;
  };

  Fiber fiber_coords(const Vec4& y) const {
    const double e = chart_.epsilon;
    double t1 = y[2], t2 = y[3];
    if (chart_.f.active()) {
      t1 -= e * chart_.f.value(1, e * y[0], e * y[1]);
      t2 -= e * chart_.f.value(2, e * y[0], e * y[1]);
    }
    return {std::hypot(t1, t2), std::atan2(t2, t1), t1, t2};
  }

  FieldValue operator()(const Vec4& y) const {
    const double e = chart_.epsilon, s = e * y[0], th = e * y[1];
    const Fiber f = fiber_coords(y);
    const ProfileJet j = ps_(f.r);
    const double cp = std::cos(f.phi), sp = std::sin(f.phi);
    const double Vr = f.r > 0.0 ? j.V / f.r : 0.0;
    const double A3 = -Vr * sp, A4 = Vr * cp;
    FieldValue out;
    out.psi = j.U * std::polar(1.0, f.phi);
    out.A = Vec4(0.0, 0.0, A3, A4);
    if (!opt_.flat_metric) out.A[1] = -e * j.Z * std::cos(2.0 * s);
    if (chart_.f.active()) {
      const Perturbation& P = chart_.f;
      out.A[0] = -e * e * (P.ds(1, s, th) * A3 + P.ds(2, s, th) * A4);
      out.A[1] -= e * e * (P.dth(1, s, th) * A3 + P.dth(2, s, th) * A4);
    }
    if (opt_.correction) {
      const double S = std::sin(2.0 * s), w = 2.0 * e * e * S * S * S;
      out.psi -= w * P_(f.r) * std::polar(1.0, f.phi);
      const double y1 = Y_(f.r);
      out.A[2] -= w * y1 * (-sp);
      out.A[3] -= w * y1 * cp;
    }
    return out;
  }

  MetricValue metric(const Vec4& y) const {
    if (opt_.flat_metric) return {Mat4::Identity(), 1.0};
    return metric_at(chart_, y[0], y[1], y[2], y[3]);
  }

  // Kernels T1, T2 with their epsilon cos2s V' dtheta~ parts.
  PairValue kernel(int which, const Vec4& y) const {
    require(which == 1 || which == 2, ErrorCode::BadIndex, "kernel index must be 1 or 2");
    const double e = chart_.epsilon, s = e * y[0];
    const Fiber f = fiber_coords(y);
    const ProfileJet j = ps_(f.r);
    const double cp = std::cos(f.phi), sp = std::sin(f.phi);
    // small-r limits: U (1-V)/r -> c1, V'/r -> 2 c2
    const double W = f.r > 1e-12 ? j.U * j.Z / f.r : p_->c1;
    const double b = f.r > 1e-12 ? j.dV / f.r : 2.0 * p_->c2;
    const double tc = opt_.flat_metric ? 0.0 : e * std::cos(2.0 * s) * j.dV;
    const cd ph = std::polar(1.0, f.phi);
    PairValue out;
    if (which == 1) {
      out.xi = cd(j.dU * cp, -W * sp) * ph;
      out.B = Vec4(0.0, tc * cp, 0.0, b);
    } else {
      out.xi = cd(j.dU * sp, W * cp) * ph;
      out.B = Vec4(0.0, tc * sp, -b, 0.0);
    }
    return out;
  }

  // chi = 1 for a^2 + b^2 <= r_eps^2 / 2, 0 for a^2 + b^2 >= r_eps^2.
  double cutoff(const Vec4& y) const {
    const double r2 = y[2] * y[2] + y[3] * y[3];
    const double q = r2 / chart_.r_eps2(y[0]);
    return 1.0 - smooth_step(2.0 * q - 1.0);
  }

 private:
  FermiChart chart_;
  std::shared_ptr<const VortexProfile> p_;
  ProfileSampler ps_;
  ApproxOptions opt_;
  CubicSpline P_, Y_;
};

inline ApproxSolution build_approximate_solution(const FermiChart& chart, const VortexProfile& p,
                                                 ApproxOptions opt = {}) {
  return ApproxSolution(chart, std::make_shared<const VortexProfile>(p), opt);
}

// ---------------------------------------------------------------------------------------------
// Covariant residual

struct ResidualOptions {
  double delta = 1e-2;  // finite-difference step in each Fermi coordinate
};

struct ResidualValue {
  cd S1;
  Vec4 S2;
};

inline bool stencil_fits(const ApproxSolution& sol, const Vec4& y, double reach) {
  const FermiChart& c = sol.chart();
  const double e = c.epsilon;
  if (e * (y[0] - reach) <= 0.0 || e * (y[0] + reach) >= 0.5 * std::numbers::pi) return false;
  if (sol.options().flat_metric) return true;
  const double r = std::hypot(y[2], y[3]) + 2.0 * reach;
  return r * r < std::min(c.r_eps2(y[0] - reach), c.r_eps2(y[0] + reach));
}

inline void check_stencil_margin(const ApproxSolution& sol, const Vec4& y, double reach) {
  require(stencil_fits(sol, y, reach), ErrorCode::StencilMargin, "stencil leaves Sigma_eps or the s-range");
}

inline Vec4c covariant_gradient(const ApproxSolution& sol, const Vec4& y, double h) {
  const FieldValue v = sol(y);
  Vec4c D;
  for (int i = 0; i < 4; ++i) D[i] = fd4([&](const Vec4& z) { return sol(z).psi; }, y, i, h) - cd(0, 1) * v.A[i] * v.psi;
  return D;
}

inline Mat4 curvature(const ApproxSolution& sol, const Vec4& y, double h) {
  Mat4 dA;  // dA(i, k) = d_i A_k
  for (int i = 0; i < 4; ++i) {
    const Vec4 col = fd4([&](const Vec4& z) -> Vec4 { return sol(z).A; }, y, i, h);
    dA.row(i) = col.transpose();
  }
  return dA - dA.transpose();
}

// S1 = -Delta_A psi + (lambda/2)(|psi|^2 - 1) psi, S2 = d*dA - Im(nabla_A psi conj(psi)).
inline ResidualValue residual_S(const ApproxSolution& sol, const Vec4& y, ResidualOptions opt = {}) {
  const double h = opt.delta;
  check_stencil_margin(sol, y, 4.0 * h);
  const FieldValue v = sol(y);
  const MetricValue m0 = sol.metric(y);
  const double sg0 = std::sqrt(m0.detG);

  auto J = [&](const Vec4& z) -> Vec4c {
    const MetricValue m = sol.metric(z);
    const Mat4 gi = m.g.inverse();
    return std::sqrt(m.detG) * (gi.cast<cd>() * covariant_gradient(sol, z, h));
  };
  cd div = 0.0;
  const Vec4c J0 = J(y);
  for (int i = 0; i < 4; ++i) {
    const Vec4c d = fd4(J, y, i, h);
    div += d[i] - cd(0, 1) * v.A[i] * J0[i];
  }
  ResidualValue out;
  out.S1 = -div / sg0 + 0.5 * sol.lambda() * (std::norm(v.psi) - 1.0) * v.psi;

  auto H = [&](const Vec4& z) -> Mat4 {
    const MetricValue m = sol.metric(z);
    const Mat4 gi = m.g.inverse();
    return std::sqrt(m.detG) * gi * curvature(sol, z, h) * gi;
  };
  Vec4 divH = Vec4::Zero();  // divH_l = d_j H^{jl}
  for (int j = 0; j < 4; ++j) {
    const Mat4 d = fd4(H, y, j, h);
    divH += d.row(j).transpose();
  }
  const Vec4c D = covariant_gradient(sol, y, h);
  Vec4 cur;
  for (int i = 0; i < 4; ++i) cur[i] = (D[i] * std::conj(v.psi)).imag();
  out.S2 = -(m0.g * divH) / sg0 - cur;
  return out;
}

// Leading terms 2 eps^2 rho^-6 r~ U' e^{i phi~} and 2 eps^2 rho^-6 V' (-sin phi~ dt1 + cos phi~ dt2).
inline ResidualValue residual_leading_term(const ApproxSolution& sol, const Vec4& y) {
  const double e = sol.epsilon(), S = std::sin(2.0 * e * y[0]), w = 2.0 * e * e * S * S * S;
  const auto f = sol.fiber_coords(y);
  const ProfileJet j = sol.sampler()(f.r);
  ResidualValue out;
  out.S1 = w * f.r * j.dU * std::polar(1.0, f.phi);
  out.S2 = Vec4(0.0, 0.0, -w * std::sin(f.phi) * j.dV, w * std::cos(f.phi) * j.dV);
  return out;
}

struct FermiSample {
  double s, theta, r, phi;  // unscaled surface point and fiber polar point
};

inline Vec4 fermi_point(double eps, const FermiSample& q) {
  return Vec4(q.s / eps, q.theta / eps, q.r * std::cos(q.phi), q.r * std::sin(q.phi));
}

inline std::vector<FermiSample> default_residual_samples() {
  return {{std::numbers::pi / 3, 0.0, 1.0, 0.3},
          {std::numbers::pi / 4, 1.0, 0.8, 1.2},
          {0.6, 2.0, 1.5, 2.5},
          {1.0, 3.0, 1.2, 4.0},
          {std::numbers::pi / 3, 4.0, 2.0, 5.5}};
}

struct ResidualScanRow {
  double epsilon = 0.0;
  int point = 0;
  cd S1, lead1;
  double dev1 = 0.0;  // |S1 / lead - 1|
  double dev2 = 0.0;  // fiber part of S2 against its lead, relative to |lead|
  double gap2_over_eps3 = 0.0;
};

struct ResidualScan {
  std::vector<ResidualScanRow> rows;
  std::vector<std::vector<double>> ratios;  // per point: dev1(eps_k) / dev1(eps_{k+1})
};

inline ResidualScan residual_scan(const VortexProfile& p, const std::vector<double>& eps,
                                  const std::vector<FermiSample>& pts, ApproxOptions opt = {},
                                  ResidualOptions ropt = {}) {
  require(eps.size() >= 2, ErrorCode::InsufficientLadder, "need at least two epsilon values");
  auto prof = std::make_shared<const VortexProfile>(p);
  ResidualScan out;
  out.ratios.assign(pts.size(), {});
  std::vector<std::vector<double>> dev(pts.size());
  for (double e : eps) {
    FermiChart c = make_chart(e);
    ApproxSolution sol(c, prof, opt);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Vec4 y = fermi_point(e, pts[k]);
      const ResidualValue r = residual_S(sol, y, ropt);
      const ResidualValue L = residual_leading_term(sol, y);
      ResidualScanRow row;
      row.epsilon = e;
      row.point = static_cast<int>(k);
      row.S1 = r.S1;
      row.lead1 = L.S1;
      row.dev1 = std::abs(r.S1 / L.S1 - 1.0);
      const double ln = std::hypot(L.S2[2], L.S2[3]);
      const double g2 = std::hypot(r.S2[2] - L.S2[2], r.S2[3] - L.S2[3]);
      row.dev2 = g2 / ln;
      row.gap2_over_eps3 = g2 / (e * e * e);
      out.rows.push_back(row);
      dev[k].push_back(row.dev1);
    }
  }
  for (std::size_t k = 0; k < pts.size(); ++k)
    for (std::size_t i = 0; i + 1 < dev[k].size(); ++i) out.ratios[k].push_back(dev[k][i] / dev[k][i + 1]);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Grid samples of the approximate solution

struct FieldState {
  double epsilon = 0.0;
  SurfaceGrid surface;
  PolarGrid fiber;
  std::vector<Grid2c> psi;              // one fiber grid per surface node, node = i * Ntheta + j
  std::vector<std::array<Grid2, 4>> A;  // ds~, dtheta~, da, db

  int node(int i, int j) const { return i * surface.Ntheta + j; }
  Vec4 point(int i, int j, int k, int l) const {
    const double r = fiber.r(k), ph = fiber.phi(l);
    return Vec4(surface.s(i) / epsilon, surface.theta(j) / epsilon, r * std::cos(ph), r * std::sin(ph));
  }
  double max_abs_psi() const {
    double m = 0.0;
    for (const auto& g : psi) m = std::max(m, g.cwiseAbs().maxCoeff());
    return m;
  }
};

// Surface end rows sit on rho = R and are sampled too; fiber nodes outside Sigma_eps stay zero.
inline FieldState sample_field_state(const ApproxSolution& sol) {
  const FermiChart& c = sol.chart();
  FieldState st{c.epsilon, c.surface, c.fiber, {}, {}};
  const int n = (c.surface.Ns + 1) * c.surface.Ntheta;
  st.psi.assign(n, Grid2c::Zero(c.fiber.K, c.fiber.M));
  std::array<Grid2, 4> z;
  for (auto& a : z) a = Grid2::Zero(c.fiber.K, c.fiber.M);
  st.A.assign(n, z);
  for (int i = 0; i <= c.surface.Ns; ++i)
    for (int j = 0; j < c.surface.Ntheta; ++j)
      for (int k = 0; k < c.fiber.K; ++k)
        for (int l = 0; l < c.fiber.M; ++l) {
          const Vec4 y = st.point(i, j, k, l);
          if (y[2] * y[2] + y[3] * y[3] >= c.r_eps2(y[0])) continue;
          const FieldValue v = sol(y);
          st.psi[st.node(i, j)](k, l) = v.psi;
          for (int q = 0; q < 4; ++q) st.A[st.node(i, j)][q](k, l) = v.A[q];
        }
  return st;
}

struct ResidualNode {
  int i, j, k, l;
  ResidualValue S;
};

// residual_S at the chart nodes whose stencil stays inside the tube and the s-range; fiber stride thins the set.
inline std::vector<ResidualNode> residual_on_grid(const ApproxSolution& sol, int fiber_stride = 4,
                                                  ResidualOptions opt = {}) {
  const FermiChart& c = sol.chart();
  std::vector<ResidualNode> out;
  const FieldState probe{c.epsilon, c.surface, c.fiber, {}, {}};
  for (int i = 1; i < c.surface.Ns; ++i)
    for (int j = 0; j < c.surface.Ntheta; ++j)
      for (int k = 0; k < c.fiber.K; k += fiber_stride)
        for (int l = 0; l < c.fiber.M; l += fiber_stride) {
          const Vec4 y = probe.point(i, j, k, l);
          if (!stencil_fits(sol, y, 4.0 * opt.delta)) continue;
          out.push_back({i, j, k, l, residual_S(sol, y, opt)});
        }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Lifted normal fields and the fiber projection

using NormalFn = std::function<std::pair<double, double>(double, double)>;  // (s, theta) -> (k1, k2)
using PairFn = std::function<PairValue(const Vec4&)>;

// v = chi (k1 T1 + k2 T2)
inline PairFn lifted_field(const ApproxSolution& sol, NormalFn N) {
  return [&sol, N = std::move(N)](const Vec4& y) -> PairValue {
    const double e = sol.epsilon();
    const double chi = sol.cutoff(y);
    if (chi == 0.0) return {cd(0.0), Vec4::Zero()};
    const auto [k1, k2] = N(e * y[0], e * y[1]);
    const PairValue T1 = sol.kernel(1, y), T2 = sol.kernel(2, y);
    return {chi * (k1 * T1.xi + k2 * T2.xi), chi * (k1 * T1.B + k2 * T2.B)};
  };
}

// Grid-sampled pair on the chart: one fiber grid per surface node.
struct Pair4 {
  SurfaceGrid surface;
  PolarGrid fiber;
  double epsilon = 0.0;
  std::vector<Grid2c> xi;
  std::vector<std::array<Grid2, 4>> B;

  int node(int i, int j) const { return i * surface.Ntheta + j; }
  static Pair4 zeros(const FermiChart& c) {
    Pair4 p{c.surface, c.fiber, c.epsilon, {}, {}};
    const int n = (c.surface.Ns + 1) * c.surface.Ntheta;
    p.xi.assign(n, Grid2c::Zero(c.fiber.K, c.fiber.M));
    std::array<Grid2, 4> z;
    for (auto& a : z) a = Grid2::Zero(c.fiber.K, c.fiber.M);
    p.B.assign(n, z);
    return p;
  }
  Vec4 point(int i, int j, int k, int l) const {
    const double r = fiber.r(k), ph = fiber.phi(l);
    return Vec4(surface.s(i) / epsilon, surface.theta(j) / epsilon, r * std::cos(ph), r * std::sin(ph));
  }
};

inline Pair4 sample_pair(const ApproxSolution& sol, const PairFn& v) {
  const FermiChart& c = sol.chart();
  Pair4 out = Pair4::zeros(c);
  for (int i = 0; i <= c.surface.Ns; ++i)
    for (int j = 0; j < c.surface.Ntheta; ++j) {
      const int n = out.node(i, j);
      for (int k = 0; k < c.fiber.K; ++k)
        for (int l = 0; l < c.fiber.M; ++l) {
          const Vec4 y = out.point(i, j, k, l);
          if (y[2] * y[2] + y[3] * y[3] >= c.r_eps2(y[0])) continue;
          const PairValue pv = v(y);
          out.xi[n](k, l) = pv.xi;
          for (int q = 0; q < 4; ++q) out.B[n][q](k, l) = pv.B[q];
        }
    }
  return out;
}

struct LiftedPerturbation {
  Pair4 v;
  NormalField source;
};

inline LiftedPerturbation lift_normal_field(const ApproxSolution& sol, const NormalField& N) {
  const FermiChart& c = sol.chart();
  require(N.grid == c.surface, ErrorCode::GridMismatch, "normal field is not on the chart's surface grid");
  LiftedPerturbation out{Pair4::zeros(c), N};
  for (int i = 0; i <= c.surface.Ns; ++i)
    for (int j = 0; j < c.surface.Ntheta; ++j) {
      const int n = out.v.node(i, j);
      for (int k = 0; k < c.fiber.K; ++k)
        for (int l = 0; l < c.fiber.M; ++l) {
          const Vec4 y = out.v.point(i, j, k, l);
          if (y[2] * y[2] + y[3] * y[3] >= c.r_eps2(y[0])) continue;
          const double chi = sol.cutoff(y);
          const PairValue T1 = sol.kernel(1, y), T2 = sol.kernel(2, y);
          out.v.xi[n](k, l) = chi * (N.k1(i, j) * T1.xi + N.k2(i, j) * T2.xi);
          for (int q = 0; q < 4; ++q) out.v.B[n][q](k, l) = chi * (N.k1(i, j) * T1.B[q] + N.k2(i, j) * T2.B[q]);
        }
    }
  return out;
}

// Pairing with the metric frozen at the base point a = b = 0: g^{-1} = diag(S^3, S, 1, 1).
inline double base_pairing(double S, const PairValue& u, const PairValue& v) {
  return (u.xi * std::conj(v.xi)).real() + S * S * S * u.B[0] * v.B[0] + S * u.B[1] * v.B[1] + u.B[2] * v.B[2] +
         u.B[3] * v.B[3];
}

struct ProjectionResult {
  NormalField N;
  Pair4 vperp;
  double orth_defect = 0.0;  // max_j |int <vperp, T_j>| / int chi |T1|^2 over surface nodes
};

inline ProjectionResult fiber_projection(const ApproxSolution& sol, const Pair4& v) {
  const FermiChart& c = sol.chart();
  require(v.surface == c.surface && v.fiber == c.fiber && v.epsilon == c.epsilon, ErrorCode::GridMismatch,
          "pair is not sampled on this chart");
  ProjectionResult out{NormalField::zeros(c.surface), v, 0.0};
  for (int i = 0; i <= c.surface.Ns; ++i)
    for (int j = 0; j < c.surface.Ntheta; ++j) {
      const int n = v.node(i, j);
      const double S = std::sin(2.0 * c.surface.s(i));
      double num1 = 0, num2 = 0, den = 0;
      std::vector<std::array<PairValue, 2>> T(c.fiber.K * c.fiber.M);
      std::vector<double> chi(c.fiber.K * c.fiber.M, 0.0);
      std::vector<char> inside(c.fiber.K * c.fiber.M, 0);
      for (int k = 0; k < c.fiber.K; ++k)
        for (int l = 0; l < c.fiber.M; ++l) {
          const Vec4 y = v.point(i, j, k, l);
          const int q = k * c.fiber.M + l;
          if (y[2] * y[2] + y[3] * y[3] >= c.r_eps2(y[0])) continue;
          inside[q] = 1;
          T[q] = {sol.kernel(1, y), sol.kernel(2, y)};
          chi[q] = sol.cutoff(y);
          const PairValue pv{v.xi[n](k, l), Vec4(v.B[n][0](k, l), v.B[n][1](k, l), v.B[n][2](k, l), v.B[n][3](k, l))};
          const double w = c.fiber.cell(k);
          num1 += w * base_pairing(S, pv, T[q][0]);
          num2 += w * base_pairing(S, pv, T[q][1]);
          den += w * chi[q] * base_pairing(S, T[q][0], T[q][0]);
        }
      const double k1 = num1 / den, k2 = num2 / den;
      out.N.k1(i, j) = k1;
      out.N.k2(i, j) = k2;
      double r1 = 0, r2 = 0;
      for (int k = 0; k < c.fiber.K; ++k)
        for (int l = 0; l < c.fiber.M; ++l) {
          const int q = k * c.fiber.M + l;
          if (!inside[q]) continue;
          const PairValue& a = T[q][0];
          const PairValue& b = T[q][1];
          out.vperp.xi[n](k, l) -= chi[q] * (k1 * a.xi + k2 * b.xi);
          for (int m = 0; m < 4; ++m) out.vperp.B[n][m](k, l) -= chi[q] * (k1 * a.B[m] + k2 * b.B[m]);
          const PairValue pv{out.vperp.xi[n](k, l),
                             Vec4(out.vperp.B[n][0](k, l), out.vperp.B[n][1](k, l), out.vperp.B[n][2](k, l),
                                  out.vperp.B[n][3](k, l))};
          const double w = c.fiber.cell(k);
          r1 += w * base_pairing(S, pv, a);
          r2 += w * base_pairing(S, pv, b);
        }
      out.orth_defect = std::max({out.orth_defect, std::abs(r1) / den, std::abs(r2) / den});
    }
  return out;
}

inline double pair_sup(const Pair4& p) {
  double m = 0.0;
  for (std::size_t n = 0; n < p.xi.size(); ++n) {
    m = std::max(m, p.xi[n].cwiseAbs().maxCoeff());
    for (int q = 0; q < 4; ++q) m = std::max(m, p.B[n][q].cwiseAbs().maxCoeff());
  }
  return m;
}

// ---------------------------------------------------------------------------------------------
// The 4D quadratic form

// Composite Gauss in u = log(s / (pi/2 - s)) over Gamma^R; resolves both ends where rho is large.
inline quad::Rule surface_s_rule(double R, int panels, int order) {
  const double q = 0.5 * std::numbers::pi, lo = s_min_for(R);
  const double ulo = std::log(lo / (q - lo));
  const quad::Rule u = quad::composite_gauss(ulo, -ulo, panels, order);
  quad::Rule out;
  for (std::size_t i = 0; i < u.x.size(); ++i) {
    const double s = q / (1.0 + std::exp(-u.x[i]));
    out.x.push_back(s);
    out.w.push_back(u.w[i] * s * (q - s) / q);
  }
  return out;
}

struct QuadRule4 {
  int s_panels = 32, s_order = 4;  // composite Gauss in the unscaled s over Gamma^R
  int n_theta = 4;                 // trapezoid in theta
  int r_panels = 16, r_order = 8;  // composite Gauss on each of [0, r_eps/sqrt2] and [r_eps/sqrt2, r_eps]
  int n_phi = 32;
  double r_cap = 16.0;  // the kernels are below e^-30 beyond this radius
  double delta = 1e-2;  // finite-difference step
  bool gauge_fixed = true;
};

namespace detail {

struct LocalPair {
  PairValue v;
  Vec4c Dxi;   // nabla_A xi
  Mat4 F;      // dB
  double dsB;  // d*B = -(1/sqrt G) d_j (sqrt G g^{ij} B_i)
};

inline LocalPair local_pair(const ApproxSolution& sol, const PairFn& v, const Vec4& y, const FieldValue& u,
                            double h) {
  LocalPair o;
  o.v = v(y);
  Mat4 dB;
  double div = 0.0;
  for (int i = 0; i < 4; ++i) {
    o.Dxi[i] = fd4([&](const Vec4& z) { return v(z).xi; }, y, i, h) - cd(0, 1) * u.A[i] * o.v.xi;
    dB.row(i) = fd4([&](const Vec4& z) -> Vec4 { return v(z).B; }, y, i, h).transpose();
    div += fd4(
        [&](const Vec4& z) {
          const Vec4 B = v(z).B;
          if (B.isZero(0.0)) return 0.0;  // stencil points past the support may leave the tube
          const MetricValue m = sol.metric(z);
          return std::sqrt(m.detG) * (m.g.inverse() * B)[i];
        },
        y, i, h);
  }
  o.F = dB - dB.transpose();
  o.dsB = -div / std::sqrt(sol.metric(y).detG);
  return o;
}

inline double integrand(const ApproxSolution& sol, const Vec4& y, const FieldValue& u, const Vec4c& Dpsi,
                        const Mat4& gi, const LocalPair& a, const LocalPair& b, bool gauge_fixed) {
  const double lam = sol.lambda();
  const double psi2 = std::norm(u.psi);
  double t = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) t += gi(i, j) * (a.Dxi[i] * std::conj(b.Dxi[j])).real();
  const Mat4 Fa = gi * a.F * gi;
  t += 0.5 * (Fa.array() * b.F.array()).sum();
  t += a.dsB * b.dsB;
  t += a.v.B.dot(gi * b.v.B) * psi2;
  Vec4 ia, ib;
  for (int i = 0; i < 4; ++i) {
    ia[i] = (std::conj(Dpsi[i]) * a.v.xi).imag();
    ib[i] = (std::conj(Dpsi[i]) * b.v.xi).imag();
  }
  t += 2.0 * (ia.dot(gi * b.v.B) + ib.dot(gi * a.v.B));
  const cd pa = std::conj(u.psi) * a.v.xi, pb = std::conj(u.psi) * b.v.xi;
  t += 0.5 * (lam - 1.0) * (pa * pb).real();
  t += ((lam + 0.5) * psi2 - 0.5 * lam) * (a.v.xi * std::conj(b.v.xi)).real();
  if (!gauge_fixed) t -= (a.dsB + pa.imag()) * (b.dsB + pb.imag());
  (void)y;
  return t;
}

}  // namespace detail

struct Quad4Node {
  Vec4 y;
  double w;  // includes sqrt G
};

// Tensor rule over W^R in Fermi coordinates.
inline std::vector<Quad4Node> quad4_nodes(const ApproxSolution& sol, const QuadRule4& rule) {
  const FermiChart& c = sol.chart();
  const double e = c.epsilon;
  const quad::Rule sr = surface_s_rule(c.R, rule.s_panels, rule.s_order);
  std::vector<Quad4Node> out;
  const double wt = 2.0 * std::numbers::pi / rule.n_theta / e, wp = 2.0 * std::numbers::pi / rule.n_phi;
  for (std::size_t is = 0; is < sr.x.size(); ++is) {
    const double st = sr.x[is] / e, ws = sr.w[is] / e;
    const double re = std::sqrt(c.r_eps2(st)), rmid = re / std::sqrt(2.0);
    std::vector<double> rx, rw;
    auto add = [&](double a, double b) {
      if (b <= a) return;
      const quad::Rule rr = quad::composite_gauss(a, b, rule.r_panels, rule.r_order);
      rx.insert(rx.end(), rr.x.begin(), rr.x.end());
      rw.insert(rw.end(), rr.w.begin(), rr.w.end());
    };
    add(0.0, std::min(rmid, rule.r_cap));
    add(std::min(rmid, rule.r_cap), std::min(re, rule.r_cap));
    for (int it = 0; it < rule.n_theta; ++it) {
      const double tt = 2.0 * std::numbers::pi * it / rule.n_theta / e;
      for (std::size_t ir = 0; ir < rx.size(); ++ir)
        for (int ip = 0; ip < rule.n_phi; ++ip) {
          const double ph = 2.0 * std::numbers::pi * ip / rule.n_phi;
          const Vec4 y(st, tt, rx[ir] * std::cos(ph), rx[ir] * std::sin(ph));
          const double sg = std::sqrt(sol.metric(y).detG);
          out.push_back({y, ws * wt * rw[ir] * rx[ir] * wp * sg});
        }
    }
  }
  return out;
}

inline void check_support(const ApproxSolution& sol, const PairFn& v, const QuadRule4& rule) {
  const FermiChart& c = sol.chart();
  const double e = c.epsilon, lo = s_min_for(c.R), hi = 0.5 * std::numbers::pi - lo;
  double leak = 0.0;
  for (double s : {lo * (1.0 + 1e-9), hi * (1.0 - 1e-9)})
    for (int it = 0; it < 4; ++it)
      for (double r : {0.5, 1.0, 2.0}) {
        const Vec4 y(s / e, 0.5 * std::numbers::pi * it / e, r, 0.0);
        const PairValue pv = v(y);
        leak = std::max({leak, std::abs(pv.xi), pv.B.cwiseAbs().maxCoeff()});
      }
  for (int k = 1; k < 8; ++k) {
    const double s = lo + (hi - lo) * k / 8.0, st = s / e;
    const double re = std::min(std::sqrt(c.r_eps2(st)) * (1.0 - 1e-9), rule.r_cap);
    if (re < rule.r_cap) {
      const PairValue pv = v(Vec4(st, 0.0, re, 0.0));
      leak = std::max({leak, std::abs(pv.xi), pv.B.cwiseAbs().maxCoeff()});
    }
  }
  require(leak < 1e-10, ErrorCode::SupportLeak, "perturbation does not vanish on the boundary of W^R");
}

// Symmetric bilinear extension of the quadratic integrand.
inline double bilinear_form_4d(const ApproxSolution& sol, const PairFn& v, const PairFn& w, QuadRule4 rule = {}) {
  check_support(sol, v, rule);
  check_support(sol, w, rule);
  const auto nodes = quad4_nodes(sol, rule);
  double total = 0.0;
  for (const auto& n : nodes) {
    const FieldValue u = sol(n.y);
    const Vec4c Dpsi = covariant_gradient(sol, n.y, rule.delta);
    const Mat4 gi = sol.metric(n.y).g.inverse();
    const detail::LocalPair a = detail::local_pair(sol, v, n.y, u, rule.delta);
    const detail::LocalPair b = detail::local_pair(sol, w, n.y, u, rule.delta);
    total += n.w * detail::integrand(sol, n.y, u, Dpsi, gi, a, b, rule.gauge_fixed);
  }
  return total;
}

inline double quadratic_form_4d(const ApproxSolution& sol, const PairFn& v, QuadRule4 rule = {}) {
  check_support(sol, v, rule);
  const auto nodes = quad4_nodes(sol, rule);
  double total = 0.0;
  for (const auto& n : nodes) {
    const FieldValue u = sol(n.y);
    const Vec4c Dpsi = covariant_gradient(sol, n.y, rule.delta);
    const Mat4 gi = sol.metric(n.y).g.inverse();
    const detail::LocalPair a = detail::local_pair(sol, v, n.y, u, rule.delta);
    total += n.w * detail::integrand(sol, n.y, u, Dpsi, gi, a, a, rule.gauge_fixed);
  }
  return total;
}

// ---------------------------------------------------------------------------------------------
// Energy comparison

struct KernelNorms {
  double T = 0.0;   // int |T1|^2
  double TB = 0.0;  // int |TB1|^2
  double total() const { return T + TB; }
};

inline KernelNorms kernel_norms(const VortexProfile& p) {
  const int N = p.N();
  const double j = p.degree;
  std::vector<double> fT(N + 1, 0.0), fB(N + 1, 0.0);
  for (int i = 1; i <= N; ++i) {
    const double r = p.r[i];
    fT[i] = r * p.dU[i] * p.dU[i] + j * j * p.U[i] * p.U[i] * p.Z[i] * p.Z[i] / r;
    fB[i] = j * j * p.dV[i] * p.dV[i] / r;
  }
  return {std::numbers::pi * quad::simpson(fT, p.h), 2.0 * std::numbers::pi * quad::simpson(fB, p.h)};
}

struct SurfaceForms {
  double Q = 0.0;           // int_Gamma |nabla^nu N|^2 - 2 rho^-6 |N|^2
  double Q_eps = 0.0;       // the same integral evaluated on Gamma_eps in (s~, theta~)
  double normalizer = 0.0;  // int_Gamma |nabla^nu N|^2 + rho^-6 |N|^2
};

inline SurfaceForms surface_forms(const NormalFn& N, double eps, double R, int s_panels = 32, int n_theta = 16) {
  const quad::Rule sr = surface_s_rule(R, s_panels, 4);
  const double hs = 1e-6, ht = 2.0 * std::numbers::pi / n_theta;
  SurfaceForms out;
  auto K = [&](double s, double th) {
    const auto [a, b] = N(s, th);
    return Eigen::Vector2d(a, b);
  };
  auto d1 = [](auto&& f, double x, double h) -> Eigen::Vector2d {
    return (f(x - 2 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2 * h)) / (12 * h);
  };
  for (std::size_t is = 0; is < sr.x.size(); ++is) {
    const double s = sr.x[is], S = std::sin(2 * s), c = std::cos(2 * s);
    for (int it = 0; it < n_theta; ++it) {
      const double th = ht * it;
      const Eigen::Vector2d k = K(s, th);
      const Eigen::Vector2d ks = d1([&](double x) { return K(x, th); }, s, hs);
      const Eigen::Vector2d kt = d1([&](double x) { return K(s, x); }, th, hs);
      // nabla_theta N = (k1_t - c k2) m + (k2_t + c k1) n
      const double n1 = kt[0] - c * k[1], n2 = kt[1] + c * k[0];
      const double grad = S * S * S * ks.squaredNorm() + S * (n1 * n1 + n2 * n2);
      const double w = sr.w[is] * ht / (S * S);
      out.Q += w * (grad - 2.0 * S * S * S * k.squaredNorm());
      out.normalizer += w * (grad + S * S * S * k.squaredNorm());
      // Gamma_eps: metric diag(S^-3, S^-1), derivatives in (s~, theta~) carry a factor eps
      const double st_w = sr.w[is] / eps * ht / eps / (S * S);
      const Eigen::Vector2d kst = d1([&](double x) { return K(eps * x, th); }, s / eps, hs / eps);
      const Eigen::Vector2d ktt = d1([&](double x) { return K(s, eps * x); }, th / eps, hs / eps);
      const double m1 = ktt[0] - eps * c * k[1], m2 = ktt[1] + eps * c * k[0];
      const double ge = S * S * S * kst.squaredNorm() + S * (m1 * m1 + m2 * m2);
      out.Q_eps += st_w * (ge - 2.0 * eps * eps * S * S * S * k.squaredNorm());
    }
  }
  return out;
}

struct EnergyResult {
  double epsilon = 0.0;
  double lhs = 0.0, rhs = 0.0, rhs_eps = 0.0;
  double kernel_norm = 0.0, Q_gamma = 0.0, normalizer = 0.0;
  double gap = 0.0, normalized_gap = 0.0;
  double gap_over_eps = 0.0;  // normalized_gap / eps
};

struct EnergyOptions {
  QuadRule4 rule;
  bool correction = true;
  CorrectionOptions corr;
};

inline EnergyResult energy_comparison(std::shared_ptr<const VortexProfile> p, const NormalFn& N, double eps, double R,
                                      EnergyOptions opt = {}) {
  const double lo = s_min_for(R), hi = 0.5 * std::numbers::pi - lo;
  for (double s : {lo, hi})
    for (int it = 0; it < 8; ++it) {
      const auto [a, b] = N(s, 0.25 * std::numbers::pi * it);
      require(std::abs(a) < 1e-10 && std::abs(b) < 1e-10, ErrorCode::BoundaryNonzero,
              "normal field does not vanish on rho = R");
    }
  FermiChart c = make_chart(eps, R);
  ApproxOptions ao;
  ao.correction = opt.correction;
  ao.corr = opt.corr;
  ApproxSolution sol(c, std::move(p), ao);
  EnergyResult out;
  out.epsilon = eps;
  out.lhs = quadratic_form_4d(sol, lifted_field(sol, N), opt.rule);
  const SurfaceForms sf = surface_forms(N, eps, R);
  const KernelNorms kn = kernel_norms(sol.profile());
  out.kernel_norm = kn.total();
  out.Q_gamma = sf.Q;
  out.normalizer = sf.normalizer;
  out.rhs = sf.Q * kn.total();
  out.rhs_eps = sf.Q_eps * kn.total();
  out.gap = std::abs(out.lhs - out.rhs);
  out.normalized_gap = out.gap / (sf.normalizer * kn.total());
  out.gap_over_eps = out.normalized_gap / eps;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Symmetry kernels

inline Mat4 fermi_jacobian(const FermiChart& c, const Vec4& y, double h = 1e-4) {
  Mat4 J;
  for (int i = 0; i < 4; ++i)
    J.col(i) = fd4([&](const Vec4& z) -> Vec4 { return fermi_map(c, z[0], z[1], z[2], z[3]); }, y, i, h);
  return J;
}

// Z_j = (X . nabla_A psi, iota_X F) with X = e_j (j <= 4), x (j = 5), Jx (j = 6); components in Fermi coordinates.
inline PairValue symmetry_kernel(const ApproxSolution& sol, int index, const Vec4& y, double h = 1e-2) {
  require(index >= 1 && index <= 6, ErrorCode::BadIndex, "symmetry kernel index must be 1..6");
  check_stencil_margin(sol, y, 2.0 * h);
  const FermiChart& c = sol.chart();
  const Mat4 Jac = fermi_jacobian(c, y);
  Vec4 X = Vec4::Zero();
  if (index <= 4) {
    X[index - 1] = 1.0;
  } else {
    const Vec4 x = fermi_map(c, y[0], y[1], y[2], y[3]);
    if (index == 5) {
      X = x;
    } else {
      Mat4 Jc;
      Jc << 0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, -1, 0;
      X = Jc * x;
    }
  }
  const Vec4 Xy = Jac.lu().solve(X);
  const Vec4c D = covariant_gradient(sol, y, h);
  const Mat4 F = curvature(sol, y, h);
  PairValue out;
  out.xi = 0.0;
  for (int m = 0; m < 4; ++m) out.xi += Xy[m] * D[m];
  out.B = F.transpose() * Xy;  // B_i = X^m F_{mi}
  return out;
}

// ---------------------------------------------------------------------------------------------
// Weighted norms

struct WeightedNormOptions {
  int n_ball = 4;  // Gauss points per hyperspherical direction
  std::vector<Vec4> centers;  // empty: a deterministic subset of the chart grids
};

inline std::vector<Vec4> default_norm_centers(const FermiChart& c) {
  std::vector<Vec4> out;
  const SurfaceGrid& g = c.surface;
  for (int i = 1; i < g.Ns; i += 2)
    for (int j = 0; j < g.Ntheta; j += 4)
      for (int k = 0; k < c.fiber.K; k += 4)
        for (int l = 0; l < 4; ++l) {
          const double r = c.fiber.r(k), ph = 0.5 * std::numbers::pi * l;
          out.emplace_back(g.s(i) / c.epsilon, g.theta(j) / c.epsilon, r * std::cos(ph), r * std::sin(ph));
        }
  return out;
}

// L^p norm over the metric unit ball around y0, with the measure sqrt G dy.
template <class F>
double ball_lp(const ApproxSolution& sol, F&& field, const Vec4& y0, double p, int n, double* volume = nullptr) {
  const Mat4 g0 = sol.metric(y0).g;
  const Eigen::LLT<Mat4> llt(g0);
  const Mat4 Linv_t = Mat4(llt.matrixL()).inverse().transpose();
  const double jac = Linv_t.determinant();
  const quad::Rule rr = quad::gauss_legendre(n);
  auto map01 = [](double x, double a, double b) { return 0.5 * (b - a) * x + 0.5 * (a + b); };
  double acc = 0.0, vol = 0.0;
  const double pi = std::numbers::pi;
  for (int ir = 0; ir < n; ++ir) {
    const double r = map01(rr.x[ir], 0.0, 1.0), wr = 0.5 * rr.w[ir];
    for (int ia = 0; ia < n; ++ia) {
      const double al = map01(rr.x[ia], 0.0, pi), wa = 0.5 * pi * rr.w[ia];
      for (int ib = 0; ib < n; ++ib) {
        const double be = map01(rr.x[ib], 0.0, pi), wb = 0.5 * pi * rr.w[ib];
        for (int ig = 0; ig < 2 * n; ++ig) {
          const double ga = pi * ig / n, wg = pi / n;
          const Vec4 u(r * std::cos(al), r * std::sin(al) * std::cos(be), r * std::sin(al) * std::sin(be) * std::cos(ga),
                       r * std::sin(al) * std::sin(be) * std::sin(ga));
          const Vec4 y = y0 + Linv_t * u;
          const double w = wr * wa * wb * wg * r * r * r * std::sin(al) * std::sin(al) * std::sin(be) * jac *
                           std::sqrt(sol.metric(y).detG);
          acc += w * std::pow(std::abs(field(y)), p);
          vol += w;
        }
      }
    }
  }
  if (volume) *volume = vol;
  return std::pow(acc, 1.0 / p);
}

// sup over centers of rho^beta e^{sigma r~} ||f||_{L^p(B_1)}
template <class F>
double weighted_norm(const ApproxSolution& sol, F&& field, double beta, double p, double sigma,
                     WeightedNormOptions opt = {}) {
  require(p >= 1.0 && sigma >= 0.0, ErrorCode::OutOfRange, "weighted norm needs p >= 1 and sigma >= 0");
  const FermiChart& c = sol.chart();
  const std::vector<Vec4> centers = opt.centers.empty() ? default_norm_centers(c) : opt.centers;
  double best = 0.0;
  for (const Vec4& y0 : centers) {
    // skip balls that would leave the tube
    const double e = c.epsilon, r0 = std::hypot(y0[2], y0[3]);
    if (!sol.options().flat_metric && r0 * r0 >= c.r_eps2(y0[0])) continue;
    const double reach_s = 2.0 / std::sqrt(sol.metric(y0).g(0, 0));
    if (e * (y0[0] - reach_s) <= 0.0 || e * (y0[0] + reach_s) >= 0.5 * std::numbers::pi) continue;
    if (!sol.options().flat_metric &&
        (r0 + 2.0) * (r0 + 2.0) >= std::min(c.r_eps2(y0[0] - reach_s), c.r_eps2(y0[0] + reach_s)))
      continue;
    const double val =
        std::pow(weight_rho(c, y0[0]), beta) * std::exp(sigma * sol.fiber_coords(y0).r) * ball_lp(sol, field, y0, p, opt.n_ball);
    best = std::max(best, val);
  }
  return best;
}

}  // namespace ymh
