#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ymh/core/error.hpp"
#include "ymh/vortex_linearization.hpp"

namespace ymh {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// (x1, x2, x3, x4) = (Re z1, Im z1, Re z2, Im z2)
struct GammaPoint {
  Vec4 position, m, n, ds, dtheta;
};

inline GammaPoint gamma_point(double s, double theta) {
  require(s > 0.0 && s < 0.5 * std::numbers::pi, ErrorCode::DomainBoundary, "s must lie in (0, pi/2)");
  const double S = std::sin(2.0 * s), c = std::cos(2.0 * s);
  const double cs = std::cos(s), ss = std::sin(s), ct = std::cos(theta), st = std::sin(theta);
  const double q = 1.0 / std::sqrt(S);
  GammaPoint g;
  g.position << cs * q * ct, ss * q * ct, cs * q * st, ss * q * st;
  g.m << ss * ct, cs * ct, ss * st, cs * st;
  g.n << ss * st, -cs * st, -ss * ct, cs * ct;
  // d/ds of e^{is} S^{-1/2} = e^{is} (i q - c q^3)
  const double re = -ss * q - c * q * q * q * cs, im = cs * q - c * q * q * q * ss;
  g.ds << re * ct, im * ct, re * st, im * st;
  g.dtheta << -cs * q * st, -ss * q * st, cs * q * ct, ss * q * ct;
  return g;
}

// User-supplied normal displacement profiles; zero unless set.
struct Perturbation {
  std::function<double(double, double)> f1, f2;  // functions of the unscaled (s, theta)

  bool active() const { return static_cast<bool>(f1) || static_cast<bool>(f2); }
  double value(int which, double s, double th) const {
    const auto& f = which == 1 ? f1 : f2;
    return f ? f(s, th) : 0.0;
  }
  // central differences in (s, theta); step small against the O(1) scale of f
  double ds(int which, double s, double th) const {
    const double d = 1e-5;
    return (value(which, s + d, th) - value(which, s - d, th)) / (2 * d);
  }
  double dth(int which, double s, double th) const {
    const double d = 1e-5;
    return (value(which, s, th + d) - value(which, s, th - d)) / (2 * d);
  }
};

// Uniform surface grid in the unscaled (s, theta) with both s-ends on the boundary rho = R.
struct SurfaceGrid {
  double s_lo = 0.0, s_hi = 0.0;
  int Ns = 0;      // intervals in s; nodes 0..Ns
  int Ntheta = 0;  // periodic nodes

  double hs() const { return (s_hi - s_lo) / Ns; }
  double s(int i) const { return s_lo + i * hs(); }
  double theta(int j) const { return 2.0 * std::numbers::pi * j / Ntheta; }
  bool operator==(const SurfaceGrid& o) const {
    return s_lo == o.s_lo && s_hi == o.s_hi && Ns == o.Ns && Ntheta == o.Ntheta;
  }
};

// s at which rho = R on the lower branch.
inline double s_min_for(double R) {
  require(R > 1.0, ErrorCode::OutOfRange, "truncation radius must exceed 1");
  return 0.5 * std::asin(1.0 / (R * R));
}

inline SurfaceGrid make_surface_grid(double R, int Ns, int Ntheta) {
  require(Ns >= 4 && Ntheta >= 1, ErrorCode::OutOfRange, "surface grid too small");
  const double lo = s_min_for(R);
  return {lo, 0.5 * std::numbers::pi - lo, Ns, Ntheta};
}

struct FermiChart {
  double epsilon = 0.05;
  double R = 8.0;
  SurfaceGrid surface;
  PolarGrid fiber;
  Perturbation f;

  // Sigma_eps bound a^2 + b^2 < r_eps^2 = 1 / (eps sin 2 eps s~)
  double r_eps2(double st) const { return 1.0 / (epsilon * std::sin(2.0 * epsilon * st)); }
  double s_tilde(double s) const { return s / epsilon; }
  double theta_tilde(double th) const { return th / epsilon; }
};

inline FermiChart make_chart(double epsilon, double R = 8.0, int Ns = 24, int Ntheta = 16, double h_fib = 0.25,
                             int M_fib = 16) {
  require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::OutOfRange, "epsilon must lie in (0, 1)");
  FermiChart c;
  c.epsilon = epsilon;
  c.R = R;
  c.surface = make_surface_grid(R, Ns, Ntheta);
  c.fiber = make_polar_grid(h_fib, 8.0, M_fib);
  return c;
}

inline void check_tube(const FermiChart& c, double st, double a, double b) {
  const double s = c.epsilon * st;
  require(s > 0.0 && s < 0.5 * std::numbers::pi, ErrorCode::DomainBoundary, "s~ outside (0, pi/(2 eps))");
  require(a * a + b * b < c.r_eps2(st), ErrorCode::OutsideTube, "point lies outside Sigma_eps");
}

inline Vec4 fermi_map(const FermiChart& c, double st, double tt, double a, double b) {
  check_tube(c, st, a, b);
  const double e = c.epsilon;
  const GammaPoint g = gamma_point(e * st, e * tt);
  return g.position / e + a * g.m + b * g.n;
}

struct MetricValue {
  Mat4 g;
  double detG = 0.0;
};

inline MetricValue metric_at(const FermiChart& c, double st, double tt, double a, double b) {
  (void)tt;
  check_tube(c, st, a, b);
  const double e = c.epsilon, s = e * st;
  const double S = std::sin(2.0 * s), co = std::cos(2.0 * s), rs = std::sqrt(S);
  MetricValue m;
  m.g.setZero();
  const double t = e * a - 1.0 / (S * rs);
  m.g(0, 0) = t * t + e * e * b * b;
  m.g(0, 1) = m.g(1, 0) = -2.0 * b * e / rs;
  m.g(1, 1) = e * e * (a * a + b * b) + 1.0 / S + 2.0 * a * e * rs;
  m.g(1, 2) = m.g(2, 1) = -b * e * co;
  m.g(1, 3) = m.g(3, 1) = a * e * co;
  m.g(2, 2) = m.g(3, 3) = 1.0;
  m.detG = m.g.determinant();
  require(m.detG > 0.0, ErrorCode::OutsideTube, "metric degenerates at this point");
  return m;
}

// rho = (sin 2 eps s~)^(-1/2); varrho = (sin 2s)^(-1) is kept alongside for reference.
inline double weight_rho_unscaled(double s) {
  require(s > 0.0 && s < 0.5 * std::numbers::pi, ErrorCode::DomainBoundary, "s must lie in (0, pi/2)");
  return 1.0 / std::sqrt(std::sin(2.0 * s));
}
inline double weight_rho(const FermiChart& c, double st) { return weight_rho_unscaled(c.epsilon * st); }
inline double weight_varrho_literal(double s) {
  require(s > 0.0 && s < 0.5 * std::numbers::pi, ErrorCode::DomainBoundary, "s must lie in (0, pi/2)");
  return 1.0 / std::sin(2.0 * s);
}

// ---------------------------------------------------------------------------------------------
// Inverse-metric expansion

// Zeroth plus first-order matrix.
inline Mat4 inverse_metric_first(double e, double s, double a, double b) {
  const double rho = weight_rho_unscaled(s), c = std::cos(2.0 * s);
  auto P = [rho](int k) { return std::pow(rho, -k); };
  Mat4 M = Mat4::Zero();
  M(0, 0) = P(6) + 2 * a * e * P(9);
  M(0, 1) = M(1, 0) = 2 * b * e * P(7);
  M(1, 1) = P(2) - 2 * a * e * P(5);
  M(1, 2) = M(2, 1) = b * e * P(2) * c;
  M(1, 3) = M(3, 1) = -a * e * P(2) * c;
  M(2, 2) = M(3, 3) = 1.0;
  return M;
}

// Second-order matrix. literal = true uses b^2 and -ab in the (1,3), (1,4) entries;
// false uses the coefficients 2 b^2 and -2ab obtained by inverting the exact metric.
inline Mat4 inverse_metric_second(double e, double s, double a, double b, bool literal) {
  const double rho = weight_rho_unscaled(s), c = std::cos(2.0 * s), e2 = e * e, r2 = a * a + b * b;
  auto P = [rho](int k) { return std::pow(rho, -k); };
  const double k13 = literal ? 1.0 : 2.0;
  Mat4 M = Mat4::Zero();
  M(0, 0) = 3 * r2 * e2 * P(12);
  M(0, 2) = M(2, 0) = k13 * b * b * e2 * P(7) * c;
  M(0, 3) = M(3, 0) = -k13 * a * b * e2 * P(7) * c;
  M(1, 1) = 3 * r2 * e2 * P(8);
  M(1, 2) = M(2, 1) = -2 * a * b * e2 * P(5) * c;
  M(1, 3) = M(3, 1) = 2 * a * a * e2 * P(5) * c;
  M(2, 2) = b * b * e2 * P(2) * c * c;
  M(2, 3) = M(3, 2) = -a * b * e2 * P(2) * c * c;
  M(3, 3) = a * a * e2 * P(2) * c * c;
  return M;
}

struct ExpansionRow {
  double epsilon = 0.0;
  double gap1 = 0.0;          // exact inverse minus zeroth+first order
  double gap2 = 0.0;          // after the corrected second-order matrix
  double gap2_literal = 0.0;  // after the second-order matrix with literal = true
  double gap2_over_eps3 = 0.0;
};

struct ExpansionCheck {
  std::vector<ExpansionRow> rows;
  std::vector<double> ratio1, ratio2, ratio2_literal;  // gap(eps) / gap(eps / 2) for consecutive rows
};

// The point is held fixed in the unscaled (s, theta, a, b); s~ = s / eps follows the ladder.
inline ExpansionCheck inverse_metric_expansion_check(double s, double theta, double a, double b,
                                                     const std::vector<double>& eps) {
  require(eps.size() >= 2, ErrorCode::InsufficientLadder, "need at least two epsilon values");
  ExpansionCheck out;
  for (double e : eps) {
    FermiChart c;
    c.epsilon = e;
    const Mat4 gi = metric_at(c, s / e, theta / e, a, b).g.inverse();
    const Mat4 m1 = inverse_metric_first(e, s, a, b);
    ExpansionRow r;
    r.epsilon = e;
    r.gap1 = (gi - m1).cwiseAbs().maxCoeff();
    r.gap2 = (gi - m1 - inverse_metric_second(e, s, a, b, false)).cwiseAbs().maxCoeff();
    r.gap2_literal = (gi - m1 - inverse_metric_second(e, s, a, b, true)).cwiseAbs().maxCoeff();
    r.gap2_over_eps3 = r.gap2 / (e * e * e);
    out.rows.push_back(r);
  }
  for (std::size_t i = 0; i + 1 < out.rows.size(); ++i) {
    out.ratio1.push_back(out.rows[i].gap1 / out.rows[i + 1].gap1);
    out.ratio2.push_back(out.rows[i].gap2 / out.rows[i + 1].gap2);
    out.ratio2_literal.push_back(out.rows[i].gap2_literal / out.rows[i + 1].gap2_literal);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Normal fields

struct NormalField {
  SurfaceGrid grid;
  Eigen::MatrixXd k1, k2;  // (Ns + 1) x Ntheta

  static NormalField zeros(const SurfaceGrid& g) {
    return {g, Eigen::MatrixXd::Zero(g.Ns + 1, g.Ntheta), Eigen::MatrixXd::Zero(g.Ns + 1, g.Ntheta)};
  }
};

inline std::pair<double, double> jacobi_field(int index, double s, double theta) {
  const double ss = std::sin(s), cs = std::cos(s), ct = std::cos(theta), st = std::sin(theta);
  switch (index) {
    case 1: return {ct * ss, st * ss};
    case 2: return {st * ss, -ct * ss};
    case 3: return {ct * cs, -st * cs};
    case 4: return {st * cs, ct * cs};
    case 5: return {std::sqrt(std::sin(2.0 * s)), 0.0};
    case 6: return {0.0, std::sqrt(std::sin(2.0 * s))};
    default: fail(ErrorCode::BadIndex, "Jacobi field index must be 1..6");
  }
}

template <class F>
NormalField sample_normal_field(const SurfaceGrid& g, F&& f) {
  NormalField N = NormalField::zeros(g);
  for (int i = 0; i <= g.Ns; ++i)
    for (int j = 0; j < g.Ntheta; ++j) {
      auto [k1, k2] = f(g.s(i), g.theta(j));
      N.k1(i, j) = k1;
      N.k2(i, j) = k2;
    }
  return N;
}

inline NormalField jacobi_fields(const SurfaceGrid& g, int index) {
  require(index >= 1 && index <= 6, ErrorCode::BadIndex, "Jacobi field index must be 1..6");
  return sample_normal_field(g, [index](double s, double th) { return jacobi_field(index, s, th); });
}

// <C1, C2> = g^{ij} C1_i C2_j, with the inverse symmetrised so the pairing is symmetric to rounding
inline double form_inner(const Vec4& C1, const Vec4& C2, const Mat4& g) {
  const Mat4 gi = g.inverse();
  const Mat4 sym = 0.5 * (gi + gi.transpose());
  return C1.dot(sym * C2);
}

inline double form_inner(const std::vector<double>& C1, const std::vector<double>& C2, const Mat4& g) {
  require(C1.size() == 4 && C2.size() == 4, ErrorCode::ShapeMismatch, "one-forms need four components");
  return form_inner(Vec4(C1[0], C1[1], C1[2], C1[3]), Vec4(C2[0], C2[1], C2[2], C2[3]), g);
}

struct GramCheck {
  int points = 0;
  double max_gap = 0.0;      // max entry |g - J^T J|
  double max_rel_gap = 0.0;  // relative to max |g|
};

// Closed-form metric against the Gram matrix of a 4th-order finite-difference Jacobian of fermi_map.
inline GramCheck metric_gram_check(const FermiChart& c, int n, std::uint64_t seed, double h = 1e-4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> us(0.1, 0.5 * std::numbers::pi - 0.1), ut(0.0, 2.0 * std::numbers::pi),
      ur(0.0, 0.9), up(0.0, 2.0 * std::numbers::pi);
  GramCheck out{n, 0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    const double st = us(rng) / c.epsilon, tt = ut(rng) / c.epsilon;
    const double r = ur(rng) * std::min(std::sqrt(c.r_eps2(st)), 6.0), ph = up(rng);
    const double a = r * std::cos(ph), b = r * std::sin(ph);
    Mat4 J;
    for (int i = 0; i < 4; ++i) {
      auto at = [&](double d) {
        Vec4 y(st, tt, a, b);
        y[i] += d;
        return fermi_map(c, y[0], y[1], y[2], y[3]);
      };
      J.col(i) = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
    }
    const Mat4 g = metric_at(c, st, tt, a, b).g;
    const double gap = (g - J.transpose() * J).cwiseAbs().maxCoeff();
    out.max_gap = std::max(out.max_gap, gap);
    out.max_rel_gap = std::max(out.max_rel_gap, gap / g.cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace ymh
