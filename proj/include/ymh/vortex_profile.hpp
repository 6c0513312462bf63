#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ymh/core/error.hpp"
#include "ymh/core/stencil.hpp"

namespace ymh {

struct VortexDisc {
  double R_max = 0.0;  // 0 selects max(20, 24/m_lambda)
  int N = 2000;
  double tol = 1e-10;
  int order = 6;  // 2 or 6
  int max_iter = 60;
};

struct VortexProfile {
  double lambda = 1.0;
  int degree = 1;
  int order = 6;
  double tol = 1e-10;
  double h = 0.0;
  std::vector<double> r;
  std::vector<double> U, V;
  std::vector<double> W, Z;  // 1-U and 1-V, kept separately so the tails keep relative precision
  std::vector<double> dU, dV, d2U, d2V;
  double c1 = 0.0, c2 = 0.0;
  double residual_norm = 0.0;
  int newton_iterations = 0;

  int N() const { return static_cast<int>(r.size()) - 1; }
  double R_max() const { return r.back(); }
  double decay_rate() const { return std::min(std::sqrt(lambda), 2.0); }
};

inline double decay_rate(double lambda) { return std::min(std::sqrt(lambda), 2.0); }

inline double default_R_max(double lambda) { return std::max(20.0, 24.0 / decay_rate(lambda)); }

namespace detail {

struct Stencil {
  std::vector<int> idx;
  std::vector<double> d1, d2;  // unit-spacing weights
};

// Stencil for node i on 0..N with ghosts below 0; off-centred near N.
inline Stencil node_stencil(int i, int N, int order) {
  const int half = order / 2;
  int first = i - half;
  int count = order + 1;
  if (i + half > N) first = N - order;
  Stencil s;
  s.idx.resize(count);
  for (int k = 0; k < count; ++k) s.idx[k] = first + k;
  s.d1 = fd::unit_weights(first, count, i, 1);
  s.d2 = fd::unit_weights(first, count, i, 2);
  return s;
}

inline double initial_w(double r) { return 2.0 / (std::exp(2.0 * r) + 1.0); }
inline double initial_z(double r) { return 1.0 / (1.0 + r * r); }

class VortexSystem {
 public:
  VortexSystem(double lambda, int j, int N, double h, int order)
      : lam_(lambda), j2_(double(j) * j), sigma_((std::abs(j) % 2) ? -1.0 : 1.0), N_(N), h_(h), m_(decay_rate(lambda)) {
    st_.reserve(N + 1);
    for (int i = 0; i <= N; ++i) st_.push_back(node_stencil(i, N, order));
    back_ = fd::unit_weights(N - order, order + 1, N, 1);
  }

  int size() const { return 2 * N_; }

  // x holds (w_1, z_1, ..., w_N, z_N); node 0 is pinned to w = z = 1.
  double w(const Eigen::VectorXd& x, int k) const {
    if (k == 0) return 1.0;
    if (k < 0) return 1.0 - sigma_ * (1.0 - x[2 * (-k - 1)]);
    return x[2 * (k - 1)];
  }
  double z(const Eigen::VectorXd& x, int k) const {
    if (k == 0) return 1.0;
    return x[2 * (std::abs(k) - 1) + 1];
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd R(size());
    for (int i = 1; i < N_; ++i) {
      const double r = i * h_;
      const Stencil& s = st_[i];
      double d1w = 0, d2w = 0, d1z = 0, d2z = 0;
      for (std::size_t k = 0; k < s.idx.size(); ++k) {
        const double wk = w(x, s.idx[k]), zk = z(x, s.idx[k]);
        d1w += s.d1[k] * wk;
        d2w += s.d2[k] * wk;
        d1z += s.d1[k] * zk;
        d2z += s.d2[k] * zk;
      }
      d1w /= h_;
      d1z /= h_;
      d2w /= h_ * h_;
      d2z /= h_ * h_;
      const double wi = w(x, i), zi = z(x, i);
      R[2 * (i - 1)] = d2w + d1w / r + j2_ * zi * zi * (1.0 - wi) / (r * r) - 0.5 * lam_ * wi * (2.0 - wi) * (1.0 - wi);
      R[2 * (i - 1) + 1] = d2z - d1z / r - (1.0 - wi) * (1.0 - wi) * zi;
    }
    double bw = 0, bz = 0;
    for (std::size_t k = 0; k < back_.size(); ++k) {
      bw += back_[k] * w(x, N_ - int(back_.size()) + 1 + int(k));
      bz += back_[k] * z(x, N_ - int(back_.size()) + 1 + int(k));
    }
    R[2 * (N_ - 1)] = bw / h_ + m_ * w(x, N_);
    R[2 * (N_ - 1) + 1] = bz / h_ + z(x, N_);
    return R;
  }

  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x) const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(size() * 16);
    auto add_w = [&](int row, int k, double c) {
      if (k == 0) return;
      if (k < 0) t.emplace_back(row, 2 * (-k - 1), sigma_ * c);
      else t.emplace_back(row, 2 * (k - 1), c);
    };
    auto add_z = [&](int row, int k, double c) {
      if (k == 0) return;
      t.emplace_back(row, 2 * (std::abs(k) - 1) + 1, c);
    };
    for (int i = 1; i < N_; ++i) {
      const double r = i * h_;
      const Stencil& s = st_[i];
      const int ru = 2 * (i - 1), rv = ru + 1;
      for (std::size_t k = 0; k < s.idx.size(); ++k) {
        add_w(ru, s.idx[k], s.d2[k] / (h_ * h_) + s.d1[k] / (h_ * r));
        add_z(rv, s.idx[k], s.d2[k] / (h_ * h_) - s.d1[k] / (h_ * r));
      }
      const double wi = w(x, i), zi = z(x, i);
      add_w(ru, i, -j2_ * zi * zi / (r * r) - 0.5 * lam_ * (2.0 - 6.0 * wi + 3.0 * wi * wi));
      add_z(ru, i, 2.0 * j2_ * zi * (1.0 - wi) / (r * r));
      add_w(rv, i, 2.0 * (1.0 - wi) * zi);
      add_z(rv, i, -(1.0 - wi) * (1.0 - wi));
    }
    const int rw = 2 * (N_ - 1), rz = rw + 1;
    for (std::size_t k = 0; k < back_.size(); ++k) {
      const int node = N_ - int(back_.size()) + 1 + int(k);
      add_w(rw, node, back_[k] / h_);
      add_z(rz, node, back_[k] / h_);
    }
    add_w(rw, N_, m_);
    add_z(rz, N_, 1.0);
    Eigen::SparseMatrix<double> J(size(), size());
    J.setFromTriplets(t.begin(), t.end());
    return J;
  }

  // Derivatives of a complement array (node 0 included) with the same stencils.
  void derivatives(const std::vector<double>& f, bool odd_parity_of_one_minus, std::vector<double>& d1,
                   std::vector<double>& d2) const {
    const double sg = odd_parity_of_one_minus ? sigma_ : 1.0;
    auto at = [&](int k) { return k >= 0 ? f[k] : 1.0 - sg * (1.0 - f[-k]); };
    d1.assign(N_ + 1, 0.0);
    d2.assign(N_ + 1, 0.0);
    for (int i = 0; i <= N_; ++i) {
      const Stencil& s = st_[i];
      for (std::size_t k = 0; k < s.idx.size(); ++k) {
        d1[i] += s.d1[k] * at(s.idx[k]);
        d2[i] += s.d2[k] * at(s.idx[k]);
      }
      d1[i] /= h_;
      d2[i] /= h_ * h_;
    }
  }

 private:
  double lam_, j2_, sigma_;
  int N_;
  double h_, m_;
  std::vector<Stencil> st_;
  std::vector<double> back_;
};

// Limit of g(r) even in r from its first three samples: fit a + b r^2 + c r^4.
inline double even_extrapolate(double r1, double g1, double r2, double g2, double r3, double g3) {
  const double x1 = r1 * r1, x2 = r2 * r2, x3 = r3 * r3;
  return g1 * x2 * x3 / ((x1 - x2) * (x1 - x3)) + g2 * x1 * x3 / ((x2 - x1) * (x2 - x3)) +
         g3 * x1 * x2 / ((x3 - x1) * (x3 - x2));
}

}  // namespace detail

inline VortexProfile solve_vortex(double lambda, int degree, VortexDisc disc = {}) {
  require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::OutOfRange, "lambda must be positive");
  require(degree != 0, ErrorCode::DegreeUnsupported, "degree must be nonzero");
  require(disc.N >= 200, ErrorCode::OutOfRange, "need N >= 200");
  require(disc.order == 2 || disc.order == 6, ErrorCode::OutOfRange, "order must be 2 or 6");
  const double R = disc.R_max > 0.0 ? disc.R_max : default_R_max(lambda);
  const double m = decay_rate(lambda);
  // the Robin far-field condition absorbs the leading tail, so the bound is sqrt(tol)
  require(std::exp(-m * R) < std::sqrt(disc.tol), ErrorCode::DomainTooSmall,
          "exp(-m R_max) must be below sqrt(tol); enlarge R_max");

  const int N = disc.N;
  const double h = R / N;
  detail::VortexSystem sys(lambda, degree, N, h, disc.order);
  // Rounding floor of the second-difference stencils; fine grids cannot beat it.
  const double tol = std::max(disc.tol, 64.0 * std::numeric_limits<double>::epsilon() / (h * h));

  Eigen::VectorXd x(sys.size());
  for (int i = 1; i <= N; ++i) {
    x[2 * (i - 1)] = detail::initial_w(i * h);
    x[2 * (i - 1) + 1] = detail::initial_z(i * h);
  }

  Eigen::VectorXd R0 = sys.residual(x);
  double rn = R0.lpNorm<Eigen::Infinity>();
  int it = 0;
  int polish = 0;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  for (; it < disc.max_iter; ++it) {
    if (rn < tol && ++polish > 2) break;
    auto J = sys.jacobian(x);
    lu.compute(J);
    require(lu.info() == Eigen::Success, ErrorCode::NonConvergence, "singular Newton Jacobian");
    Eigen::VectorXd dx = lu.solve(-R0);
    double alpha = 1.0;
    Eigen::VectorXd xn;
    double rnew = 0.0;
    while (true) {
      xn = x + alpha * dx;
      R0 = sys.residual(xn);
      rnew = R0.lpNorm<Eigen::Infinity>();
      if (std::isfinite(rnew) && (rnew <= (1.0 - 0.25 * alpha) * rn || rn < tol)) break;
      alpha *= 0.5;
      if (alpha < 1e-6) break;
    }
    if (rn < tol && !(rnew < rn)) {
      R0 = sys.residual(x);
      break;
    }
    x = xn;
    rn = rnew;
  }
  require(rn < tol, ErrorCode::NonConvergence, "Newton did not reach tolerance");

  VortexProfile p;
  p.lambda = lambda;
  p.degree = degree;
  p.order = disc.order;
  p.tol = tol;
  p.h = h;
  p.residual_norm = rn;
  p.newton_iterations = it;
  p.r.resize(N + 1);
  p.W.resize(N + 1);
  p.Z.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    p.r[i] = i * h;
    p.W[i] = sys.w(x, i);
    p.Z[i] = sys.z(x, i);
  }
  p.r[N] = R;
  p.U.resize(N + 1);
  p.V.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    p.U[i] = 1.0 - p.W[i];
    p.V[i] = 1.0 - p.Z[i];
  }
  std::vector<double> d1, d2;
  sys.derivatives(p.W, true, d1, d2);
  p.dU.resize(N + 1);
  p.d2U.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    p.dU[i] = -d1[i];
    p.d2U[i] = -d2[i];
  }
  sys.derivatives(p.Z, false, d1, d2);
  p.dV.resize(N + 1);
  p.d2V.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    p.dV[i] = -d1[i];
    p.d2V[i] = -d2[i];
  }
  p.dV[0] = 0.0;
  if (std::abs(degree) > 1) p.dU[0] = 0.0;

  const int aj = std::abs(degree);
  auto gU = [&](int i) { return p.U[i] / std::pow(p.r[i], aj); };
  auto gV = [&](int i) { return p.V[i] / (p.r[i] * p.r[i]); };
  p.c1 = detail::even_extrapolate(p.r[1], gU(1), p.r[2], gU(2), p.r[3], gU(3));
  p.c2 = detail::even_extrapolate(p.r[1], gV(1), p.r[2], gV(2), p.r[3], gV(3));
  return p;
}

struct VortexResidual {
  double res_U = 0.0;
  double res_V = 0.0;
};

// Fourth-order centred check on nodes 2..N-2, written out by hand so it shares nothing with the solver.
// The U equation is evaluated through g = U / r^|j|, which is even and smooth, so no 1/r amplifies stencil error.
inline VortexResidual vortex_residual(const VortexProfile& p) {
  VortexResidual out;
  const int N = p.N();
  if (N < 4) return out;
  const int a = std::abs(p.degree);
  const double j2 = double(p.degree) * p.degree;
  std::vector<double> g(N + 1);
  for (int i = 1; i <= N; ++i) g[i] = p.U[i] / std::pow(p.r[i], a);
  g[0] = detail::even_extrapolate(p.r[1], g[1], p.r[2], g[2], p.r[3], g[3]);
  for (int i = 2; i <= N - 2; ++i) {
    const double h = p.r[i + 1] - p.r[i];
    const double r = p.r[i];
    const double g1 = (g[i - 2] - 8.0 * g[i - 1] + 8.0 * g[i + 1] - g[i + 2]) / (12.0 * h);
    const double g2 = (-g[i - 2] + 16.0 * g[i - 1] - 30.0 * g[i] + 16.0 * g[i + 1] - g[i + 2]) / (12.0 * h * h);
    const double v1 = (p.V[i - 2] - 8.0 * p.V[i - 1] + 8.0 * p.V[i + 1] - p.V[i + 2]) / (12.0 * h);
    const double v2 = (-p.V[i - 2] + 16.0 * p.V[i - 1] - 30.0 * p.V[i] + 16.0 * p.V[i + 1] - p.V[i + 2]) / (12.0 * h * h);
    const double U = p.U[i], V = p.V[i];
    const double lap = std::pow(r, a) * (g2 + (2.0 * a + 1.0) * g1 / r);
    const double ru = -lap + j2 * (V * V - 2.0 * V) * U / (r * r) + (j2 - a * a) * U / (r * r) -
                      0.5 * p.lambda * (1.0 - U * U) * U;
    const double rv = -v2 + v1 / r - U * U * (1.0 - V);
    out.res_U = std::max(out.res_U, std::abs(ru));
    out.res_V = std::max(out.res_V, std::abs(rv));
  }
  return out;
}

struct DecayRates {
  double rate_U = 0.0;
  double rate_V = 0.0;
};

inline DecayRates fit_decay_rates(const VortexProfile& p, double lo = 0.5, double hi = 0.9) {
  require(0.0 < lo && lo < hi && hi < 1.0, ErrorCode::OutOfRange, "window must sit inside (0,1)");
  const double R = p.R_max();
  auto fit = [&](const std::vector<double>& f) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int i = 0; i <= p.N(); ++i) {
      if (p.r[i] < lo * R || p.r[i] > hi * R) continue;
      require(std::isfinite(f[i]) && f[i] > 1e3 * std::numeric_limits<double>::min(), ErrorCode::WindowUnderflow,
              "1-U or 1-V underflows on the fit window");
      const double y = -std::log(f[i]);
      sx += p.r[i];
      sy += y;
      sxx += p.r[i] * p.r[i];
      sxy += p.r[i] * y;
      ++n;
    }
    require(n >= 2, ErrorCode::WindowUnderflow, "fit window holds fewer than two nodes");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  return {fit(p.W), fit(p.Z)};
}

struct ProfileValue {
  double U, V, dU, dV;
};

// Cubic Hermite: U from (U, U'), U' from (U', U'').
inline ProfileValue evaluate_profile(const VortexProfile& p, double r) {
  require(r >= 0.0 && r <= p.R_max() * (1.0 + 1e-14), ErrorCode::OutOfRange, "r outside [0, R_max]");
  const int N = p.N();
  int i = std::min(N - 1, static_cast<int>(r / p.h));
  const double h = p.r[i + 1] - p.r[i];
  const double t = std::clamp((r - p.r[i]) / h, 0.0, 1.0);
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  auto herm = [&](const std::vector<double>& f, const std::vector<double>& df) {
    return h00 * f[i] + h10 * h * df[i] + h01 * f[i + 1] + h11 * h * df[i + 1];
  };
  if (t == 0.0) return {p.U[i], p.V[i], p.dU[i], p.dV[i]};
  if (t == 1.0) return {p.U[i + 1], p.V[i + 1], p.dU[i + 1], p.dV[i + 1]};
  return {herm(p.U, p.dU), herm(p.V, p.dV), herm(p.dU, p.d2U), herm(p.dV, p.d2V)};
}

// 0 < U, V < 1 and strict increase, read off the tails W = 1-U, Z = 1-V where U rounds to 1
inline bool bounded_and_monotone(const VortexProfile& p) {
  for (int i = 1; i <= p.N(); ++i) {
    if (!(p.U[i] > 0 && p.W[i] > 0 && p.V[i] > 0 && p.Z[i] > 0)) return false;
    if (!(p.W[i] < p.W[i - 1] && p.Z[i] < p.Z[i - 1])) return false;
  }
  return true;
}

struct ProfileJet {
  double U, dU, d2U;
  double V, dV, d2V;
  double W, Z;  // 1-U, 1-V
};

// Quintic Hermite sampler with exponential tails beyond R_max; used by the fiber and 4D code.
class ProfileSampler {
 public:
  explicit ProfileSampler(const VortexProfile& p) : p_(&p) {}

  const VortexProfile& profile() const { return *p_; }

  ProfileJet operator()(double r) const {
    const VortexProfile& p = *p_;
    r = std::abs(r);
    const int N = p.N();
    if (r >= p.R_max()) {
      const double m = p.decay_rate();
      const double ew = p.W[N] * std::exp(-m * (r - p.R_max()));
      const double ez = p.Z[N] * std::exp(-(r - p.R_max()));
      return {1.0 - ew, m * ew, -m * m * ew, 1.0 - ez, ez, -ez, ew, ez};
    }
    const int i = std::min(N - 1, static_cast<int>(r / p.h));
    const double h = p.r[i + 1] - p.r[i];
    const double t = (r - p.r[i]) / h;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double b[6] = {1 - 10 * t3 + 15 * t4 - 6 * t5, t - 6 * t3 + 8 * t4 - 3 * t5, 0.5 * (t2 - 3 * t3 + 3 * t4 - t5),
                         10 * t3 - 15 * t4 + 6 * t5,     -4 * t3 + 7 * t4 - 3 * t5,    0.5 * (t3 - 2 * t4 + t5)};
    const double db[6] = {-30 * t2 + 60 * t3 - 30 * t4, 1 - 18 * t2 + 32 * t3 - 15 * t4, 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4),
                          30 * t2 - 60 * t3 + 30 * t4,  -12 * t2 + 28 * t3 - 15 * t4,  0.5 * (3 * t2 - 8 * t3 + 5 * t4)};
    const double ddb[6] = {-60 * t + 180 * t2 - 120 * t3, -36 * t + 96 * t2 - 60 * t3, 0.5 * (2 - 18 * t + 36 * t2 - 20 * t3),
                           60 * t - 180 * t2 + 120 * t3,  -24 * t + 84 * t2 - 60 * t3, 0.5 * (6 * t - 24 * t2 + 20 * t3)};
    auto q = [&](const std::vector<double>& f, const std::vector<double>& df, const std::vector<double>& d2f,
                 const double* basis, double scale) {
      return (f[i] * basis[0] + h * df[i] * basis[1] + h * h * d2f[i] * basis[2] + f[i + 1] * basis[3] +
              h * df[i + 1] * basis[4] + h * h * d2f[i + 1] * basis[5]) /
             scale;
    };
    // Complement arrays carry the tail; derivatives of W are -dU.
    std::vector<double> const& W = p.W;
    const double w = W[i] * b[0] - h * p.dU[i] * b[1] - h * h * p.d2U[i] * b[2] + W[i + 1] * b[3] -
                     h * p.dU[i + 1] * b[4] - h * h * p.d2U[i + 1] * b[5];
    const double z = p.Z[i] * b[0] - h * p.dV[i] * b[1] - h * h * p.d2V[i] * b[2] + p.Z[i + 1] * b[3] -
                     h * p.dV[i + 1] * b[4] - h * h * p.d2V[i + 1] * b[5];
    ProfileJet j;
    j.W = w;
    j.Z = z;
    j.U = 1.0 - w;
    j.V = 1.0 - z;
    j.dU = q(p.U, p.dU, p.d2U, db, h);
    j.d2U = q(p.U, p.dU, p.d2U, ddb, h * h);
    j.dV = q(p.V, p.dV, p.d2V, db, h);
    j.d2V = q(p.V, p.dV, p.d2V, ddb, h * h);
    return j;
  }

 private:
  const VortexProfile* p_;
};

}  // namespace ymh
