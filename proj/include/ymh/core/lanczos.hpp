#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ymh/core/error.hpp"

namespace ymh {

using SpMat = Eigen::SparseMatrix<double>;

struct EigenPairs {
  std::vector<double> values;  // ascending
  Eigen::MatrixXd vectors;     // B-normalised columns
  std::vector<double> residuals;  // ||A x - mu B x||_2
  int iterations = 0;
};

struct LanczosOptions {
  int nev = 2;
  double sigma = -1.0;  // shift below the wanted end of the spectrum
  double tol = 1e-12;
  int max_steps = 400;
  std::uint64_t seed = 12345;
};

// Shift-invert Lanczos for A x = mu B x, A symmetric, B symmetric positive definite.
// Finds the nev eigenvalues closest to sigma from above when sigma sits below the spectrum.
inline EigenPairs shift_invert_lanczos(const SpMat& A, const SpMat& B, LanczosOptions opt) {
  const int n = static_cast<int>(A.rows());
  require(A.cols() == n && B.rows() == n && B.cols() == n, ErrorCode::ShapeMismatch, "eigenproblem shapes differ");
  require(opt.nev >= 1 && opt.nev < n, ErrorCode::OutOfRange, "nev out of range");

  SpMat C = A - opt.sigma * B;
  C.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(C);
  lu.factorize(C);
  require(lu.info() == Eigen::Success, ErrorCode::EigenNonConvergence, "shifted matrix is singular");

  const int mmax = std::min(n, opt.max_steps);
  Eigen::MatrixXd Vb(n, mmax + 1);
  std::vector<double> alpha, beta;

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uni(rng);
  auto bnorm = [&](const Eigen::VectorXd& x) { return std::sqrt(x.dot(B * x)); };
  v /= bnorm(v);
  Vb.col(0) = v;

  EigenPairs out;
  Eigen::VectorXd theta;
  Eigen::MatrixXd S;
  int m = 0;
  bool converged = false;
  for (m = 1; m <= mmax; ++m) {
    Eigen::VectorXd Bv = B * Vb.col(m - 1);
    Eigen::VectorXd w = lu.solve(Bv);
    const double a = w.dot(B * Vb.col(m - 1));
    alpha.push_back(a);
    // two passes of full reorthogonalisation in the B inner product
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd Bw = B * w;
      for (int k = 0; k < m; ++k) w -= Vb.col(k).dot(Bw) * Vb.col(k);
    }
    const double b = bnorm(w);
    beta.push_back(b);

    const bool check = (m >= opt.nev + 2 && (m % 5 == 0 || m == mmax)) || b < 1e-14;
    if (check || m == mmax) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      theta = es.eigenvalues();
      S = es.eigenvectors();
      if (m >= opt.nev) {
        bool ok = true;
        for (int k = 0; k < opt.nev; ++k) {
          const int idx = m - 1 - k;
          const double est = std::abs(b * S(m - 1, idx));
          if (est > opt.tol * std::abs(theta[idx])) ok = false;
        }
        if (ok) {
          converged = true;
          break;
        }
      }
    }
    if (b < 1e-14 || m == mmax) break;
    Vb.col(m) = w / b;
  }
  require(converged, ErrorCode::EigenNonConvergence, "Lanczos did not converge");

  out.iterations = m;
  out.vectors.resize(n, opt.nev);
  for (int k = 0; k < opt.nev; ++k) {
    const int idx = m - 1 - k;
    Eigen::VectorXd x = Vb.leftCols(m) * S.col(idx);
    x /= bnorm(x);
    // Rayleigh quotient on the original pencil
    const double mu = x.dot(A * x);
    out.values.push_back(mu);
    out.vectors.col(k) = x;
    out.residuals.push_back((A * x - mu * (B * x)).norm());
  }
  // ascending order with deterministic tie handling
  std::vector<int> ord(opt.nev);
  for (int k = 0; k < opt.nev; ++k) ord[k] = k;
  std::stable_sort(ord.begin(), ord.end(), [&](int i, int j) { return out.values[i] < out.values[j]; });
  EigenPairs sorted;
  sorted.iterations = out.iterations;
  sorted.vectors.resize(n, opt.nev);
  for (int k = 0; k < opt.nev; ++k) {
    sorted.values.push_back(out.values[ord[k]]);
    sorted.residuals.push_back(out.residuals[ord[k]]);
    sorted.vectors.col(k) = out.vectors.col(ord[k]);
  }
  return sorted;
}

// Dense reference for validation on coarse grids.
inline std::vector<double> dense_generalized_eigs(const SpMat& A, const SpMat& B, int nev) {
  Eigen::MatrixXd Ad(A), Bd(B);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Ad, Bd);
  require(es.info() == Eigen::Success, ErrorCode::EigenNonConvergence, "dense eigensolver failed");
  std::vector<double> v;
  for (int k = 0; k < nev && k < Ad.rows(); ++k) v.push_back(es.eigenvalues()[k]);
  return v;
}

}  // namespace ymh
