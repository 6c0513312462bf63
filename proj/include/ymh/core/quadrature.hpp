#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "ymh/core/error.hpp"

namespace ymh::quad {

// Composite Simpson weights on n+1 uniform nodes; odd n closes with a 3/8 panel.
inline std::vector<double> simpson_weights(int n, double h) {
  require(n >= 2, ErrorCode::ShapeMismatch, "simpson needs at least 3 nodes");
  std::vector<double> w(n + 1, 0.0);
  int m = (n % 2 == 0) ? n : n - 3;
  for (int i = 0; i < m; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (m != n) {
    w[m] += 3.0 * h / 8.0;
    w[m + 1] += 9.0 * h / 8.0;
    w[m + 2] += 9.0 * h / 8.0;
    w[m + 3] += 3.0 * h / 8.0;
  }
  return w;
}

inline double simpson(const std::vector<double>& f, double h) {
  auto w = simpson_weights(static_cast<int>(f.size()) - 1, h);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre on [-1,1] by Newton on P_n.
inline Rule gauss_legendre(int n) {
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.x[n - 1 - i] = x;
    r.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

// Composite Gauss-Legendre on [a,b] with `panels` equal panels.
inline Rule composite_gauss(double a, double b, int panels, int order) {
  Rule base = gauss_legendre(order);
  Rule r;
  const double len = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * len;
    for (int i = 0; i < order; ++i) {
      r.x.push_back(lo + 0.5 * len * (base.x[i] + 1.0));
      r.w.push_back(0.5 * len * base.w[i]);
    }
  }
  return r;
}

}  // namespace ymh::quad
