#pragma once

#include <cmath>
#include <vector>

namespace ymh::fd {

// Fornberg's recursion: weights c[k][m] for the m-th derivative at x0 using nodes x[k].
inline std::vector<std::vector<double>> fornberg(double x0, const std::vector<double>& x, int max_deriv) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(n, std::vector<double>(max_deriv + 1, 0.0));
  double c1 = 1.0;
  double c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, max_deriv);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  return c;
}

// Weights on integer offsets (unit spacing) for derivative `deriv` at offset `at`.
inline std::vector<double> unit_weights(int first, int count, double at, int deriv) {
  std::vector<double> x(count);
  for (int k = 0; k < count; ++k) x[k] = first + k;
  auto c = fornberg(at, x, deriv);
  std::vector<double> w(count);
  for (int k = 0; k < count; ++k) w[k] = c[k][deriv];
  return w;
}

// Fourth-order centered first and second derivatives, the workhorse of every residual check.
template <class F>
auto d1_c4(F&& f, double x, double h) {
  return (f(x - 2 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h);
}

template <class F>
auto d2_c4(F&& f, double x, double h) {
  return (-f(x - 2 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h * h);
}

}  // namespace ymh::fd
