#pragma once

#include <algorithm>
#include <vector>

#include "ymh/core/error.hpp"

namespace ymh {

// Natural cubic spline; zero to the right of the last knot.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const int n = static_cast<int>(x_.size());
    require(n >= 3 && static_cast<int>(y_.size()) == n, ErrorCode::ShapeMismatch, "spline needs >= 3 matching knots");
    for (int i = 1; i < n; ++i) require(x_[i] > x_[i - 1], ErrorCode::OutOfRange, "spline knots must increase");
    m_.assign(n, 0.0);
    std::vector<double> c(n, 0.0), d(n, 0.0);
    // Thomas sweep for the interior second derivatives
    for (int i = 1; i < n - 1; ++i) {
      const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      const double a = h0 / 6.0, b = (h0 + h1) / 3.0, cc = h1 / 6.0;
      const double r = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
      const double den = b - a * c[i - 1];
      c[i] = cc / den;
      d[i] = (r - a * d[i - 1]) / den;
    }
    for (int i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
  }

  double operator()(double t) const {
    if (x_.empty() || t > x_.back()) return 0.0;
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    int i = std::clamp(static_cast<int>(it - x_.begin()) - 1, 0, static_cast<int>(x_.size()) - 2);
    const double h = x_[i + 1] - x_[i], A = (x_[i + 1] - t) / h, B = (t - x_[i]) / h;
    return A * y_[i] + B * y_[i + 1] + ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> x_, y_, m_;
};

}  // namespace ymh
