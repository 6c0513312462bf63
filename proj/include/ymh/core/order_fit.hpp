#pragma once

#include <cmath>
#include <vector>

#include "ymh/core/error.hpp"

namespace ymh {

struct OrderFit {
  std::vector<double> h;
  std::vector<double> err;
  std::vector<double> pairwise;  // log(e_i/e_{i+1}) / log(h_i/h_{i+1})
  double slope = 0.0;            // least squares on log-log
};

inline OrderFit fit_order(const std::vector<double>& h, const std::vector<double>& err) {
  require(h.size() == err.size(), ErrorCode::ShapeMismatch, "ladder sizes differ");
  require(h.size() >= 3, ErrorCode::InsufficientLadder, "need at least three grids");
  OrderFit f{h, err, {}, 0.0};
  const std::size_t n = h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    if (i + 1 < n) f.pairwise.push_back(std::log(err[i] / err[i + 1]) / std::log(h[i] / h[i + 1]));
  }
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return f;
}

}  // namespace ymh
