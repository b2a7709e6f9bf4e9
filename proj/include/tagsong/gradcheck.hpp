#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"

namespace tagsong {

// Central difference (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
// loss_fn must be deterministic; h must be positive.
inline Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_fn,
                               const Matrix& params, double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: h must be positive");
  Matrix grad(params.rows(), params.cols());
  Matrix probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = loss_fn(probe);
    probe[i] = saved - h;
    const double down = loss_fn(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite loss at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
// whose true gradient is ~0 from tripping on finite-difference noise.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  require_same_shape(a, b, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace tagsong
