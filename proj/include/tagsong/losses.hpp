#pragma once

#include <cmath>
#include <string>

#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"

namespace tagsong {

enum class LossKind { kMse, kCpl, kMrl };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kMse: return "mse";
    case LossKind::kCpl: return "cpl";
    case LossKind::kMrl: return "mrl";
  }
  return "mse";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "cpl") return LossKind::kCpl;
  if (s == "mrl") return LossKind::kMrl;
  throw ConfigError("unknown loss '" + s + "' (expected mse, cpl, or mrl)");
}

struct LossResult {
  double value = 0.0;
  Matrix d_prediction;
};

// Squared distance to the tag vector: ||target - prediction||^2.
inline LossResult mse_loss(const Matrix& prediction, const Matrix& target) {
  require_same_shape(prediction, target, "mse_loss");
  LossResult r;
  r.d_prediction = Matrix(prediction.rows(), prediction.cols());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    r.value += d * d;
    r.d_prediction[i] = 2.0 * d;
  }
  if (!std::isfinite(r.value)) throw NumericError("mse_loss: non-finite value");
  return r;
}

inline double cosine_similarity(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "cosine_similarity");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
  const double c = dot(a, b) / (na * nb);
  if (!std::isfinite(c)) throw NumericError("cosine_similarity: non-finite value");
  return c;
}

// d cos(t, x) / dx = t / (|t||x|) - cos * x / |x|^2
inline Matrix cosine_grad_wrt_first(const Matrix& x, const Matrix& t) {
  const double nx = norm(x);
  const double nt = norm(t);
  if (nx == 0.0 || nt == 0.0) throw NumericError("cosine_grad: zero-norm vector");
  const double c = dot(x, t) / (nx * nt);
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = t[i] / (nx * nt) - c * x[i] / (nx * nx);
  }
  check_finite(g, "cosine_grad");
  return g;
}

// Cosine proximity loss: -cos(target, prediction).
inline LossResult cosine_loss(const Matrix& prediction, const Matrix& target) {
  require_same_shape(prediction, target, "cosine_loss");
  LossResult r;
  r.value = -cosine_similarity(prediction, target);
  r.d_prediction = scaled(cosine_grad_wrt_first(prediction, target), -1.0);
  return r;
}

struct MarginLossResult {
  double value = 0.0;
  Matrix d_positive;
  Matrix d_negative;
};

// Ranking hinge on cosine scores:
//   max{0, margin + cos(target, negative) - cos(target, positive)}.
// On the inactive side (including the boundary) both gradients are zero.
inline MarginLossResult margin_loss(const Matrix& positive, const Matrix& negative,
                                    const Matrix& target, double margin = 1.0) {
  require_same_shape(positive, target, "margin_loss");
  require_same_shape(negative, target, "margin_loss");
  if (margin < 0.0) throw ParameterError("margin_loss: margin must be non-negative");
  MarginLossResult r;
  r.d_positive = Matrix(positive.rows(), positive.cols());
  r.d_negative = Matrix(negative.rows(), negative.cols());
  const double raw =
      margin + cosine_similarity(target, negative) - cosine_similarity(target, positive);
  if (raw > 0.0) {
    r.value = raw;
    r.d_positive = scaled(cosine_grad_wrt_first(positive, target), -1.0);
    r.d_negative = cosine_grad_wrt_first(negative, target);
  }
  return r;
}

}  // namespace tagsong
