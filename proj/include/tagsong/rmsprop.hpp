#pragma once

#include <cmath>
#include <map>
#include <string>

#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"

namespace tagsong {

struct RmspropConfig {
  double lr = 0.001;
  double rho = 0.9;
  double eps = 1e-8;
};

inline void validate(const RmspropConfig& c) {
  if (c.lr < 0.0) throw ParameterError("rmsprop: learning rate must be non-negative");
  if (c.rho < 0.0 || c.rho >= 1.0) throw ParameterError("rmsprop: rho must be in [0, 1)");
  if (c.eps <= 0.0) throw ParameterError("rmsprop: eps must be positive");
}

// Root-mean-square gradient scaling with a running second-moment average:
//   acc <- rho * acc + (1 - rho) * g^2
//   theta <- theta - lr * g / (sqrt(acc) + eps)
// Accumulators are keyed by parameter name so state survives checkpointing.
class Rmsprop {
 public:
  explicit Rmsprop(RmspropConfig cfg = {}) : cfg_(cfg) { validate(cfg_); }

  const RmspropConfig& config() const { return cfg_; }

  void step(const std::string& name, Matrix& param, const Matrix& grad) {
    require_same_shape(param, grad, "rmsprop step");
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw NumericError("rmsprop: non-finite gradient for parameter '" + name + "'");
      }
    }
    auto [it, fresh] = acc_.try_emplace(name, Matrix(param.rows(), param.cols()));
    Matrix& acc = it->second;
    if (!fresh) require_same_shape(param, acc, "rmsprop accumulator");
    for (std::size_t i = 0; i < param.size(); ++i) {
      acc[i] = cfg_.rho * acc[i] + (1.0 - cfg_.rho) * grad[i] * grad[i];
      param[i] -= cfg_.lr * grad[i] / (std::sqrt(acc[i]) + cfg_.eps);
    }
    check_finite(param, ("rmsprop: parameter '" + name + "'").c_str());
  }

  std::map<std::string, Matrix>& state() { return acc_; }
  const std::map<std::string, Matrix>& state() const { return acc_; }

 private:
  RmspropConfig cfg_;
  std::map<std::string, Matrix> acc_;
};

}  // namespace tagsong
