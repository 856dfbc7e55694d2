#include "discnet/optimizer.hpp"

#include <cmath>

namespace discnet {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.values().size(), 0.0);
    v_.emplace_back(p.values().size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = cfg_.literal_bias_correction
                         ? 1.0 - cfg_.beta1
                         : 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = cfg_.literal_bias_correction
                         ? 1.0 - cfg_.beta2
                         : 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& [name, p] = params_[i];
    if (!p.has_grad()) {
      throw NumericError("adamw_step: parameter '" + name + "' has no gradient");
    }
    const auto& g = p.grad();
    check_finite(g, "adamw_step(" + name + ")");
    auto& theta = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] = theta[j] - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps)) -
                 cfg_.lr * cfg_.weight_decay * theta[j];
    }
    p.clear_grad();
  }
}

void sgd_step(std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) {
      throw NumericError("sgd_step: parameter '" + name + "' has no gradient");
    }
    const auto& g = p.grad();
    check_finite(g, "sgd_step(" + name + ")");
    auto& theta = p.mutable_values();
    for (size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * g[j];
    p.clear_grad();
  }
}

}  // namespace discnet
