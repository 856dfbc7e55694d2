#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "discnet/tensor.hpp"

namespace discnet {

struct AdamWConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // When true, bias correction divides by (1 - beta) instead of (1 - beta^t).
  bool literal_bias_correction = false;
};

// AdamW over a fixed parameter list: moment updates first, then one combined
// write of theta with both the Adam term and the decoupled decay term read
// from the pre-update theta.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

  // Consumes the gradients accumulated on the parameters and clears them.
  void step();

  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

  // Moment buffers for checkpointing, in parameter order.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

// Plain gradient descent: theta <- theta - lr * g. Clears gradients.
void sgd_step(std::vector<std::pair<std::string, Tensor>>& params, double lr);

}  // namespace discnet
