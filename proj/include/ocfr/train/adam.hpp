#pragma once

#include <cmath>
#include <vector>

#include "ocfr/nn/layers.hpp"

namespace ocfr::train {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;  ///< decoupled: theta *= (1 - lr * decay) before the Adam step
};

/// Adam with decoupled weight decay. State is keyed by parameter index.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const noexcept { return cfg_; }
  long steps() const noexcept { return t_; }

  void step(nn::ParamStore<T>& ps) {
    if (m_.empty()) {
      m_.resize(ps.size());
      v_.resize(ps.size());
      for (std::size_t i = 0; i < ps.size(); ++i) {
        m_[i].assign(ps[static_cast<int>(i)].grad.size(), 0.0);
        v_[i].assign(ps[static_cast<int>(i)].grad.size(), 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T decay = static_cast<T>(1.0 - cfg_.learning_rate * cfg_.weight_decay);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& p = ps[static_cast<int>(i)];
      if (!p.trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1 - cfg_.beta2) * g * g;
        const double update = cfg_.learning_rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
        p.value[j] = p.value[j] * decay - static_cast<T>(update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ocfr::train
