#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slowsem/nn.hpp"

namespace slowsem {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with decoupled weight decay:
//   p <- p * (1 - lr * wd)
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(ParamSet params, AdamWConfig config);

  // Updates every parameter whose name starts with one of the active prefixes
  // (all parameters when the list is empty).
  void step(const std::vector<std::string>& active_prefixes = {});

  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }
  const AdamWConfig& config() const { return config_; }

  // Moment buffers, named "<param>.adam_m" / "<param>.adam_v", for checkpointing.
  std::vector<BufferRef> state();

 private:
  ParamSet params_;
  AdamWConfig config_;
  std::vector<Matrix> m_, v_;
  std::vector<std::string> state_names_;
  std::int64_t t_ = 0;
};

}  // namespace slowsem
