#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dense/checkpoint.hpp"
#include "dense/graph.hpp"

namespace dense {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every tensor named in grads. A gradient for a
  // frozen or unknown tensor is an error and leaves the checkpoint untouched.
  void step(Checkpoint& ckpt, const GradientMap& grads);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace dense
