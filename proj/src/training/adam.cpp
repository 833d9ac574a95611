#include <cmath>
#include <stdexcept>

#include "dense/optim.hpp"

namespace dense {

void Adam::step(Checkpoint& ckpt, const GradientMap& grads) {
  for (const auto& [name, g] : grads) {
    if (!ckpt.contains(name)) throw std::invalid_argument("adam: gradient for unknown tensor " + name);
    const TensorEntry& e = ckpt.entry(name);
    if (!e.trainable) throw std::invalid_argument("adam: gradient supplied for frozen tensor " + name);
    if (g.size() != e.tensor.size()) throw std::invalid_argument("adam: gradient shape mismatch for " + name);
  }
  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& [name, g] : grads) {
    Tensor& p = ckpt.tensor(name);
    Moments& mo = state_[name];
    if (mo.m.empty()) {
      mo.m.assign(p.size(), 0.0);
      mo.v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * gi;
      mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * gi * gi;
      const double update = cfg_.lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + cfg_.eps);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

}  // namespace dense
