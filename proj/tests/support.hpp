#pragma once

// Test-only oracles. Nothing here calls into the code path it is used to
// check: finite differences only evaluate forward values, and the offline
// self-feedback solver only uses the whole-signal forward pass.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dense/checkpoint.hpp"
#include "dense/graph.hpp"
#include "dense/loss.hpp"
#include "dense/model.hpp"

namespace dense::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937& rng, float scale = 1.0f) {
  std::uniform_real_distribution<float> dist(-scale, scale);
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

inline std::vector<float> random_signal(std::size_t n, std::mt19937& rng, float scale = 0.5f) {
  std::uniform_real_distribution<float> dist(-scale, scale);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

// Builds the op under test from named leaves and returns its output.
using OpBuilder = std::function<Var(Graph&, const std::map<std::string, Var>&)>;

struct FdResult {
  double worst_rel_error = 0.0;
  std::string worst_name;
};

// Checks d/d(param) of sum(out * probe) against central differences for every
// entry of every leaf. Relative error is norm-wise per leaf.
inline FdResult check_op_gradients(std::map<std::string, Tensor> leaves, const OpBuilder& build,
                                   std::mt19937& rng, float h = 1e-3f) {
  Tensor probe;
  {
    Graph g;
    std::map<std::string, Var> vars;
    for (auto& [name, t] : leaves) vars[name] = g.constant(t);
    probe = random_tensor(g.value(build(g, vars)).shape(), rng);
  }
  auto eval = [&](const std::map<std::string, Tensor>& ls) {
    Graph g;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : ls) vars[name] = g.constant(t);
    const Tensor& out = g.value(build(g, vars));
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * probe[i];
    return acc;
  };

  Graph g;
  std::map<std::string, Var> vars;
  for (auto& [name, t] : leaves) vars[name] = g.parameter(name, t, true);
  Var loss = g.sum(g.mul(build(g, vars), g.constant(probe)));
  const GradientMap grads = g.backward(loss);

  FdResult result;
  for (auto& [name, t] : leaves) {
    auto it = grads.find(name);
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float orig = t[i];
      t[i] = orig + h;
      const double up = eval(leaves);
      t[i] = orig - h;
      const double down = eval(leaves);
      t[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = it == grads.end() ? 0.0 : it->second[i];
      num += (an - fd) * (an - fd);
      den_a += an * an;
      den_f += fd * fd;
    }
    const double denom = std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-12});
    const double rel = std::sqrt(num) / denom;
    if (rel > result.worst_rel_error) {
      result.worst_rel_error = rel;
      result.worst_name = name;
    }
  }
  return result;
}

// Random shapes, dilations and strides for every differentiable op; returns
// the worst per-leaf error, named "op:leaf".
inline FdResult op_gradient_suite(std::uint32_t seed, int trials) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> dim(1, 8);
  double worst = 0.0;
  std::string worst_case;
  auto track = [&](const char* op, const FdResult& r) {
    if (r.worst_rel_error > worst) {
      worst = r.worst_rel_error;
      worst_case = std::string(op) + ":" + r.worst_name;
    }
  };
  for (int trial = 0; trial < trials; ++trial) {
    const int c_in = dim(rng), c_out = dim(rng), t = dim(rng), k = dim(rng);
    const int dil = 1 + trial % 3, stride = 1 + trial % 2;
    {
      kernels::Conv1dParams p;
      p.dilation = dil;
      p.pad_left = (k - 1) * dil;
      std::map<std::string, Tensor> leaves{{"x", random_tensor({c_in, t}, rng)},
                                           {"w", random_tensor({c_out, c_in, k}, rng)},
                                           {"b", random_tensor({c_out}, rng)}};
      track("conv1d", check_op_gradients(leaves, [p](Graph& g, const auto& v) {
        return g.conv1d(v.at("x"), v.at("w"), v.at("b"), p);
      }, rng));
    }
    {
      kernels::Conv1dParams p;
      p.stride = stride;
      const int len = k + t;  // at least one frame
      std::map<std::string, Tensor> leaves{{"x", random_tensor({1, len}, rng)},
                                           {"w", random_tensor({c_out, 1, k}, rng)}};
      track("conv1d-strided", check_op_gradients(leaves, [p](Graph& g, const auto& v) {
        return g.conv1d(v.at("x"), v.at("w"), Var{}, p);
      }, rng));
    }
    {
      kernels::Conv1dParams p;
      p.dilation = dil;
      p.pad_left = (k - 1) * dil;
      p.groups = c_in;
      std::map<std::string, Tensor> leaves{{"x", random_tensor({c_in, t}, rng)},
                                           {"w", random_tensor({c_in, 1, k}, rng)},
                                           {"b", random_tensor({c_in}, rng)}};
      track("depthwise", check_op_gradients(leaves, [p](Graph& g, const auto& v) {
        return g.conv1d(v.at("x"), v.at("w"), v.at("b"), p);
      }, rng));
    }
    {
      std::map<std::string, Tensor> leaves{{"x", random_tensor({c_in, t}, rng)},
                                           {"w", random_tensor({c_in, c_out, k}, rng)}};
      track("conv_transpose1d", check_op_gradients(leaves, [stride](Graph& g, const auto& v) {
        return g.conv_transpose1d(v.at("x"), v.at("w"), stride);
      }, rng));
    }
    {
      const int c = std::max(c_in, 2);
      std::map<std::string, Tensor> leaves{{"x", random_tensor({c, t}, rng)},
                                           {"gain", random_tensor({c}, rng)},
                                           {"bias", random_tensor({c}, rng)}};
      track("cln", check_op_gradients(leaves, [](Graph& g, const auto& v) {
        return g.cumulative_layer_norm(v.at("x"), v.at("gain"), v.at("bias"), 1e-8f);
      }, rng));
    }
    {
      // keep inputs away from the kink so a step of h never crosses it
      Tensor x = random_tensor({c_in, t}, rng);
      for (float& v : x.data()) v = v < 0 ? v - 0.05f : v + 0.05f;
      std::map<std::string, Tensor> leaves{{"x", x}, {"alpha", random_tensor({c_in}, rng)}};
      track("prelu", check_op_gradients(leaves, [](Graph& g, const auto& v) {
        return g.prelu(v.at("x"), v.at("alpha"));
      }, rng));
      track("relu", check_op_gradients({{"x", x}}, [](Graph& g, const auto& v) { return g.relu(v.at("x")); }, rng));
      track("sigmoid", check_op_gradients({{"x", x}}, [](Graph& g, const auto& v) { return g.sigmoid(v.at("x")); }, rng));
    }
    {
      std::map<std::string, Tensor> leaves{{"x", random_tensor({c_in, t}, rng)}, {"e", random_tensor({c_in, 1}, rng)},
                                           {"s", random_tensor({c_out, t}, rng)}};
      track("adapt/concat/mean", check_op_gradients(leaves, [t](Graph& g, const auto& v) {
        Var a = g.mul_column(v.at("x"), v.at("e"));
        Var r = g.repeat_columns(g.time_mean(v.at("x")), t);
        return g.concat_rows(g.add(a, g.mul(r, a)), v.at("s"));
      }, rng));
    }
    {
      const int n = 16 + t;
      std::map<std::string, Tensor> leaves{{"est", random_tensor({1, n}, rng)}};
      const Tensor ref = random_tensor({1, n}, rng);
      track("snr", check_op_gradients(leaves, [ref](Graph& g, const auto& v) { return g.snr_loss(v.at("est"), ref); }, rng));
      track("si-snr", check_op_gradients(leaves, [ref](Graph& g, const auto& v) {
        return g.si_snr_loss(v.at("est"), ref);
      }, rng));
    }
  }
  return {worst, worst_case};
}

inline std::vector<float> delay_signal(std::span<const float> source, std::size_t length, int delay) {
  std::vector<float> out(length, 0.0f);
  for (std::size_t n = static_cast<std::size_t>(delay); n < length; ++n) {
    const std::size_t src = n - static_cast<std::size_t>(delay);
    if (src < source.size()) out[n] = source[src];
  }
  return out;
}

// Offline solution of the self-feedback loop: iterate
//   out_{k+1} = forward(mixture, delay(out_k))
// to its fixed point. With delay >= K every iteration finalizes at least one
// more hop of output, so the iteration terminates.
inline Waveform self_feedback_offline(std::span<const float> mixture, std::span<const float> enrollment,
                                      const Checkpoint& ckpt, int* iterations = nullptr) {
  const int d = ckpt.config.sample_delay;
  Waveform out(ckpt.config.output_length(static_cast<int>(mixture.size())), 0.0f);
  const int max_iter = static_cast<int>(mixture.size()) / ckpt.config.stride + 4;
  for (int it = 0; it < max_iter; ++it) {
    const auto cond = delay_signal(out, mixture.size(), d);
    Waveform next = forward(mixture, enrollment, std::span<const float>(cond), Mode::kDynamic, ckpt);
    if (next == out) {
      if (iterations) *iterations = it;
      return next;
    }
    out = std::move(next);
  }
  throw std::runtime_error("self-feedback iteration did not converge");
}

// Initial checkpoint with every bias, gain and PReLU slope jittered so that
// zero-initialised terms cannot hide mistakes.
inline Checkpoint jittered_checkpoint(const ModelConfig& cfg, std::uint64_t seed, float amount = 0.2f) {
  Checkpoint ckpt = init_checkpoint(cfg, seed);
  std::mt19937 rng(static_cast<std::uint32_t>(seed) ^ 0x5eedu);
  std::uniform_real_distribution<float> jitter(-amount, amount);
  for (auto& [name, entry] : ckpt.entries) {
    if (name.ends_with(".w")) continue;
    for (float& v : entry.tensor.data()) v += jitter(rng);
  }
  return ckpt;
}

struct ModelFdResult {
  double worst_rel_error = 0.0;  // worst per-tensor norm-wise error
  std::string worst_name;
  double global_rel_error = 0.0;  // over all parameters at once
  std::size_t tensors = 0;
  std::size_t entries = 0;
  std::size_t kinked = 0;  // entries left out because the loss is not smooth within +-h
};

// Whole-model check: hybrid loss gradients w.r.t. every parameter the graph
// reads against central differences of the plain forward pass.
//
// ReLU/PReLU kinks: a step that moves some pre-activation across zero makes
// the central difference meaningless. Such entries are detected from the
// forward pass alone (differences at h and h/2 disagree) and left out; the
// analytic gradient plays no part in that decision.
inline ModelFdResult check_model_gradients(Checkpoint ckpt, std::span<const float> mixture,
                                           std::span<const float> enrollment, std::span<const float> target,
                                           std::optional<std::span<const float>> condition, Mode mode,
                                           float h = 1e-3f, double kink_tol = 0.0, double kink_floor = 1e-2) {
  set_all_trainable(ckpt, true);
  const LossWeights w;
  const int out_len = ckpt.config.output_length(static_cast<int>(mixture.size()));
  const Tensor ref = Tensor::row(std::vector<float>(target.begin(), target.begin() + out_len));
  GradientMap grads;
  {
    Graph g;
    Network net(ckpt, true);
    std::optional<Var> cond;
    if (condition) cond = g.constant(Tensor::row(std::vector<float>(condition->begin(), condition->end())));
    auto out = net.forward(g, g.constant(Tensor::row(std::vector<float>(mixture.begin(), mixture.end()))),
                           g.constant(Tensor::row(std::vector<float>(enrollment.begin(), enrollment.end()))), cond, mode);
    grads = g.backward(hybrid_loss(g, out.estimate, ref, w));
  }
  auto loss = [&]() {
    const Waveform est = forward(mixture, enrollment, condition, mode, ckpt);
    return hybrid_loss(est, ref.data(), w);
  };
  ModelFdResult result;
  double g_num = 0.0, g_den_a = 0.0, g_den_f = 0.0;
  for (const auto& [name, an] : grads) {
    Tensor& t = ckpt.tensor(name);
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    auto central = [&](std::size_t i, float step) {
      const float orig = t[i];
      t[i] = orig + step;
      const double up = loss();
      t[i] = orig - step;
      const double down = loss();
      t[i] = orig;
      return (up - down) / (2.0 * static_cast<double>(step));
    };
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double fd = central(i, h);
      ++result.entries;
      if (kink_tol > 0.0) {
        const double half = central(i, 0.5f * h);
        if (std::fabs(fd - half) > kink_tol * std::max({std::fabs(fd), std::fabs(half), kink_floor})) {
          ++result.kinked;
          continue;
        }
      }
      num += (an[i] - fd) * (an[i] - fd);
      den_a += static_cast<double>(an[i]) * an[i];
      den_f += fd * fd;
    }
    g_num += num;
    g_den_a += den_a;
    g_den_f += den_f;
    const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-12});
    if (rel > result.worst_rel_error) {
      result.worst_rel_error = rel;
      result.worst_name = name;
    }
    ++result.tensors;
  }
  result.global_rel_error = std::sqrt(g_num) / std::max({std::sqrt(g_den_a), std::sqrt(g_den_f), 1e-12});
  return result;
}

// Widths <= 8 for finite-difference checks on the whole graph.
inline ModelConfig fd_config() {
  ModelConfig cfg;
  cfg.enc_channels = 8;
  cfg.bottleneck_channels = 4;
  cfg.hidden_channels = 8;
  cfg.tcn_kernel = 3;
  cfg.blocks_per_repeat = 2;
  cfg.repeats = 2;
  cfg.embed_dim = 4;
  cfg.adaptation_block_index = 3;
  cfg.sample_delay = 16;
  cfg.speech_branch_blocks = 1;
  cfg.aux_blocks = 1;
  return cfg;
}

}  // namespace dense::testing
