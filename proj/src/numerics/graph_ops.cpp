#include <algorithm>
#include <memory>

#include "dense/graph.hpp"

namespace dense {

using kernels::Conv1dParams;

Var Graph::conv1d(Var x, Var w, Var bias, const Conv1dParams& p) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor* bv = bias.valid() ? &value(bias) : nullptr;
  Tensor out = kernels::conv1d(xv, wv, bv, p);
  std::vector<NodeId> inputs{x.id, w.id};
  if (bias.valid()) inputs.push_back(bias.id);
  return push(std::move(out), inputs, [x, w, bias, p](Graph& g, NodeId self) {
    const Tensor& gy = g.nodes_[self].value;
    Tensor grad_out(gy.shape(), std::vector<float>(gy.grad().begin(), gy.grad().end()));
    std::span<float> gb = bias.valid() ? g.grad_of(bias.id) : std::span<float>{};
    kernels::conv1d_backward(g.nodes_[x.id].value, g.nodes_[w.id].value, grad_out, p, g.grad_of(x.id),
                             g.grad_of(w.id), gb);
  });
}

Var Graph::conv_transpose1d(Var x, Var w, int stride) {
  Tensor out = kernels::conv_transpose1d(value(x), value(w), stride);
  return push(std::move(out), {x.id, w.id}, [x, w, stride](Graph& g, NodeId self) {
    const Tensor& gy = g.nodes_[self].value;
    Tensor grad_out(gy.shape(), std::vector<float>(gy.grad().begin(), gy.grad().end()));
    kernels::conv_transpose1d_backward(g.nodes_[x.id].value, g.nodes_[w.id].value, grad_out, stride,
                                       g.grad_of(x.id), g.grad_of(w.id));
  });
}

Var Graph::cumulative_layer_norm(Var x, Var gain, Var bias, float eps) {
  auto stats = std::make_shared<kernels::ClnStats>();
  Tensor out = kernels::cumulative_layer_norm(value(x), value(gain), value(bias), eps, stats.get());
  return push(std::move(out), {x.id, gain.id, bias.id}, [x, gain, bias, stats](Graph& g, NodeId self) {
    const Tensor& gy = g.nodes_[self].value;
    Tensor grad_out(gy.shape(), std::vector<float>(gy.grad().begin(), gy.grad().end()));
    kernels::cumulative_layer_norm_backward(g.nodes_[x.id].value, g.nodes_[gain.id].value, *stats, grad_out,
                                            g.grad_of(x.id), g.grad_of(gain.id), g.grad_of(bias.id));
  });
}

Var Graph::relu(Var x) {
  Tensor out = kernels::pointwise(value(x), kernels::Activation::kRelu);
  return push(std::move(out), {x.id}, [x](Graph& g, NodeId self) {
    auto gx = g.grad_of(x.id);
    const Tensor& in = g.nodes_[x.id].value;
    auto gy = g.out_grad(self);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += in[i] > 0.0f ? gy[i] : 0.0f;
  });
}

Var Graph::prelu(Var x, Var alpha) {
  Tensor out = kernels::pointwise(value(x), kernels::Activation::kPrelu, &value(alpha));
  return push(std::move(out), {x.id, alpha.id}, [x, alpha](Graph& g, NodeId self) {
    const Tensor& in = g.nodes_[x.id].value;
    const Tensor& a = g.nodes_[alpha.id].value;
    auto gx = g.grad_of(x.id);
    auto ga = g.grad_of(alpha.id);
    auto gy = g.out_grad(self);
    const int rows = in.rank() == 1 ? 1 : in.dim(0);
    const std::size_t cols = in.size() / rows;
    for (int r = 0; r < rows; ++r) {
      const std::size_t ai = a.size() == 1 ? 0 : static_cast<std::size_t>(r);
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        const bool pos = in[i] > 0.0f;
        if (!gx.empty()) gx[i] += pos ? gy[i] : a[ai] * gy[i];
        if (!pos) acc += static_cast<double>(in[i]) * gy[i];
      }
      if (!ga.empty()) ga[ai] += static_cast<float>(acc);
    }
  });
}

Var Graph::sigmoid(Var x) {
  Tensor out = kernels::pointwise(value(x), kernels::Activation::kSigmoid);
  return push(std::move(out), {x.id}, [x](Graph& g, NodeId self) {
    auto gx = g.grad_of(x.id);
    const Tensor& y = g.nodes_[self].value;
    auto gy = g.out_grad(self);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i] * (1.0f - y[i]);
  });
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.same_shape(bv), "add: shape " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return push(std::move(out), {a.id, b.id}, [a, b](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    for (NodeId in : {a.id, b.id}) {
      auto gi = g.grad_of(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gy[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.same_shape(bv), "mul: shape " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return push(std::move(out), {a.id, b.id}, [a, b](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    const Tensor& av = g.nodes_[a.id].value;
    const Tensor& bv = g.nodes_[b.id].value;
    auto ga = g.grad_of(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    auto gb = g.grad_of(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
  });
}

Var Graph::mul_column(Var x, Var column) {
  const Tensor& xv = value(x);
  const Tensor& cv = value(column);
  require(xv.rank() == 2, "mul_column: input must be C x T");
  require(cv.size() == static_cast<std::size_t>(xv.dim(0)),
          "mul_column: embedding has " + std::to_string(cv.size()) + " entries, input has " +
              std::to_string(xv.dim(0)) + " channels");
  const int c = xv.dim(0), frames = xv.dim(1);
  Tensor out(xv.shape());
  for (int ch = 0; ch < c; ++ch)
    for (int t = 0; t < frames; ++t) out.at(ch, t) = xv.at(ch, t) * cv[ch];
  return push(std::move(out), {x.id, column.id}, [x, column, c, frames](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    const Tensor& xv = g.nodes_[x.id].value;
    const Tensor& cv = g.nodes_[column.id].value;
    auto gx = g.grad_of(x.id);
    auto gc = g.grad_of(column.id);
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int t = 0; t < frames; ++t) {
        const std::size_t i = static_cast<std::size_t>(ch) * frames + t;
        if (!gx.empty()) gx[i] += gy[i] * cv[ch];
        acc += static_cast<double>(gy[i]) * xv[i];
      }
      if (!gc.empty()) gc[ch] += static_cast<float>(acc);
    }
  });
}

Var Graph::repeat_columns(Var column, int frames) {
  const Tensor& cv = value(column);
  require(frames >= 1, "repeat_columns: frame count must be positive");
  const int c = static_cast<int>(cv.size());
  Tensor out({c, frames});
  for (int ch = 0; ch < c; ++ch) std::fill_n(&out.at(ch, 0), frames, cv[ch]);
  return push(std::move(out), {column.id}, [column, c, frames](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    auto gc = g.grad_of(column.id);
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int t = 0; t < frames; ++t) acc += gy[static_cast<std::size_t>(ch) * frames + t];
      gc[ch] += static_cast<float>(acc);
    }
  });
}

Var Graph::concat_rows(Var top, Var bottom) {
  const Tensor& a = value(top);
  const Tensor& b = value(bottom);
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
          "concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  const std::size_t split = a.size();
  return push(std::move(out), {top.id, bottom.id}, [top, bottom, split](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    auto ga = g.grad_of(top.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    auto gb = g.grad_of(bottom.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[split + i];
  });
}

Var Graph::time_mean(Var x) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "time_mean: input must be C x T");
  const int c = xv.dim(0), frames = xv.dim(1);
  Tensor out({c, 1});
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int t = 0; t < frames; ++t) acc += xv.at(ch, t);
    out[ch] = static_cast<float>(acc / frames);
  }
  return push(std::move(out), {x.id}, [x, c, frames](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    auto gx = g.grad_of(x.id);
    const float inv = 1.0f / static_cast<float>(frames);
    for (int ch = 0; ch < c; ++ch)
      for (int t = 0; t < frames; ++t) gx[static_cast<std::size_t>(ch) * frames + t] += gy[ch] * inv;
  });
}

Var Graph::sum(Var x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (float v : xv.data()) acc += v;
  Tensor out({1}, static_cast<float>(acc));
  return push(std::move(out), {x.id}, [x](Graph& g, NodeId self) {
    const float gy = g.out_grad(self)[0];
    for (float& v : g.grad_of(x.id)) v += gy;
  });
}

Var Graph::scale(Var x, float factor) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return push(std::move(out), {x.id}, [x, factor](Graph& g, NodeId self) {
    auto gy = g.out_grad(self);
    auto gx = g.grad_of(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * factor;
  });
}

Var Graph::detach(Var x) {
  Tensor copy = value(x);
  copy.drop_grad();
  return constant(std::move(copy));
}

namespace {

template <typename LossFn>
Tensor scalar_loss(const Tensor& est, const Tensor& ref, LossFn fn) {
  require(est.size() == ref.size(), "loss: estimate " + shape_str(est.shape()) + " vs reference " +
                                        shape_str(ref.shape()));
  return Tensor({1}, static_cast<float>(fn(est.data(), ref.data(), std::span<float>{})));
}

}  // namespace

Var Graph::snr_loss(Var est, const Tensor& ref) {
  Tensor out = scalar_loss(value(est), ref, kernels::snr_loss);
  return push(std::move(out), {est.id}, [est, ref](Graph& g, NodeId self) {
    const float gy = g.out_grad(self)[0];
    std::vector<float> local(ref.size());
    kernels::snr_loss(g.nodes_[est.id].value.data(), ref.data(), local);
    auto ge = g.grad_of(est.id);
    for (std::size_t i = 0; i < ge.size(); ++i) ge[i] += gy * local[i];
  });
}

Var Graph::si_snr_loss(Var est, const Tensor& ref) {
  Tensor out = scalar_loss(value(est), ref, kernels::si_snr_loss);
  return push(std::move(out), {est.id}, [est, ref](Graph& g, NodeId self) {
    const float gy = g.out_grad(self)[0];
    std::vector<float> local(ref.size());
    kernels::si_snr_loss(g.nodes_[est.id].value.data(), ref.data(), local);
    auto ge = g.grad_of(est.id);
    for (std::size_t i = 0; i < ge.size(); ++i) ge[i] += gy * local[i];
  });
}

}  // namespace dense
