#include "dense/kernels.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace dense::kernels {

namespace {

void check_conv(const Tensor& x, const Tensor& w, const Conv1dParams& p) {
  require(x.rank() == 2, "conv1d: input must be C x T, got " + shape_str(x.shape()));
  require(w.rank() == 3, "conv1d: weight must be C_out x C_in/g x K, got " + shape_str(w.shape()));
  require(p.stride >= 1 && p.dilation >= 1 && p.groups >= 1, "conv1d: stride, dilation, groups must be >= 1");
  require(p.pad_left >= 0 && p.pad_right >= 0, "conv1d: negative padding");
  require(x.dim(0) % p.groups == 0 && w.dim(0) % p.groups == 0, "conv1d: channels not divisible by groups");
  require(w.dim(1) * p.groups == x.dim(0),
          "conv1d: weight expects " + std::to_string(w.dim(1) * p.groups) + " input channels, got " +
              std::to_string(x.dim(0)));
}

}  // namespace

int conv1d_output_length(int length, int kernel, const Conv1dParams& p) {
  const int k_eff = (kernel - 1) * p.dilation + 1;
  const int padded = length + p.pad_left + p.pad_right;
  if (padded < k_eff) {
    throw ShapeError("conv1d: input length " + std::to_string(length) + " shorter than kernel span " +
                     std::to_string(k_eff));
  }
  return (padded - k_eff) / p.stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv1dParams& p) {
  check_conv(x, w, p);
  const int c_out = w.dim(0), c_in_g = w.dim(1), k = w.dim(2);
  const int len = x.dim(1);
  const int t_out = conv1d_output_length(len, k, p);
  if (bias) require(bias->size() == static_cast<std::size_t>(c_out), "conv1d: bias size mismatch");
  const int out_per_group = c_out / p.groups;

  Tensor out({c_out, t_out});
  for (int o = 0; o < c_out; ++o) {
    float* y = &out.at(o, 0);
    if (bias) std::fill(y, y + t_out, (*bias)[o]);
    const int g = o / out_per_group;
    for (int i = 0; i < c_in_g; ++i) {
      const float* xi = &x.at(g * c_in_g + i, 0);
      for (int kk = 0; kk < k; ++kk) {
        const float wv = w.at(o, i, kk);
        const int offset = kk * p.dilation - p.pad_left;
        // valid t: 0 <= t*stride + offset < len
        int t0 = 0;
        if (offset < 0) t0 = (-offset + p.stride - 1) / p.stride;
        int t1 = t_out;
        if (len - offset <= 0) {
          t1 = 0;
        } else {
          t1 = std::min(t_out, (len - offset - 1) / p.stride + 1);
        }
        if (p.stride == 1) {
          for (int t = t0; t < t1; ++t) y[t] += wv * xi[t + offset];
        } else {
          for (int t = t0; t < t1; ++t) y[t] += wv * xi[t * p.stride + offset];
        }
      }
    }
  }
  return out;
}

void conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, const Conv1dParams& p,
                     std::span<float> grad_x, std::span<float> grad_w, std::span<float> grad_b) {
  const int c_out = w.dim(0), c_in_g = w.dim(1), k = w.dim(2);
  const int len = x.dim(1);
  const int t_out = grad_out.dim(1);
  const int out_per_group = c_out / p.groups;
  for (int o = 0; o < c_out; ++o) {
    const float* gy = &grad_out.at(o, 0);
    if (!grad_b.empty()) {
      double acc = 0.0;
      for (int t = 0; t < t_out; ++t) acc += gy[t];
      grad_b[o] += static_cast<float>(acc);
    }
    const int g = o / out_per_group;
    for (int i = 0; i < c_in_g; ++i) {
      const int ci = g * c_in_g + i;
      const float* xi = &x.at(ci, 0);
      for (int kk = 0; kk < k; ++kk) {
        const int offset = kk * p.dilation - p.pad_left;
        int t0 = offset < 0 ? (-offset + p.stride - 1) / p.stride : 0;
        int t1 = len - offset <= 0 ? 0 : std::min(t_out, (len - offset - 1) / p.stride + 1);
        const std::size_t widx = (static_cast<std::size_t>(o) * c_in_g + i) * k + kk;
        if (!grad_w.empty()) {
          double acc = 0.0;
          for (int t = t0; t < t1; ++t) acc += gy[t] * xi[t * p.stride + offset];
          grad_w[widx] += static_cast<float>(acc);
        }
        if (!grad_x.empty()) {
          const float wv = w[widx];
          float* gx = grad_x.data() + static_cast<std::size_t>(ci) * len;
          for (int t = t0; t < t1; ++t) gx[t * p.stride + offset] += wv * gy[t];
        }
      }
    }
  }
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b, int dilation, int stride) {
  Conv1dParams p;
  p.stride = stride;
  p.dilation = dilation;
  if (stride == 1) p.pad_left = (w.dim(2) - 1) * dilation;
  return conv1d(x, w, &b, p);
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, int stride) {
  require(x.rank() == 2 && w.rank() == 3, "conv_transpose1d: expected C_in x T input and C_in x C_out x K weight");
  require(stride >= 1, "conv_transpose1d: stride must be >= 1");
  require(w.dim(0) == x.dim(0), "conv_transpose1d: weight expects " + std::to_string(w.dim(0)) +
                                    " input channels, got " + std::to_string(x.dim(0)));
  const int c_in = x.dim(0), frames = x.dim(1), c_out = w.dim(1), k = w.dim(2);
  const int len = (frames - 1) * stride + k;
  Tensor out({c_out, len});
  std::vector<float> frame(static_cast<std::size_t>(c_out) * k);
  for (int t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0f);
    for (int i = 0; i < c_in; ++i) {
      const float xv = x.at(i, t);
      const float* wi = &w.at(i, 0, 0);
      for (std::size_t j = 0; j < frame.size(); ++j) frame[j] += xv * wi[j];
    }
    for (int o = 0; o < c_out; ++o) {
      float* y = &out.at(o, t * stride);
      const float* f = frame.data() + static_cast<std::size_t>(o) * k;
      for (int kk = 0; kk < k; ++kk) y[kk] += f[kk];
    }
  }
  return out;
}

void conv_transpose1d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, int stride,
                               std::span<float> grad_x, std::span<float> grad_w) {
  const int c_in = x.dim(0), frames = x.dim(1), c_out = w.dim(1), k = w.dim(2);
  for (int i = 0; i < c_in; ++i) {
    for (int t = 0; t < frames; ++t) {
      const float xv = x.at(i, t);
      double gx = 0.0;
      for (int o = 0; o < c_out; ++o) {
        const float* gy = &grad_out.at(o, t * stride);
        const std::size_t base = (static_cast<std::size_t>(i) * c_out + o) * k;
        for (int kk = 0; kk < k; ++kk) {
          gx += w[base + kk] * gy[kk];
          if (!grad_w.empty()) grad_w[base + kk] += xv * gy[kk];
        }
      }
      if (!grad_x.empty()) grad_x[static_cast<std::size_t>(i) * frames + t] += static_cast<float>(gx);
    }
  }
}

Tensor cumulative_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps,
                             ClnStats* stats) {
  require(x.rank() == 2, "cumulative_layer_norm: input must be C x T");
  const int c = x.dim(0), frames = x.dim(1);
  require(gain.size() == static_cast<std::size_t>(c) && bias.size() == static_cast<std::size_t>(c),
          "cumulative_layer_norm: gain/bias must have " + std::to_string(c) + " entries");
  Tensor out({c, frames});
  if (stats) {
    stats->mean.resize(frames);
    stats->rstd.resize(frames);
  }
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < frames; ++t) {
    for (int ch = 0; ch < c; ++ch) {
      const double v = x.at(ch, t);
      sum += v;
      sum_sq += v * v;
    }
    const double count = static_cast<double>(c) * (t + 1);
    const double mean = sum / count;
    const double var = std::max(0.0, sum_sq / count - mean * mean);
    const float mu = static_cast<float>(mean);
    const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
    for (int ch = 0; ch < c; ++ch) out.at(ch, t) = gain[ch] * ((x.at(ch, t) - mu) * r) + bias[ch];
    if (stats) {
      stats->mean[t] = mu;
      stats->rstd[t] = r;
    }
  }
  return out;
}

void cumulative_layer_norm_backward(const Tensor& x, const Tensor& gain, const ClnStats& stats,
                                    const Tensor& grad_out, std::span<float> grad_x,
                                    std::span<float> grad_gain, std::span<float> grad_bias) {
  const int c = x.dim(0), frames = x.dim(1);
  // Per-frame adjoints of the running sums S1_t and S2_t.
  std::vector<double> d_s1(frames), d_s2(frames);
  for (int t = 0; t < frames; ++t) {
    const double mu = stats.mean[t], r = stats.rstd[t];
    double g_hat_sum = 0.0, g_hat_xc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double gh = static_cast<double>(grad_out.at(ch, t)) * gain[ch];
      g_hat_sum += gh;
      g_hat_xc += gh * (x.at(ch, t) - mu);
      if (!grad_gain.empty()) grad_gain[ch] += static_cast<float>(grad_out.at(ch, t) * (x.at(ch, t) - mu) * r);
      if (!grad_bias.empty()) grad_bias[ch] += grad_out.at(ch, t);
    }
    const double count = static_cast<double>(c) * (t + 1);
    const double d_var = g_hat_xc * (-0.5 * r * r * r);
    const double d_mean = -r * g_hat_sum + d_var * (-2.0 * mu);
    d_s1[t] = d_mean / count;
    d_s2[t] = d_var / count;
  }
  if (grad_x.empty()) return;
  double acc1 = 0.0, acc2 = 0.0;
  for (int t = frames - 1; t >= 0; --t) {
    acc1 += d_s1[t];
    acc2 += d_s2[t];
    const double r = stats.rstd[t];
    for (int ch = 0; ch < c; ++ch) {
      const double xv = x.at(ch, t);
      const double direct = static_cast<double>(grad_out.at(ch, t)) * gain[ch] * r;
      grad_x[static_cast<std::size_t>(ch) * frames + t] += static_cast<float>(direct + acc1 + 2.0 * xv * acc2);
    }
  }
}

Tensor pointwise(const Tensor& x, Activation kind, const Tensor* alpha) {
  Tensor out(x.shape());
  switch (kind) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
      break;
    case Activation::kPrelu: {
      require(alpha != nullptr, "prelu: missing alpha");
      const int rows = x.rank() == 1 ? 1 : x.dim(0);
      const std::size_t cols = x.size() / rows;
      require(alpha->size() == 1 || alpha->size() == static_cast<std::size_t>(rows),
              "prelu: alpha must have 1 or " + std::to_string(rows) + " entries");
      for (int r = 0; r < rows; ++r) {
        const float a = alpha->size() == 1 ? (*alpha)[0] : (*alpha)[r];
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = prelu(x[r * cols + j], a);
      }
      break;
    }
  }
  return out;
}

namespace {

constexpr double kDbPerNeper = 10.0 / std::numbers::ln10;

void check_pair(std::span<const float> est, std::span<const float> ref) {
  if (est.size() != ref.size() || est.empty()) {
    throw ShapeError("loss: estimate has " + std::to_string(est.size()) + " samples, reference " +
                     std::to_string(ref.size()));
  }
}

}  // namespace

double snr_loss(std::span<const float> est, std::span<const float> ref, std::span<float> grad_est) {
  check_pair(est, ref);
  double power = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    power += static_cast<double>(ref[i]) * ref[i];
    const double d = static_cast<double>(ref[i]) - est[i];
    noise += d * d;
  }
  if (power == 0.0) throw std::domain_error("snr: reference signal is all zeros");
  const double snr = kDbPerNeper * std::log(power / (noise + kLossEps));
  const double loss = -snr;
  if (!grad_est.empty()) {
    if (std::fabs(snr) >= kLossClampDb) {
      std::fill(grad_est.begin(), grad_est.end(), 0.0f);
    } else {
      const double scale = -2.0 * kDbPerNeper / (noise + kLossEps);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        grad_est[i] = static_cast<float>(scale * (static_cast<double>(ref[i]) - est[i]));
      }
    }
  }
  return std::clamp(loss, -kLossClampDb, kLossClampDb);
}

double si_snr_loss(std::span<const float> est, std::span<const float> ref, std::span<float> grad_est) {
  check_pair(est, ref);
  const std::size_t n = ref.size();
  double mean_est = 0.0, mean_ref = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_est += est[i];
    mean_ref += ref[i];
  }
  mean_est /= static_cast<double>(n);
  mean_ref /= static_cast<double>(n);
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = est[i] - mean_est, r = ref[i] - mean_ref;
    dot += e * r;
    ref_energy += r * r;
  }
  if (ref_energy == 0.0) throw std::domain_error("si-snr: reference signal is constant");
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, err_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ref[i] - mean_ref;
    const double s = alpha * r;
    const double e = (est[i] - mean_est) - s;
    target_energy += s * s;
    err_energy += e * e;
  }
  const double si_snr = kDbPerNeper * std::log((target_energy + kLossEps) / (err_energy + kLossEps));
  if (!grad_est.empty()) {
    if (std::fabs(si_snr) >= kLossClampDb) {
      std::fill(grad_est.begin(), grad_est.end(), 0.0f);
    } else {
      std::vector<double> g(n);
      double g_mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = ref[i] - mean_ref;
        const double s = alpha * r;
        const double e = (est[i] - mean_est) - s;
        // d(-si_snr)/d(est_centered)
        g[i] = -kDbPerNeper * (2.0 * s / (target_energy + kLossEps) - 2.0 * e / (err_energy + kLossEps));
        g_mean += g[i];
      }
      g_mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) grad_est[i] = static_cast<float>(g[i] - g_mean);
    }
  }
  return std::clamp(-si_snr, -kLossClampDb, kLossClampDb);
}

}  // namespace dense::kernels
