#pragma once

// Forward and adjoint kernels shared by the autodiff graph. Every function is
// pure: inputs are read-only, results are freshly allocated.

#include <cmath>
#include <optional>
#include <vector>

#include "dense/tensor.hpp"

namespace dense::kernels {

struct Conv1dParams {
  int stride = 1;
  int dilation = 1;
  int pad_left = 0;
  int pad_right = 0;
  int groups = 1;
};

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
inline float prelu(float x, float alpha) { return x > 0.0f ? x : alpha * x; }

int conv1d_output_length(int length, int kernel, const Conv1dParams& p);

// x: C_in x T, w: C_out x (C_in/groups) x K, bias: C_out (optional).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv1dParams& p);
void conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                     const Conv1dParams& p, std::span<float> grad_x, std::span<float> grad_w,
                     std::span<float> grad_b);

// Causal convolution with the left padding convention of TCN layers when
// stride == 1 and no padding otherwise (encoder front-end).
Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b, int dilation, int stride);

// x: C_in x T, w: C_in x C_out x K -> C_out x ((T-1)*stride + K).
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, int stride);
void conv_transpose1d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out,
                               int stride, std::span<float> grad_x, std::span<float> grad_w);

struct ClnStats {
  std::vector<float> mean;  // per frame
  std::vector<float> rstd;  // per frame, 1/sqrt(var + eps)
};

// Cumulative layer norm over channels and frames 0..t.
Tensor cumulative_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                             float eps, ClnStats* stats = nullptr);
void cumulative_layer_norm_backward(const Tensor& x, const Tensor& gain, const ClnStats& stats,
                                    const Tensor& grad_out, std::span<float> grad_x,
                                    std::span<float> grad_gain, std::span<float> grad_bias);

enum class Activation { kRelu, kPrelu, kSigmoid };

// alpha is only read for kPrelu; it holds one value or one per row of x.
Tensor pointwise(const Tensor& x, Activation kind, const Tensor* alpha = nullptr);

// -SNR and -SI-SNR in dB, clamped to [-kLossClampDb, kLossClampDb]. The
// gradient with respect to est is written when grad_est is non-empty; it is
// zero when the clamp is active.
inline constexpr double kLossClampDb = 60.0;
inline constexpr double kLossEps = 1e-8;

double snr_loss(std::span<const float> est, std::span<const float> ref,
                std::span<float> grad_est = {});
double si_snr_loss(std::span<const float> est, std::span<const float> ref,
                   std::span<float> grad_est = {});

}  // namespace dense::kernels
