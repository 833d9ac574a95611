#pragma once

#include <span>

#include "dense/graph.hpp"
#include "dense/model.hpp"

namespace dense {

// Negative SNR / SI-SNR in dB, clamped to +-60.
double snr_loss(std::span<const float> est, std::span<const float> ref);
double si_snr_loss(std::span<const float> est, std::span<const float> ref);

struct LossWeights {
  float snr = 0.9f;
  float sisnr = 0.1f;
};

double hybrid_loss(std::span<const float> est, std::span<const float> ref, const LossWeights& w);
Var hybrid_loss(Graph& g, Var est, const Tensor& ref, const LossWeights& w);

// out[n] = source[n - delay] for n >= delay, zero before; same length as source.
Waveform make_ar_condition(std::span<const float> source, int delay);
// Same shift, padded or cut to the requested length.
Waveform make_ar_condition(std::span<const float> source, int delay, std::size_t length);

}  // namespace dense
