#pragma once

#include <cstdint>
#include <limits>
#include <span>

#include "dense/model.hpp"

namespace dense {

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct MixtureGains {
  double interferer = 0.0;
  double noise = 0.0;
};

struct Mixture {
  Waveform mixture;
  Waveform target;      // cropped, unscaled
  Waveform interferer;  // cropped and scaled
  Waveform noise;       // cropped and scaled
  MixtureGains gains;
};

// target + g_i * interferer + g_n * noise with the target fixed. Inputs are
// cropped to the shortest. An empty noise with finite snr_db draws white
// Gaussian noise from seed; snr_db = +inf adds no noise.
Mixture synthesize_mixture(std::span<const float> target, std::span<const float> interferer,
                           std::span<const float> noise, double sir_db, double snr_db, std::uint64_t seed);

// 10 log10 of the power ratio, in double.
double power_ratio_db(std::span<const float> a, std::span<const float> b);

}  // namespace dense
