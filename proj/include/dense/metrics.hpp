#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace dense::metrics {

inline constexpr double kClampDb = 60.0;

// Plain SNR-style SDR in dB, clamped to +-60. No distortion filter.
double sdr(std::span<const float> est, std::span<const float> ref);
// Scale-invariant SDR on zero-meaned signals, clamped to +-60.
double si_sdr(std::span<const float> est, std::span<const float> ref);

// Rational resampling by up/down with an Octave-style Kaiser anti-aliasing
// filter. Output length is ceil(len * up / down).
std::vector<double> resample(std::span<const double> x, int up, int down);

// Short-time objective intelligibility of est against the clean ref.
// fs must be 8000, 10000 or 16000.
double stoi(std::span<const float> est, std::span<const float> ref, int fs);

struct EvalResult {
  double sdr_db = 0.0;
  double sdri_db = 0.0;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
  double stoi = 0.0;
};

// Signals are trimmed to the shortest length.
EvalResult evaluate(std::span<const float> est, std::span<const float> ref, std::span<const float> mix, int fs);

struct Aggregate {
  std::size_t count = 0;
  EvalResult mean;
  EvalResult median;
};
Aggregate aggregate(const std::vector<EvalResult>& results);

void to_json(nlohmann::json& j, const EvalResult& r);
void to_json(nlohmann::json& j, const Aggregate& a);

}  // namespace dense::metrics
