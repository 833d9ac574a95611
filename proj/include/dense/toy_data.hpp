#pragma once

#include <cstdint>

#include "dense/train.hpp"

namespace dense {

// Synthetic two-source task. Each "speaker" is noise band-limited to its own
// passband, amplitude-modulated at a speaker-specific rate, so the enrollment
// identifies which band to keep.
struct ToyDataConfig {
  int sample_rate = 8000;
  int num_speakers = 4;
  int num_train = 200;
  int num_heldout = 24;
  int length = 4000;             // samples per mixture
  int enrollment_length = 4000;  // samples per enrollment
  double sir_min_db = -3.0;
  double sir_max_db = 3.0;
  double noise_snr_db = 30.0;
  std::uint64_t seed = 1;
};

struct ToySpeaker {
  double low_hz = 0.0;
  double high_hz = 0.0;
  double modulation_hz = 0.0;
};

std::vector<ToySpeaker> toy_speakers(const ToyDataConfig& cfg);
// One utterance of a speaker with unit RMS.
Waveform toy_utterance(const ToySpeaker& speaker, int length, int sample_rate, std::uint64_t seed);
Dataset make_toy_dataset(const ToyDataConfig& cfg);

}  // namespace dense
