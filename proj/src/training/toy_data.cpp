#include "dense/toy_data.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dense {

namespace {

constexpr int kTaps = 65;

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x); }

std::vector<double> bandpass(double low, double high, int fs) {
  const double f1 = low / fs, f2 = high / fs;
  const int mid = kTaps / 2;
  std::vector<double> h(kTaps);
  for (int n = 0; n < kTaps; ++n) {
    const double m = n - mid;
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (kTaps - 1));
    h[n] = window * (2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m));
  }
  return h;
}

double rms(const Waveform& x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace

std::vector<ToySpeaker> toy_speakers(const ToyDataConfig& cfg) {
  if (cfg.num_speakers < 2) throw std::invalid_argument("toy data: need at least two speakers");
  const double lo = 200.0, hi = std::min(3600.0, 0.45 * cfg.sample_rate);
  const double width = (hi - lo) / cfg.num_speakers;
  std::vector<ToySpeaker> out;
  for (int s = 0; s < cfg.num_speakers; ++s) {
    const double start = lo + s * width;
    out.push_back({start + 0.15 * width, start + 0.85 * width, 2.0 + 1.5 * s});
  }
  return out;
}

Waveform toy_utterance(const ToySpeaker& speaker, int length, int sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const auto h = bandpass(speaker.low_hz, speaker.high_hz, sample_rate);
  std::vector<double> white(static_cast<std::size_t>(length + kTaps - 1));
  for (double& v : white) v = gauss(rng);
  const double phi = phase(rng);
  Waveform out(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) {
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) acc += h[k] * white[static_cast<std::size_t>(n + kTaps - 1 - k)];
    const double t = static_cast<double>(n) / sample_rate;
    const double envelope = 0.55 + 0.45 * std::sin(2.0 * std::numbers::pi * speaker.modulation_hz * t + phi);
    out[static_cast<std::size_t>(n)] = static_cast<float>(acc * envelope);
  }
  const double r = rms(out);
  for (float& v : out) v = static_cast<float>(v / r);
  return out;
}

Dataset make_toy_dataset(const ToyDataConfig& cfg) {
  if (cfg.length <= 0 || cfg.enrollment_length <= 0) throw std::invalid_argument("toy data: lengths must be positive");
  const auto speakers = toy_speakers(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, cfg.num_speakers - 1);
  std::uniform_real_distribution<double> sir(cfg.sir_min_db, cfg.sir_max_db);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double target_rms = 0.1;

  auto make = [&]() {
    const int target = pick(rng);
    int other = pick(rng);
    while (other == target) other = pick(rng);
    Example ex;
    ex.target = toy_utterance(speakers[target], cfg.length, cfg.sample_rate, rng());
    const Waveform interferer = toy_utterance(speakers[other], cfg.length, cfg.sample_rate, rng());
    ex.enrollment = toy_utterance(speakers[target], cfg.enrollment_length, cfg.sample_rate, rng());
    const double interf_gain = target_rms * std::pow(10.0, -sir(rng) / 20.0);
    const double noise_gain = target_rms * std::pow(10.0, -cfg.noise_snr_db / 20.0);
    ex.mixture.resize(ex.target.size());
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      ex.target[i] = static_cast<float>(ex.target[i] * target_rms);
      ex.mixture[i] = static_cast<float>(ex.target[i] + interf_gain * interferer[i] + noise_gain * gauss(rng));
    }
    for (float& v : ex.enrollment) v = static_cast<float>(v * target_rms);
    return ex;
  };
  Dataset d;
  for (int i = 0; i < cfg.num_train; ++i) d.train.push_back(make());
  for (int i = 0; i < cfg.num_heldout; ++i) d.heldout.push_back(make());
  return d;
}

}  // namespace dense
