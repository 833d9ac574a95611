#include "dense/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dense {

namespace {

double power(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return acc / static_cast<double>(x.size());
}

void require_power(double p, const char* what) {
  if (!(p > 0.0)) throw std::invalid_argument(std::string("synthesize_mixture: ") + what + " has zero power");
}

}  // namespace

double power_ratio_db(std::span<const float> a, std::span<const float> b) {
  return 10.0 * std::log10(power(a) / power(b));
}

Mixture synthesize_mixture(std::span<const float> target, std::span<const float> interferer,
                           std::span<const float> noise, double sir_db, double snr_db, std::uint64_t seed) {
  if (std::isnan(sir_db) || std::isinf(sir_db)) throw std::invalid_argument("synthesize_mixture: sir_db must be finite");
  if (std::isnan(snr_db) || snr_db == -kNoNoise) throw std::invalid_argument("synthesize_mixture: bad snr_db");
  const bool with_noise = snr_db != kNoNoise;
  std::size_t n = std::min(target.size(), interferer.size());
  if (with_noise && !noise.empty()) n = std::min(n, noise.size());
  if (n == 0) throw std::invalid_argument("synthesize_mixture: empty input");

  Mixture m;
  m.target.assign(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(n));
  m.interferer.assign(interferer.begin(), interferer.begin() + static_cast<std::ptrdiff_t>(n));
  if (!with_noise) {
    m.noise.assign(n, 0.0f);
  } else if (!noise.empty()) {
    m.noise.assign(noise.begin(), noise.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    m.noise.resize(n);
    for (float& v : m.noise) v = static_cast<float>(gauss(rng));
  }

  const double pt = power(m.target), pi = power(m.interferer);
  require_power(pt, "target");
  require_power(pi, "interferer");
  m.gains.interferer = std::sqrt(pt / (pi * std::pow(10.0, sir_db / 10.0)));
  if (with_noise) {
    const double pn = power(m.noise);
    require_power(pn, "noise");
    m.gains.noise = std::sqrt(pt / (pn * std::pow(10.0, snr_db / 10.0)));
  }
  m.mixture.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.interferer[i] = static_cast<float>(m.gains.interferer * m.interferer[i]);
    m.noise[i] = static_cast<float>(m.gains.noise * m.noise[i]);
    m.mixture[i] = m.target[i] + m.interferer[i] + m.noise[i];
  }
  return m;
}

}  // namespace dense
