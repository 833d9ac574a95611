#include <cmath>
#include <numbers>
#include <numeric>

#include "dense/metrics.hpp"

namespace dense::metrics {

namespace {

// Kaiser-windowed sinc lowpass, 60 dB rejection, as designed by Octave's resample.
std::vector<double> design_filter(int p, int q) {
  const double stop = 1.0 / (2.0 * std::max(p, q));
  const double roll_off = stop / 10.0;
  const double rejection_db = 60.0;
  const int half = static_cast<int>(std::ceil((rejection_db - 8.0) / (28.714 * roll_off)));
  const double beta = 0.1102 * (rejection_db - 8.7);
  const int len = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(len));
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  for (int i = 0; i < len; ++i) {
    const double t = i - half;
    const double arg = 2.0 * stop * t;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = 2.0 * i / (len - 1) - 1.0;
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(i)] = window * 2.0 * p * stop * sinc;
  }
  const double total = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v = v / total * p;
  return h;
}

}  // namespace

std::vector<double> resample(std::span<const double> x, int up, int down) {
  if (up <= 0 || down <= 0) throw std::invalid_argument("resample: factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return {x.begin(), x.end()};
  const std::vector<double> h = design_filter(up, down);
  const auto half = static_cast<std::int64_t>((h.size() - 1) / 2);
  const auto n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  const auto taps = static_cast<std::int64_t>(h.size());
  std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t center = j * down + half;
    // h index center - n*up must lie in [0, taps)
    std::int64_t n_lo = center - taps + 1 <= 0 ? 0 : (center - taps + 1 + up - 1) / up;
    std::int64_t n_hi = std::min(n_in - 1, center / up);
    double acc = 0.0;
    for (std::int64_t n = n_lo; n <= n_hi; ++n) acc += x[static_cast<std::size_t>(n)] * h[static_cast<std::size_t>(center - n * up)];
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

}  // namespace dense::metrics
