#include <algorithm>
#include <cmath>

#include "dense/metrics.hpp"

namespace dense::metrics {

namespace {

void check_lengths(std::span<const float> est, std::span<const float> ref, const char* what) {
  if (est.size() != ref.size() || ref.empty()) {
    throw std::invalid_argument(std::string(what) + ": est and ref must be non-empty and of equal length");
  }
}

double ratio_db(double signal, double noise) {
  if (noise == 0.0) return kClampDb;
  if (signal == 0.0) return -kClampDb;
  return std::clamp(10.0 * std::log10(signal / noise), -kClampDb, kClampDb);
}

}  // namespace

double sdr(std::span<const float> est, std::span<const float> ref) {
  check_lengths(est, ref, "sdr");
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double r = ref[i];
    const double e = r - est[i];
    s += r * r;
    n += e * e;
  }
  if (s == 0.0) throw std::invalid_argument("sdr: reference is all zeros");
  return ratio_db(s, n);
}

double si_sdr(std::span<const float> est, std::span<const float> ref) {
  check_lengths(est, ref, "si_sdr");
  const std::size_t n = ref.size();
  double mean_e = 0.0, mean_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_e += est[i];
    mean_r += ref[i];
  }
  mean_e /= static_cast<double>(n);
  mean_r /= static_cast<double>(n);
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ref[i] - mean_r;
    dot += (est[i] - mean_e) * r;
    rr += r * r;
  }
  if (rr == 0.0) throw std::invalid_argument("si_sdr: reference is constant");
  const double alpha = dot / rr;
  double ss = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = alpha * (ref[i] - mean_r);
    const double err = (est[i] - mean_e) - target;
    ss += target * target;
    ee += err * err;
  }
  return ratio_db(ss, ee);
}

}  // namespace dense::metrics
