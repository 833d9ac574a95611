#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "dense/metrics.hpp"

namespace dense::metrics {

namespace {

constexpr int kFs = 10000;
constexpr int kFrame = 256;
constexpr int kHop = kFrame / 2;
constexpr int kFft = 512;
constexpr int kBins = kFft / 2 + 1;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr int kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = DBL_EPSILON;

using Band = std::pair<int, int>;  // [low, high) bins

std::vector<double> hann() {
  // MATLAB-style hanning(256): the symmetric 258-point window without its zero ends.
  std::vector<double> w(kFrame);
  for (int n = 0; n < kFrame; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (n + 1) / (kFrame + 1));
  return w;
}

std::vector<Band> third_octave_bands() {
  std::vector<double> f(kBins);
  for (int i = 0; i < kBins; ++i) f[i] = static_cast<double>(kFs) * i / kFft;
  auto nearest = [&](double target) {
    int best = 0;
    for (int i = 1; i < kBins; ++i)
      if ((f[i] - target) * (f[i] - target) < (f[best] - target) * (f[best] - target)) best = i;
    return best;
  };
  std::vector<Band> bands;
  for (int k = 0; k < kBands; ++k) {
    const double lo = kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0);
    const double hi = kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0);
    bands.emplace_back(nearest(lo), nearest(hi));
  }
  return bands;
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

std::size_t frame_count(std::size_t len) {
  // frames start at 0, hop, ... while start < len - frame
  return len > static_cast<std::size_t>(kFrame) ? (len - kFrame - 1) / kHop + 1 : 0;
}

// Drops frames of the clean signal more than 40 dB below its loudest frame and
// rebuilds both signals by overlap-add of the remaining windowed frames.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t frames = frame_count(x.size());
  std::vector<double> energy(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int n = 0; n < kFrame; ++n) {
      const double v = w[n] * x[f * kHop + n];
      acc += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(acc) + kEps);
  }
  const double peak = frames ? *std::max_element(energy.begin(), energy.end()) : 0.0;
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f)
    if (peak - kDynRange - energy[f] < 0.0) keep.push_back(f);
  if (keep.empty()) throw std::invalid_argument("stoi: signal too short or silent");
  const std::size_t out_len = (keep.size() - 1) * kHop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const std::size_t src = keep[i] * kHop, dst = i * kHop;
    for (int n = 0; n < kFrame; ++n) {
      xs[dst + n] += w[n] * x[src + n];
      ys[dst + n] += w[n] * y[src + n];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

class Fft {
 public:
  Fft() {
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(kFft);
    out_ = fftw_alloc_complex(kBins);
    plan_ = fftw_plan_dft_r2c_1d(kFft, in_, out_, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  // Band magnitudes sqrt(sum |X_k|^2) of one windowed frame.
  void band_levels(const double* frame, const std::vector<double>& w, const std::vector<Band>& bands, double* out) {
    for (int n = 0; n < kFrame; ++n) in_[n] = w[n] * frame[n];
    std::fill(in_ + kFrame, in_ + kFft, 0.0);
    fftw_execute(plan_);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      double acc = 0.0;
      for (int k = bands[b].first; k < bands[b].second; ++k) acc += out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
      out[b] = std::sqrt(acc);
    }
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

double stoi(std::span<const float> est, std::span<const float> ref, int fs) {
  if (est.size() != ref.size()) throw std::invalid_argument("stoi: est and ref lengths differ");
  if (fs != 8000 && fs != 10000 && fs != 16000) {
    throw std::invalid_argument("stoi: unsupported sample rate " + std::to_string(fs));
  }
  std::vector<double> x = to_double(ref), y = to_double(est);
  if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) {
    throw std::invalid_argument("stoi: reference is silent");
  }
  if (fs != kFs) {
    x = resample(x, kFs, fs);
    y = resample(y, kFs, fs);
  }
  const std::vector<double> w = hann();
  remove_silent_frames(x, y, w);

  const std::size_t frames = frame_count(x.size());
  if (frames < static_cast<std::size_t>(kSegment)) {
    throw std::invalid_argument("stoi: signal too short (" + std::to_string(frames) + " frames after silence removal, need " +
                                std::to_string(kSegment) + ")");
  }
  static const std::vector<Band> bands = third_octave_bands();
  Fft fft;
  // band-major levels: [band][frame]
  std::vector<double> xt(kBands * frames), yt(kBands * frames), col(kBands);
  for (std::size_t f = 0; f < frames; ++f) {
    fft.band_levels(&x[f * kHop], w, bands, col.data());
    for (int b = 0; b < kBands; ++b) xt[b * frames + f] = col[b];
    fft.band_levels(&y[f * kHop], w, bands, col.data());
    for (int b = 0; b < kBands; ++b) yt[b * frames + f] = col[b];
  }

  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::size_t segments = 0;
  std::array<double, kSegment> xs{}, ys{};
  for (std::size_t m = kSegment; m <= frames; ++m, ++segments) {
    for (int b = 0; b < kBands; ++b) {
      const double* xr = &xt[b * frames + m - kSegment];
      const double* yr = &yt[b * frames + m - kSegment];
      double nx = 0.0, ny = 0.0;
      for (int n = 0; n < kSegment; ++n) {
        nx += xr[n] * xr[n];
        ny += yr[n] * yr[n];
      }
      const double scale = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (int n = 0; n < kSegment; ++n) {
        xs[n] = xr[n];
        ys[n] = std::min(yr[n] * scale, xr[n] * (1.0 + clip));
        mx += xs[n];
        my += ys[n];
      }
      mx /= kSegment;
      my /= kSegment;
      double sx = 0.0, sy = 0.0;
      for (int n = 0; n < kSegment; ++n) {
        xs[n] -= mx;
        ys[n] -= my;
        sx += xs[n] * xs[n];
        sy += ys[n] * ys[n];
      }
      const double dx = std::sqrt(sx) + kEps, dy = std::sqrt(sy) + kEps;
      double corr = 0.0;
      for (int n = 0; n < kSegment; ++n) corr += (xs[n] / dx) * (ys[n] / dy);
      total += corr;
    }
  }
  return total / static_cast<double>(segments * kBands);
}

}  // namespace dense::metrics
