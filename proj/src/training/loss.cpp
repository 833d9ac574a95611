#include "dense/loss.hpp"

#include <stdexcept>

namespace dense {

double snr_loss(std::span<const float> est, std::span<const float> ref) { return kernels::snr_loss(est, ref); }

double si_snr_loss(std::span<const float> est, std::span<const float> ref) {
  return kernels::si_snr_loss(est, ref);
}

double hybrid_loss(std::span<const float> est, std::span<const float> ref, const LossWeights& w) {
  double total = 0.0;
  if (w.snr != 0.0f) total += w.snr * snr_loss(est, ref);
  if (w.sisnr != 0.0f) total += w.sisnr * si_snr_loss(est, ref);
  return total;
}

Var hybrid_loss(Graph& g, Var est, const Tensor& ref, const LossWeights& w) {
  if (w.sisnr == 0.0f) return g.scale(g.snr_loss(est, ref), w.snr);
  if (w.snr == 0.0f) return g.scale(g.si_snr_loss(est, ref), w.sisnr);
  return g.add(g.scale(g.snr_loss(est, ref), w.snr), g.scale(g.si_snr_loss(est, ref), w.sisnr));
}

Waveform make_ar_condition(std::span<const float> source, int delay) {
  return make_ar_condition(source, delay, source.size());
}

Waveform make_ar_condition(std::span<const float> source, int delay, std::size_t length) {
  if (delay < 1) throw std::invalid_argument("make_ar_condition: delay must be at least 1");
  Waveform out(length, 0.0f);
  const auto d = static_cast<std::size_t>(delay);
  for (std::size_t n = d; n < length && n - d < source.size(); ++n) out[n] = source[n - d];
  return out;
}

}  // namespace dense
