#include <chrono>
#include <random>

#include "dense/stream.hpp"

namespace dense {

LatencyReport measure(std::shared_ptr<const Checkpoint> ckpt, double duration_s, Mode mode) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("measure: duration must be positive");
  const ModelConfig& cfg = ckpt->config;
  LatencyReport report;
  report.hop_latency_ms = 1000.0 * cfg.stride / cfg.sample_rate;
  report.window_latency_ms = 1000.0 * cfg.kernel / cfg.sample_rate;

  const auto total = static_cast<std::size_t>(duration_s * cfg.sample_rate);
  std::mt19937 rng(1234);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  std::vector<float> audio(std::max<std::size_t>(total, cfg.kernel));
  for (float& v : audio) v = noise(rng);
  std::vector<float> enrollment(static_cast<std::size_t>(cfg.sample_rate));
  for (float& v : enrollment) v = noise(rng);

  StreamOptions opts;
  opts.mode = mode;
  StreamEngine engine(std::move(ckpt), enrollment, opts);
  std::vector<float> out;
  out.reserve(audio.size());
  const std::span<const float> view(audio);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t pos = 0; pos < audio.size(); pos += cfg.stride) {
    engine.push(view.subspan(pos, std::min<std::size_t>(cfg.stride, audio.size() - pos)), out);
  }
  engine.flush();
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double audio_s = static_cast<double>(audio.size()) / cfg.sample_rate;
  // Clock granularity can report zero for very short runs.
  report.rtf = std::max(elapsed, 1e-9) / audio_s;
  return report;
}

}  // namespace dense
