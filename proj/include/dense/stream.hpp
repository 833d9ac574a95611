#pragma once

#include <climits>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "dense/checkpoint.hpp"
#include "dense/model.hpp"

namespace dense {

class StreamError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ConditionSource {
  kSelf,      // the engine's own emitted output (inference-time feedback)
  kExternal,  // caller supplies a reference stream alongside the mixture
};

struct StreamOptions {
  Mode mode = Mode::kDynamic;
  ConditionSource condition = ConditionSource::kSelf;
};

// History of the last (K_layer - 1) * dilation input columns of one depthwise
// causal convolution, stored as a circular buffer of columns.
struct ConvCache {
  int channels = 0;
  int span = 0;  // (K - 1) * dilation
  int head = 0;  // slot of the most recent column
  std::vector<float> columns;  // (span + 1) x channels

  bool operator==(const ConvCache&) const = default;
};

struct ClnRunningStats {
  std::uint64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  bool operator==(const ClnRunningStats&) const = default;
};

// Zero-initialised delay line over the conditioning source, indexed by
// absolute sample position.
struct DelayRing {
  std::vector<float> samples;
  std::int64_t written = 0;

  bool operator==(const DelayRing&) const = default;
};

struct ConditionAudit {
  std::uint64_t reads = 0;
  std::uint64_t violations = 0;
  std::int64_t min_age = INT64_MAX;  // smallest (newest consumed sample - read index)

  bool operator==(const ConditionAudit&) const = default;
};

struct StreamState {
  std::vector<ConvCache> conv_caches;
  std::vector<ClnRunningStats> cln_stats;
  DelayRing delay_ring;
  std::vector<float> ola_buffer;     // K pending decoder sums, starting at the next unemitted sample
  std::vector<float> static_embed;   // N
  std::vector<float> adapt_static;   // static embedding projected to the adaptation width
  std::int64_t frames_processed = 0;

  std::vector<float> input_frame;    // K staged mixture samples
  int input_fill = 0;
  std::int64_t samples_consumed = 0;
  std::int64_t samples_emitted = 0;
  bool flushed = false;
  ConditionAudit audit;

  bool operator==(const StreamState&) const = default;
};

struct LatencyReport {
  double hop_latency_ms = 0.0;
  double window_latency_ms = 0.0;
  double rtf = 0.0;
};

// Frame-synchronous causal extractor. Each complete K-sample frame produces S
// finalized output samples; the K - S sample tail stays in the overlap-add
// buffer until a later frame (or flush) completes it.
class StreamEngine {
 public:
  StreamEngine(std::shared_ptr<const Checkpoint> ckpt, std::span<const float> enrollment,
               StreamOptions options = {});
  StreamEngine(const StreamEngine&) = delete;
  StreamEngine& operator=(const StreamEngine&) = delete;
  StreamEngine(StreamEngine&&) noexcept;
  StreamEngine& operator=(StreamEngine&&) noexcept;
  ~StreamEngine();

  // Emitted samples are appended to out.
  void push(std::span<const float> samples, std::vector<float>& out);
  // External-condition variant: condition holds the raw (unshifted) reference
  // samples aligned with the mixture samples; the engine applies the delay.
  void push(std::span<const float> samples, std::span<const float> condition, std::vector<float>& out);
  std::vector<float> push(std::span<const float> samples);
  std::vector<float> flush();

  const StreamState& state() const { return state_; }
  const StreamOptions& options() const { return options_; }
  const ModelConfig& config() const { return ckpt_->config; }

 private:
  struct Scratch;
  struct Weights;

  void push_sample(float sample, const float* condition);
  void process_frame();
  void run_block(std::size_t block, std::size_t cln_slot, std::span<float> x);
  float read_condition(std::int64_t index);
  void emit(std::vector<float>& out);

  std::shared_ptr<const Checkpoint> ckpt_;
  std::shared_ptr<const Weights> weights_;
  std::unique_ptr<Scratch> scratch_;
  StreamOptions options_;
  StreamState state_;
  std::vector<float>* out_ = nullptr;
};

// Whole-signal convenience wrapper: pushes the mixture in chunks of the given
// size (0 = all at once) and flushes.
Waveform stream_extract(std::shared_ptr<const Checkpoint> ckpt, std::span<const float> mixture,
                        std::span<const float> enrollment, StreamOptions options = {}, std::size_t chunk = 0,
                        std::span<const float> external_condition = {});

// Runs synthetic audio through the engine in hop-sized chunks.
LatencyReport measure(std::shared_ptr<const Checkpoint> ckpt, double duration_s, Mode mode = Mode::kDynamic);

}  // namespace dense
