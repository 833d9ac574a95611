#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dense/checkpoint.hpp"
#include "dense/loss.hpp"
#include "dense/model.hpp"

namespace dense {

struct Example {
  Waveform mixture;
  Waveform target;
  Waveform enrollment;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> heldout;
};

enum class TrainMode { kBaseline, kDenseAr, kDenseParis };
TrainMode parse_train_mode(const std::string& text);
const char* to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::kBaseline;
  int iterations = 3;
  int epochs_per_iteration = 50;
  int sample_delay = 0;  // 0 keeps the checkpoint's delay
  float lr = 1e-3f;
  int batch_size = 4;
  float snr_weight = 0.9f;
  float sisnr_weight = 0.1f;
  std::pair<float, float> paris_pass_weights{0.5f, 0.5f};
  std::uint64_t seed = 0;
  bool freeze_baseline = true;
  double early_stop_db = 0.1;  // AR: stop when held-out SI-SDRi gains less than this
  int threads = 0;             // 0 = hardware concurrency

  LossWeights loss_weights() const { return {snr_weight, sisnr_weight}; }
};

// Throws std::invalid_argument on a violated invariant.
void validate(const TrainConfig& cfg);

struct TrainRow {
  int iteration = 0;
  int epoch = 0;  // counts across iterations
  double loss = 0.0;
  double si_sdri = 0.0;

  bool operator==(const TrainRow&) const = default;
};

struct TrainRecord {
  std::vector<TrainRow> rows;
  bool operator==(const TrainRecord&) const = default;
};

void write_csv(const TrainRecord& record, std::ostream& os);

struct TrainResult {
  Checkpoint checkpoint;
  TrainRecord record;
};

// Called after every epoch; lets callers log progress.
using EpochCallback = std::function<void(const TrainRow&)>;
// AR only: called with the model at the end of each iteration.
using IterationCallback = std::function<void(int iteration, const Checkpoint&)>;

TrainResult train_baseline(const Dataset& data, const TrainConfig& cfg, Checkpoint init,
                           const EpochCallback& on_epoch = {});
TrainResult train_ar(const Dataset& data, const TrainConfig& cfg, const Checkpoint& baseline,
                     const EpochCallback& on_epoch = {}, const IterationCallback& on_iteration = {});
TrainResult train_paris(const Dataset& data, const TrainConfig& cfg, const Checkpoint& baseline,
                        const EpochCallback& on_epoch = {});
// Dispatches on cfg.mode.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const Checkpoint& init,
                  const EpochCallback& on_epoch = {});

// How the dynamic condition is produced at inference time.
enum class Conditioning {
  kNone,    // static mode
  kSelf,    // the model's own delayed output, streamed frame by frame
  kOracle,  // the delayed ground-truth target
  kZero,
};

Waveform infer(const Checkpoint& ckpt, const Example& ex, Conditioning cond);
// Mean SI-SDR improvement over the mixture.
double mean_si_sdri(const Checkpoint& ckpt, const std::vector<Example>& examples, Conditioning cond,
                    int threads = 0);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace dense
