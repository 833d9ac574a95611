#include "dense/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "dense/metrics.hpp"
#include "dense/optim.hpp"
#include "dense/stream.hpp"

namespace dense {

TrainMode parse_train_mode(const std::string& text) {
  if (text == "baseline") return TrainMode::kBaseline;
  if (text == "dense-ar") return TrainMode::kDenseAr;
  if (text == "dense-paris") return TrainMode::kDenseParis;
  throw std::invalid_argument("unknown training mode '" + text + "' (expected baseline|dense-ar|dense-paris)");
}

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kDenseAr: return "dense-ar";
    case TrainMode::kDenseParis: return "dense-paris";
  }
  return "?";
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (std::fabs(cfg.snr_weight + cfg.sisnr_weight - 1.0f) > 1e-6f) fail("snr_weight + sisnr_weight must be 1");
  if (cfg.snr_weight < 0.0f || cfg.sisnr_weight < 0.0f) fail("loss weights must be non-negative");
  if (cfg.iterations < 1) fail("iterations must be >= 1");
  if (cfg.epochs_per_iteration < 1) fail("epochs_per_iteration must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (!(cfg.lr > 0.0f)) fail("lr must be positive");
  if (cfg.sample_delay < 0) fail("sample_delay must be >= 0 (0 keeps the checkpoint value)");
}

void write_csv(const TrainRecord& record, std::ostream& os) {
  os << "iteration,epoch,loss,si_sdri\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const TrainRow& r : record.rows) os << r.iteration << ',' << r.epoch << ',' << r.loss << ',' << r.si_sdri << '\n';
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

std::shared_ptr<const Checkpoint> borrow(const Checkpoint& ckpt) {
  return std::shared_ptr<const Checkpoint>(std::shared_ptr<void>(), &ckpt);
}

std::span<const float> head(const Waveform& w, std::size_t n) { return std::span<const float>(w).first(std::min(n, w.size())); }

Tensor reference(const Example& ex, const ModelConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.output_length(static_cast<int>(ex.mixture.size())));
  if (ex.target.size() < n) throw std::invalid_argument("train: target shorter than the extractor output");
  return Tensor::row(Waveform(ex.target.begin(), ex.target.begin() + static_cast<std::ptrdiff_t>(n)));
}

void check_dataset(const Dataset& data) {
  if (data.train.empty()) throw std::invalid_argument("train: dataset is empty");
  for (const auto* split : {&data.train, &data.heldout}) {
    for (const Example& ex : *split) {
      if (ex.mixture.size() != ex.target.size()) throw std::invalid_argument("train: mixture/target length mismatch");
      if (ex.enrollment.empty()) throw std::invalid_argument("train: empty enrollment");
    }
  }
}

struct StepResult {
  double loss = 0.0;
  GradientMap grads;
};

// Per-example loss and gradients, evaluated in parallel and reduced in index
// order so results do not depend on scheduling.
using ExampleFn = std::function<StepResult(std::size_t)>;

double run_epoch(Checkpoint& ckpt, Adam& opt, std::size_t count, const TrainConfig& cfg, std::mt19937_64& rng,
                 const ExampleFn& fn) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<StepResult> slots;
  for (std::size_t start = 0; start < count; start += batch) {
    const std::size_t n = std::min(batch, count - start);
    slots.assign(n, StepResult{});
    parallel_for(n, cfg.threads, [&](std::size_t i) { slots[i] = fn(order[start + i]); });
    GradientMap sum;
    for (StepResult& s : slots) {
      total += s.loss;
      for (auto& [name, g] : s.grads) {
        auto it = sum.find(name);
        if (it == sum.end()) {
          sum.emplace(name, std::move(g));
        } else {
          auto dst = it->second.data();
          auto src = g.data();
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      }
    }
    const float inv = 1.0f / static_cast<float>(n);
    for (auto& [name, g] : sum)
      for (float& v : g.data()) v *= inv;
    opt.step(ckpt, sum);
  }
  return total / static_cast<double>(count);
}

Checkpoint prepare_dense(const Checkpoint& baseline, const TrainConfig& cfg) {
  validate(cfg);
  Checkpoint ckpt = baseline;
  if (cfg.sample_delay > 0) ckpt.config.sample_delay = cfg.sample_delay;
  validate(ckpt.config);
  validate(ckpt);
  if (cfg.freeze_baseline) {
    set_trainable_scope(ckpt, Scope::kDynamic);
  } else {
    set_all_trainable(ckpt, true);
  }
  return ckpt;
}

double heldout_score(const Checkpoint& ckpt, const Dataset& data, Conditioning cond, int threads) {
  if (data.heldout.empty()) return std::numeric_limits<double>::quiet_NaN();
  return mean_si_sdri(ckpt, data.heldout, cond, threads);
}

StepResult dynamic_step(const Checkpoint& ckpt, const Example& ex, const Waveform& condition, const LossWeights& w) {
  Graph g;
  Network net(ckpt, true);
  auto out = net.forward(g, g.constant(Tensor::row(ex.mixture)), g.constant(Tensor::row(ex.enrollment)),
                         g.constant(Tensor::row(condition)), Mode::kDynamic);
  Var loss = hybrid_loss(g, out.estimate, reference(ex, ckpt.config), w);
  return {g.value(loss)[0], g.backward(loss)};
}

}  // namespace

Waveform infer(const Checkpoint& ckpt, const Example& ex, Conditioning cond) {
  const int d = ckpt.config.sample_delay;
  switch (cond) {
    case Conditioning::kNone:
      return forward(ex.mixture, ex.enrollment, std::nullopt, Mode::kStatic, ckpt);
    case Conditioning::kSelf:
      return stream_extract(borrow(ckpt), ex.mixture, ex.enrollment, StreamOptions{Mode::kDynamic, ConditionSource::kSelf});
    case Conditioning::kOracle: {
      const Waveform c = make_ar_condition(ex.target, d, ex.mixture.size());
      return forward(ex.mixture, ex.enrollment, std::span<const float>(c), Mode::kDynamic, ckpt);
    }
    case Conditioning::kZero: {
      const Waveform c(ex.mixture.size(), 0.0f);
      return forward(ex.mixture, ex.enrollment, std::span<const float>(c), Mode::kDynamic, ckpt);
    }
  }
  throw std::logic_error("infer: bad conditioning");
}

double mean_si_sdri(const Checkpoint& ckpt, const std::vector<Example>& examples, Conditioning cond, int threads) {
  if (examples.empty()) throw std::invalid_argument("mean_si_sdri: no examples");
  std::vector<double> scores(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const Example& ex = examples[i];
    const Waveform est = infer(ckpt, ex, cond);
    const std::size_t n = std::min(est.size(), ex.target.size());
    scores[i] = metrics::si_sdr(head(est, n), head(ex.target, n)) - metrics::si_sdr(head(ex.mixture, n), head(ex.target, n));
  });
  double total = 0.0;
  for (double s : scores) total += s;
  return total / static_cast<double>(scores.size());
}

TrainResult train_baseline(const Dataset& data, const TrainConfig& cfg_in, Checkpoint ckpt, const EpochCallback& on_epoch) {
  TrainConfig cfg = cfg_in;
  validate(cfg);
  check_dataset(data);
  validate(ckpt);
  set_trainable_scope(ckpt, Scope::kBaseline);
  const LossWeights w = cfg.loss_weights();
  Adam opt(AdamConfig{cfg.lr});
  std::mt19937_64 rng(cfg.seed);
  TrainRecord record;
  for (int e = 1; e <= cfg.epochs_per_iteration; ++e) {
    const double loss = run_epoch(ckpt, opt, data.train.size(), cfg, rng, [&](std::size_t i) {
      const Example& ex = data.train[i];
      Graph g;
      Network net(ckpt, true);
      auto out = net.forward(g, g.constant(Tensor::row(ex.mixture)), g.constant(Tensor::row(ex.enrollment)),
                             std::nullopt, Mode::kStatic);
      Var l = hybrid_loss(g, out.estimate, reference(ex, ckpt.config), w);
      return StepResult{g.value(l)[0], g.backward(l)};
    });
    TrainRow row{1, e, loss, heldout_score(ckpt, data, Conditioning::kNone, cfg.threads)};
    record.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  sync_dynamic_from_baseline(ckpt);
  return {std::move(ckpt), std::move(record)};
}

TrainResult train_ar(const Dataset& data, const TrainConfig& cfg, const Checkpoint& baseline, const EpochCallback& on_epoch,
                     const IterationCallback& on_iteration) {
  check_dataset(data);
  Checkpoint ckpt = prepare_dense(baseline, cfg);
  const int d = ckpt.config.sample_delay;
  const LossWeights w = cfg.loss_weights();
  Adam opt(AdamConfig{cfg.lr});
  std::mt19937_64 rng(cfg.seed);
  TrainRecord record;
  std::vector<Waveform> conditions(data.train.size());
  double previous = -std::numeric_limits<double>::infinity();
  int epoch = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    // Conditions are fixed for the whole iteration: the delayed target first,
    // then the previous iteration's own streamed output.
    parallel_for(data.train.size(), cfg.threads, [&](std::size_t i) {
      const Example& ex = data.train[i];
      const Waveform source = it == 1 ? ex.target : infer(ckpt, ex, Conditioning::kSelf);
      conditions[i] = make_ar_condition(source, d, ex.mixture.size());
    });
    double score = 0.0;
    for (int e = 1; e <= cfg.epochs_per_iteration; ++e) {
      const double loss = run_epoch(ckpt, opt, data.train.size(), cfg, rng, [&](std::size_t i) {
        return dynamic_step(ckpt, data.train[i], conditions[i], w);
      });
      score = heldout_score(ckpt, data, Conditioning::kSelf, cfg.threads);
      TrainRow row{it, ++epoch, loss, score};
      record.rows.push_back(row);
      if (on_epoch) on_epoch(row);
    }
    if (on_iteration) on_iteration(it, ckpt);
    if (it > 1 && !(score - previous >= cfg.early_stop_db)) break;
    previous = score;
  }
  return {std::move(ckpt), std::move(record)};
}

TrainResult train_paris(const Dataset& data, const TrainConfig& cfg, const Checkpoint& baseline,
                        const EpochCallback& on_epoch) {
  check_dataset(data);
  Checkpoint ckpt = prepare_dense(baseline, cfg);
  const int d = ckpt.config.sample_delay;
  const LossWeights w = cfg.loss_weights();
  const auto [w1, w2] = cfg.paris_pass_weights;
  Adam opt(AdamConfig{cfg.lr});
  std::mt19937_64 rng(cfg.seed);
  TrainRecord record;
  for (int e = 1; e <= cfg.epochs_per_iteration; ++e) {
    const double loss = run_epoch(ckpt, opt, data.train.size(), cfg, rng, [&](std::size_t i) {
      const Example& ex = data.train[i];
      const Tensor ref = reference(ex, ckpt.config);
      Graph g;
      Network net(ckpt, true);
      Var mix = g.constant(Tensor::row(ex.mixture));
      Var enr = g.constant(Tensor::row(ex.enrollment));
      auto first = net.forward(g, mix, enr, g.constant(Tensor(Shape{1, static_cast<int>(ex.mixture.size())}, 0.0f)),
                               Mode::kDynamic);
      Var l1 = hybrid_loss(g, first.estimate, ref, w);
      Var total = g.scale(l1, w1);
      if (w2 != 0.0f) {
        const Tensor& est1 = g.value(g.detach(first.estimate));
        const Waveform cond = make_ar_condition(est1.data(), d, ex.mixture.size());
        auto second = net.forward(g, mix, enr, g.constant(Tensor::row(cond)), Mode::kDynamic);
        total = g.add(total, g.scale(hybrid_loss(g, second.estimate, ref, w), w2));
      }
      return StepResult{g.value(total)[0], g.backward(total)};
    });
    TrainRow row{1, e, loss, heldout_score(ckpt, data, Conditioning::kSelf, cfg.threads)};
    record.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return {std::move(ckpt), std::move(record)};
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const Checkpoint& init, const EpochCallback& on_epoch) {
  switch (cfg.mode) {
    case TrainMode::kBaseline: return train_baseline(data, cfg, init, on_epoch);
    case TrainMode::kDenseAr: return train_ar(data, cfg, init, on_epoch);
    case TrainMode::kDenseParis: return train_paris(data, cfg, init, on_epoch);
  }
  throw std::logic_error("train: bad mode");
}

}  // namespace dense
