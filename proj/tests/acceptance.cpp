// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "dense/checkpoint_io.hpp"
#include "dense/metrics.hpp"
#include "dense/stream.hpp"
#include "dense/toy_data.hpp"
#include "dense/train.hpp"
#include "support.hpp"

using namespace dense;
using dense::testing::delay_signal;
using dense::testing::jittered_checkpoint;
using dense::testing::random_signal;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %d (%s): %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

float max_abs(const Waveform& a, const Waveform& b) {
  if (a.size() != b.size()) return INFINITY;
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Waveform push_chunks(StreamEngine& engine, std::span<const float> x, const std::vector<std::size_t>& sizes) {
  Waveform out;
  std::size_t pos = 0, i = 0;
  while (pos < x.size()) {
    const std::size_t n = std::min(sizes[i++ % sizes.size()], x.size() - pos);
    engine.push(x.subspan(pos, n), out);
    pos += n;
  }
  const Waveform tail = engine.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

void criterion_1() {
  const auto t0 = Clock::now();
  const testing::FdResult ops = testing::op_gradient_suite(7, 12);

  std::mt19937 rng(101);
  double end_to_end = 0.0;
  std::size_t kinked = 0, entries = 0;
  for (std::uint64_t seed : {31u, 32u}) {
    const Checkpoint ckpt = jittered_checkpoint(testing::fd_config(), seed);
    const auto y = random_signal(200, rng), c = random_signal(200, rng), s = random_signal(200, rng);
    const auto cond = delay_signal(s, 200, ckpt.config.sample_delay);
    for (Mode mode : {Mode::kStatic, Mode::kDynamic}) {
      std::optional<std::span<const float>> cs;
      if (mode == Mode::kDynamic) cs = std::span<const float>(cond);
      const auto r = testing::check_model_gradients(ckpt, y, c, s, cs, mode, 1e-3f, 0.02);
      end_to_end = std::max(end_to_end, r.global_rel_error);
      kinked += r.kinked;
      entries += r.entries;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = ops.worst_rel_error <= 1e-3 && end_to_end <= 1e-2 && kinked * 3 < entries && secs < 60.0;
  report(1, "gradient suite", pass,
         fmt("per-op worst %.2e (%s, limit 1e-3); end-to-end worst %.2e (limit 1e-2, %zu/%zu kink-straddling entries "
             "skipped); %.1f s",
             ops.worst_rel_error, ops.worst_name.c_str(), end_to_end, kinked, entries, secs));
}

void criterion_2() {
  std::mt19937 rng(202);
  float worst_static = 0.0f, worst_dynamic = 0.0f;
  int runs = 0;
  for (int u = 0; u < 20; ++u) {
    auto ckpt = std::make_shared<const Checkpoint>(jittered_checkpoint(micro_config(), 500 + static_cast<std::uint64_t>(u)));
    const std::size_t len = std::uniform_int_distribution<std::size_t>(4000, 16000)(rng);
    const auto x = random_signal(len, rng), c = random_signal(4000, rng);
    const Waveform offline_static = forward(x, c, std::nullopt, Mode::kStatic, *ckpt);
    const Waveform offline_dynamic = testing::self_feedback_offline(x, c, *ckpt);
    for (int k = 0; k < 5; ++k) {
      std::vector<std::size_t> sizes(std::uniform_int_distribution<std::size_t>(1, 6)(rng));
      for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(1, 700)(rng);
      StreamEngine st(ckpt, c, StreamOptions{Mode::kStatic});
      StreamEngine dy(ckpt, c, StreamOptions{Mode::kDynamic});
      worst_static = std::max(worst_static, max_abs(push_chunks(st, x, sizes), offline_static));
      worst_dynamic = std::max(worst_dynamic, max_abs(push_chunks(dy, x, sizes), offline_dynamic));
      ++runs;
    }
  }
  report(2, "streaming equivalence", worst_static <= 1e-5f && worst_dynamic <= 1e-4f,
         fmt("%d runs (20 utterances x 5 chunkings); max-abs static %.2e (limit 1e-5), dynamic self-feedback %.2e "
             "(limit 1e-4)",
             runs, worst_static, worst_dynamic));
}

void criterion_3() {
  std::mt19937 rng(303);
  const int delays[] = {16, 17, 24, 32, 45, 64, 100, 128};
  std::uint64_t violations = 0, reads = 0;
  std::int64_t min_age = INT64_MAX;
  int trials = 0;
  for (; trials < 1000; ++trials) {
    ModelConfig cfg = micro_config();
    cfg.sample_delay = delays[trials % 8];
    auto ckpt = std::make_shared<const Checkpoint>(jittered_checkpoint(cfg, 900 + static_cast<std::uint64_t>(trials)));
    const std::size_t len = std::uniform_int_distribution<std::size_t>(64, 600)(rng);
    const auto x = random_signal(len, rng), c = random_signal(200, rng);
    const Mode mode = trials % 4 == 0 ? Mode::kStatic : Mode::kDynamic;
    const std::size_t chunk = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    StreamEngine base_engine(ckpt, c, StreamOptions{mode});
    const Waveform base = push_chunks(base_engine, x, {chunk});
    const ConditionAudit& audit = base_engine.state().audit;
    violations += audit.violations;
    reads += audit.reads;
    if (audit.reads) min_age = std::min(min_age, audit.min_age);
    if (audit.reads && audit.min_age < cfg.sample_delay) ++violations;

    const int n = std::uniform_int_distribution<int>(0, static_cast<int>(len) - 1)(rng);
    auto p = x;
    p[static_cast<std::size_t>(n)] += 0.5f;
    StreamEngine pert_engine(ckpt, c, StreamOptions{mode});
    const Waveform out = push_chunks(pert_engine, p, {chunk});
    // outputs of frames that end before n must not move
    const int frames_done = n < cfg.kernel ? 0 : (n - cfg.kernel) / cfg.stride + 1;
    for (int i = 0; i < frames_done * cfg.stride; ++i) {
      if (out[static_cast<std::size_t>(i)] != base[static_cast<std::size_t>(i)]) {
        ++violations;
        break;
      }
    }
  }
  report(3, "causality", violations == 0,
         fmt("%d randomized trials, %llu condition reads, youngest read %lld samples old, %llu violations", trials,
             static_cast<unsigned long long>(reads), static_cast<long long>(min_age),
             static_cast<unsigned long long>(violations)));
}

void criterion_4() {
  std::mt19937 rng(404);
  int identical = 0;
  for (int i = 0; i < 10; ++i) {
    Checkpoint ckpt = jittered_checkpoint(ModelConfig{}, 40 + static_cast<std::uint64_t>(i));
    sync_dynamic_from_baseline(ckpt);
    zero_mask_learning(ckpt);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(2000, 8000)(rng);
    const auto x = random_signal(len, rng), c = random_signal(4000, rng), s = random_signal(len, rng);
    const auto cond = delay_signal(s, len, ckpt.config.sample_delay);
    const Waveform st = forward(x, c, std::nullopt, Mode::kStatic, ckpt);
    const Waveform dy = forward(x, c, std::span<const float>(cond), Mode::kDynamic, ckpt);
    auto shared = std::make_shared<const Checkpoint>(ckpt);
    const Waveform streamed = stream_extract(shared, x, c, StreamOptions{Mode::kDynamic}, 160);
    if (st == dy && streamed == st) ++identical;
  }
  report(4, "residual identity", identical == 10,
         fmt("%d/10 inputs bit-identical (offline dynamic and streamed self-feedback vs static)", identical));
}

void criterion_5() {
  std::mt19937 rng(505);
  double drift = 0.0, sdri_mix = 0.0;
  bool sdri_exact = true;
  double stoi_self_err = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto ref = random_signal(8000, rng), noise = random_signal(8000, rng, 0.2f);
    std::vector<float> est(ref.size()), mix(ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      est[k] = ref[k] + noise[k];
      mix[k] = ref[k] + 2.0f * noise[k];
    }
    const double base = metrics::si_sdr(est, ref);
    for (float a : {0.01f, 0.5f, 3.0f, 100.0f}) {
      std::vector<float> scaled = est;
      for (float& v : scaled) v *= a;
      drift = std::max(drift, std::fabs(metrics::si_sdr(scaled, ref) - base));
    }
    const auto r = metrics::evaluate(mix, ref, mix, 8000);
    sdri_exact = sdri_exact && r.sdri_db == 0.0 && r.si_sdri_db == 0.0;
    sdri_mix = std::max({sdri_mix, std::fabs(r.sdri_db), std::fabs(r.si_sdri_db)});
    for (int fs : {8000, 10000, 16000}) stoi_self_err = std::max(stoi_self_err, std::fabs(metrics::stoi(ref, ref, fs) - 1.0));
  }
  const std::vector<float> r3{1, 0, -1}, e3{1, 1, -2};
  const double hand = metrics::si_sdr(e3, r3);
  const bool pass = drift <= 1e-6 && sdri_exact && std::fabs(hand - 4.771) <= 1e-3 && stoi_self_err <= 1e-6;
  report(5, "metric identities", pass,
         fmt("SI-SDR scale drift %.2e dB; SDRi/SI-SDRi(mix) max |.| %.1e; si_sdr hand example %.4f dB; "
             "|stoi(x,x) - 1| %.1e",
             drift, sdri_mix, hand, stoi_self_err));
}

// Shared by criteria 6 and 7.
struct ToyRun {
  Checkpoint baseline;
  Checkpoint ar;
  Checkpoint paris;
};

std::optional<ToyRun> criterion_6() {
  const auto t0 = Clock::now();
  const ToyDataConfig data_cfg;
  const Dataset data = make_toy_dataset(data_cfg);

  TrainConfig base_cfg;
  base_cfg.mode = TrainMode::kBaseline;
  base_cfg.epochs_per_iteration = 40;
  base_cfg.lr = 1e-3f;
  base_cfg.batch_size = 4;
  base_cfg.seed = 1;
  const TrainResult base = train(data, base_cfg, init_checkpoint(micro_config(), 1));
  const double l1 = base.record.rows.front().loss, lf = base.record.rows.back().loss;
  const bool a = (l1 - lf) >= 0.5 * std::fabs(l1);

  TrainConfig ar_cfg = base_cfg;
  ar_cfg.mode = TrainMode::kDenseAr;
  ar_cfg.iterations = 2;
  ar_cfg.epochs_per_iteration = 10;
  double oracle1 = 0.0, self1 = 0.0, self2 = 0.0;
  const TrainResult ar = train_ar(data, ar_cfg, base.checkpoint, {}, [&](int it, const Checkpoint& ckpt) {
    if (it == 1) {
      oracle1 = mean_si_sdri(ckpt, data.heldout, Conditioning::kOracle);
      self1 = mean_si_sdri(ckpt, data.heldout, Conditioning::kSelf);
    } else if (it == 2) {
      self2 = mean_si_sdri(ckpt, data.heldout, Conditioning::kSelf);
    }
  });
  const bool b = oracle1 >= self1;
  const bool c = self2 >= self1 - 0.5;

  TrainConfig paris_cfg = base_cfg;
  paris_cfg.mode = TrainMode::kDenseParis;
  paris_cfg.epochs_per_iteration = 2;
  const TrainResult paris = train(data, paris_cfg, base.checkpoint);

  const double baseline_sisdri = base.record.rows.back().si_sdri;
  const double secs = seconds_since(t0);
  report(6, "toy training direction", a && b && c && secs < 1800.0,
         fmt("(a) hybrid loss %.3f -> %.3f over %d epochs, cut %.0f%% [%s]; (b) iteration-1 held-out SI-SDRi oracle "
             "%.3f dB vs self %.3f dB [%s]; (c) iteration-2 self %.3f dB vs iteration-1 self %.3f - 0.5 [%s]; "
             "static baseline %.3f dB; %d train / %d held-out mixtures; %.0f s",
             l1, lf, base_cfg.epochs_per_iteration, 100.0 * (l1 - lf) / std::fabs(l1), a ? "ok" : "no", oracle1,
             self1, b ? "ok" : "no", self2, self1, c ? "ok" : "no", baseline_sisdri, data_cfg.num_train,
             data_cfg.num_heldout, secs));
  return ToyRun{base.checkpoint, ar.checkpoint, paris.checkpoint};
}

void criterion_7(const ToyRun& run) {
  std::size_t compared = 0, differing = 0, dynamic_changed = 0;
  for (const Checkpoint* after : {&run.ar, &run.paris}) {
    for (const auto& [name, entry] : run.baseline.entries) {
      const Tensor& t = after->tensor(name);
      const bool same = t.size() == entry.tensor.size() &&
                        std::memcmp(t.data().data(), entry.tensor.data().data(), t.size() * sizeof(float)) == 0;
      if (scope_of(name) == Scope::kBaseline) {
        ++compared;
        if (!same) ++differing;
      } else if (!same) {
        ++dynamic_changed;
      }
    }
  }
  report(7, "freeze contract", differing == 0 && dynamic_changed > 0,
         fmt("dense-ar and dense-paris: %zu baseline-scope tensors compared byte-wise, %zu differ; %zu dynamic-scope "
             "tensors updated",
             compared, differing, dynamic_changed));
}

void criterion_8() {
  auto ckpt = std::make_shared<const Checkpoint>(init_checkpoint(ModelConfig{}, 8));
  const LatencyReport r = measure(ckpt, 10.0, Mode::kDynamic);
  const LatencyReport rs = measure(ckpt, 10.0, Mode::kStatic);
  const bool pass = r.hop_latency_ms == 1.0 && r.window_latency_ms == 2.0 && r.rtf < 1.0 && rs.rtf < 1.0;
  report(8, "latency/performance", pass,
         fmt("default config: hop %.3f ms, window %.3f ms; streaming RTF %.4f dynamic, %.4f static (single thread, "
             "10 s of audio)",
             r.hop_latency_ms, r.window_latency_ms, r.rtf, rs.rtf));
}

void criterion_9() {
  std::mt19937 rng(909);
  Checkpoint ckpt;
  ckpt.config = micro_config();
  std::uniform_int_distribution<int> dim(1, 9), rank(1, 3);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int i = 0; i < 100; ++i) {
    Shape shape(static_cast<std::size_t>(rank(rng)));
    for (int& d : shape) d = dim(rng);
    Tensor t(shape);
    // arbitrary bit patterns, NaN payloads and denormals included
    for (float& v : t.data()) v = std::bit_cast<float>(bits(rng));
    ckpt.entries["t" + std::to_string(i) + "/" + std::to_string(bits(rng))] = TensorEntry{std::move(t), (i % 3) != 0};
  }
  const auto bytes = encode_checkpoint(ckpt);
  const Checkpoint back = decode_checkpoint(bytes, {false});
  bool exact = back.entries.size() == 100 && back.config == ckpt.config;
  for (const auto& [name, entry] : ckpt.entries) {
    auto it = back.entries.find(name);
    exact = exact && it != back.entries.end() && it->second.trainable == entry.trainable &&
            bit_equal(entry.tensor, it->second.tensor);
  }
  exact = exact && encode_checkpoint(back) == bytes;

  const auto valid = encode_checkpoint(init_checkpoint(micro_config(), 9));
  const std::size_t cfg_len = valid[8] | valid[9] << 8 | valid[10] << 16 | static_cast<std::size_t>(valid[11]) << 24;
  const std::size_t first = 12 + cfg_len + 4;
  const std::size_t dtype_at = first + 2 + (valid[first] | valid[first + 1] << 8);
  auto kind_of = [&](std::vector<std::uint8_t> b) -> std::optional<CheckpointErrorKind> {
    try {
      decode_checkpoint(b);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  auto flip = [&](std::size_t at, std::uint8_t v) {
    auto b = valid;
    b[at] = v;
    return b;
  };
  Checkpoint reshaped = init_checkpoint(micro_config(), 9);
  reshaped.tensor("decoder.w") = Tensor(Shape{3}, 0.0f);
  const std::vector<std::pair<const char*, std::optional<CheckpointErrorKind>>> cases{
      {"magic", kind_of(flip(1, 'X'))},
      {"version", kind_of(flip(4, 7))},
      {"truncation", kind_of(std::vector<std::uint8_t>(valid.begin(), valid.end() - 5))},
      {"dtype", kind_of(flip(dtype_at, 2))},
      {"shape", kind_of(encode_checkpoint(reshaped))},
  };
  std::set<CheckpointErrorKind> kinds;
  std::string names;
  for (const auto& [what, kind] : cases) {
    if (kind) kinds.insert(*kind);
    names += std::string(names.empty() ? "" : ", ") + what + "=" + (kind ? to_string(*kind) : "accepted");
  }
  report(9, "checkpoint codec", exact && kinds.size() == 5,
         fmt("100-tensor random checkpoint round trip %s (%zu bytes); corruptions: %s", exact ? "bit-exact" : "MISMATCH",
             bytes.size(), names.c_str()));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  auto guard = [](int id, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, "exception", false, e.what());
    }
  };
  guard(1, criterion_1);
  guard(2, criterion_2);
  guard(3, criterion_3);
  guard(4, criterion_4);
  guard(5, criterion_5);
  std::optional<ToyRun> toy;
  guard(6, [&] { toy = criterion_6(); });
  if (toy) {
    guard(7, [&] { criterion_7(*toy); });
  } else {
    report(7, "freeze contract", false, "no dense-mode run to inspect");
  }
  guard(8, criterion_8);
  guard(9, criterion_9);
  std::printf("%d of 9 criteria passed in %.0f s\n", 9 - failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
