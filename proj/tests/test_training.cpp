#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "dense/loss.hpp"
#include "dense/optim.hpp"
#include "dense/toy_data.hpp"
#include "dense/train.hpp"
#include "support.hpp"

using namespace dense;
using dense::testing::check_model_gradients;
using dense::testing::delay_signal;
using dense::testing::fd_config;
using dense::testing::jittered_checkpoint;
using dense::testing::random_signal;

namespace {

const std::vector<float> kRef{1.0f, 0.0f, -1.0f};
const std::vector<float> kEst{1.0f, 1.0f, -2.0f};

// PReLU slopes of exactly 1 make every PReLU linear in its input, so central
// differences never straddle a kink. The slope gradients are still exercised.
Checkpoint smooth_fd_checkpoint(std::uint64_t seed) {
  Checkpoint ckpt = jittered_checkpoint(fd_config(), seed);
  for (auto& [name, entry] : ckpt.entries)
    if (name.ends_with("prelu1") || name.ends_with("prelu2") || name.ends_with(".alpha"))
      for (float& v : entry.tensor.data()) v = 1.0f;
  return ckpt;
}

Example random_example(std::mt19937& rng, std::size_t len) {
  Example ex;
  ex.target = random_signal(len, rng, 0.3f);
  ex.mixture = ex.target;
  const auto other = random_signal(len, rng, 0.3f);
  for (std::size_t i = 0; i < len; ++i) ex.mixture[i] += other[i];
  ex.enrollment = random_signal(len, rng, 0.3f);
  return ex;
}

Dataset tiny_dataset(std::uint64_t seed, std::size_t train = 4, std::size_t heldout = 2, std::size_t len = 400) {
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  Dataset d;
  for (std::size_t i = 0; i < train; ++i) d.train.push_back(random_example(rng, len));
  for (std::size_t i = 0; i < heldout; ++i) d.heldout.push_back(random_example(rng, len));
  return d;
}

TrainConfig quick_config(TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.iterations = 2;
  cfg.epochs_per_iteration = 2;
  cfg.batch_size = 2;
  cfg.seed = 11;
  cfg.threads = 1;
  cfg.early_stop_db = -std::numeric_limits<double>::infinity();
  return cfg;
}

std::set<std::string> changed_tensors(const Checkpoint& before, const Checkpoint& after) {
  std::set<std::string> out;
  for (const auto& [name, entry] : before.entries)
    if (entry.tensor.values() != after.tensor(name).values()) out.insert(name);
  return out;
}

std::set<std::string> dynamic_scope(const Checkpoint& ckpt) {
  std::set<std::string> out;
  for (const auto& [name, entry] : ckpt.entries)
    if (scope_of(name) == Scope::kDynamic) out.insert(name);
  return out;
}

}  // namespace

TEST_CASE("snr_loss") {
  CHECK(snr_loss(kEst, kRef) == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  CHECK(snr_loss(kRef, kRef) == -60.0);
  const std::vector<float> twice{2.0f, 0.0f, -2.0f};
  CHECK(snr_loss(twice, kRef) == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  CHECK_THROWS_AS(snr_loss(kEst, std::vector<float>(3, 0.0f)), std::domain_error);
  CHECK_THROWS_AS(snr_loss(std::vector<float>(2, 0.0f), kRef), ShapeError);
}

TEST_CASE("si_snr_loss") {
  CHECK(si_snr_loss(kEst, kRef) == doctest::Approx(-10.0 * std::log10(3.0)).epsilon(1e-6));
  CHECK(si_snr_loss(kEst, kRef) == doctest::Approx(-4.771).epsilon(1e-3 / 4.771));
  for (float a : {0.1f, 3.0f}) {
    std::vector<float> scaled = kEst;
    for (float& v : scaled) v *= a;
    CHECK(si_snr_loss(scaled, kRef) == doctest::Approx(si_snr_loss(kEst, kRef)).epsilon(1e-6));
  }
  CHECK(si_snr_loss(kRef, kRef) == -60.0);
  CHECK_THROWS_AS(si_snr_loss(kEst, std::vector<float>(3, 0.25f)), std::domain_error);
}

TEST_CASE("hybrid_loss") {
  CHECK(hybrid_loss(kEst, kRef, LossWeights{}) == doctest::Approx(-0.47712).epsilon(1e-4));
  CHECK(hybrid_loss(kEst, kRef, {1.0f, 0.0f}) == snr_loss(kEst, kRef));
  CHECK(hybrid_loss(kEst, kRef, {0.0f, 1.0f}) == si_snr_loss(kEst, kRef));

  std::mt19937 rng(1);
  const auto est = random_signal(300, rng), ref = random_signal(300, rng);
  Graph g;
  Var l = hybrid_loss(g, g.constant(Tensor::row(est)), Tensor::row(ref), LossWeights{});
  CHECK(g.value(l)[0] == doctest::Approx(hybrid_loss(est, ref, LossWeights{})).epsilon(1e-5));
}

TEST_CASE("make_ar_condition") {
  const std::vector<float> src{1.0f, 2.0f, 3.0f, 4.0f};
  CHECK(make_ar_condition(src, 2) == Waveform{0.0f, 0.0f, 1.0f, 2.0f});
  CHECK(make_ar_condition(src, 4) == Waveform(4, 0.0f));
  CHECK(make_ar_condition(src, 9) == Waveform(4, 0.0f));
  CHECK(make_ar_condition(src, 1, 6) == Waveform{0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 0.0f});
  CHECK(make_ar_condition(src, 1, 2) == Waveform{0.0f, 1.0f});
  CHECK_THROWS_AS(make_ar_condition(src, 0), std::invalid_argument);
  ModelConfig cfg;
  cfg.sample_delay = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("adam") {
  ModelConfig cfg = micro_config();
  Checkpoint ckpt = init_checkpoint(cfg, 1);
  set_all_trainable(ckpt, true);

  SUBCASE("zero gradient leaves parameters unchanged") {
    const Checkpoint before = ckpt;
    Adam opt;
    GradientMap g{{"sep.bottleneck.b", Tensor(ckpt.tensor("sep.bottleneck.b").shape(), 0.0f)}};
    opt.step(ckpt, g);
    CHECK(ckpt.tensor("sep.bottleneck.b").values() == before.tensor("sep.bottleneck.b").values());
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    const Tensor before = ckpt.tensor("sep.bottleneck.b");
    Tensor grad(before.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (i % 2 ? -1.0f : 1.0f) * (0.01f + 3.0f * static_cast<float>(i));
    Adam opt(AdamConfig{0.01f});
    opt.step(ckpt, {{"sep.bottleneck.b", grad}});
    CHECK(opt.steps() == 1);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double moved = ckpt.tensor("sep.bottleneck.b")[i] - before[i];
      CHECK(moved == doctest::Approx(grad[i] > 0 ? -0.01 : 0.01).epsilon(1e-4));
    }
  }
  SUBCASE("errors leave the checkpoint untouched") {
    const Checkpoint before = ckpt;
    Adam opt;
    ckpt.entries.at("encoder.w").trainable = false;
    GradientMap g{{"sep.bottleneck.b", Tensor(ckpt.tensor("sep.bottleneck.b").shape(), 1.0f)},
                  {"encoder.w", Tensor(ckpt.tensor("encoder.w").shape(), 1.0f)}};
    CHECK_THROWS_AS(opt.step(ckpt, g), std::invalid_argument);
    CHECK(ckpt.tensor("sep.bottleneck.b").values() == before.tensor("sep.bottleneck.b").values());
    CHECK_THROWS_AS(opt.step(ckpt, {{"nope", Tensor(Shape{1}, 1.0f)}}), std::invalid_argument);
    CHECK_THROWS_AS(opt.step(ckpt, {{"sep.bottleneck.b", Tensor(Shape{1}, 1.0f)}}), std::invalid_argument);
    CHECK(opt.steps() == 0);
  }
}

TEST_CASE("whole-graph gradients match finite differences") {
  std::mt19937 rng(21);
  for (std::uint64_t seed : {31u, 32u}) {
    const Checkpoint real = jittered_checkpoint(fd_config(), seed);
    const Checkpoint smooth = smooth_fd_checkpoint(seed);
    const auto y = random_signal(200, rng), c = random_signal(200, rng), s = random_signal(200, rng);
    const auto cond = delay_signal(s, 200, real.config.sample_delay);
    for (const Checkpoint* ckpt : {&real, &smooth}) {
      const auto st = check_model_gradients(*ckpt, y, c, s, std::nullopt, Mode::kStatic, 1e-3f, 0.02);
      INFO("static worst " << st.worst_rel_error << " at " << st.worst_name << ", global " << st.global_rel_error
                           << ", kinked " << st.kinked << "/" << st.entries);
      CHECK(st.global_rel_error <= 1e-2);
      CHECK(st.kinked * 3 < st.entries);

      const auto dy = check_model_gradients(*ckpt, y, c, s, std::span<const float>(cond), Mode::kDynamic, 1e-3f, 0.02);
      INFO("dynamic worst " << dy.worst_rel_error << " at " << dy.worst_name << ", global " << dy.global_rel_error
                            << ", kinked " << dy.kinked << "/" << dy.entries);
      CHECK(dy.global_rel_error <= 1e-2);
      CHECK(dy.kinked * 3 < dy.entries);
      CHECK(dy.tensors > st.tensors);
    }
  }
}

TEST_CASE("paris detach isolates the first pass") {
  // est1 = a * x; est2 = b * est1 + delay(est1); total = w1 L1(est1) + w2 L2(est2).
  const int d = 3;
  std::mt19937 rng(41);
  const auto x = random_signal(64, rng), ref = random_signal(64, rng);
  const Tensor ref_t = Tensor::row(ref);
  const float w1 = 0.5f, w2 = 0.5f;
  Tensor delta(Shape{1, 1, d + 1}, 0.0f);
  delta[0] = 1.0f;
  const kernels::Conv1dParams delay_params{1, 1, d, 0, 1};

  auto build = [&](Graph& g, Var a, Var b, bool detach) {
    Var est1 = g.mul(g.constant(Tensor::row(x)), g.repeat_columns(a, 64));
    Var src = detach ? g.detach(est1) : est1;
    Var shifted = g.conv1d(src, g.constant(delta), g.constant(Tensor(Shape{1}, 0.0f)), delay_params);
    Var est2 = g.add(g.mul(src, g.repeat_columns(b, 64)), shifted);
    return g.add(g.scale(g.snr_loss(est1, ref_t), w1), g.scale(g.snr_loss(est2, ref_t), w2));
  };
  auto grads = [&](bool detach) {
    Graph g;
    Var a = g.parameter("a", Tensor(Shape{1, 1}, 0.7f), true);
    Var b = g.parameter("b", Tensor(Shape{1, 1}, -0.4f), true);
    return g.backward(build(g, a, b, detach));
  };
  // FD oracle for the detached objective: est1 enters pass 2 at its unperturbed value.
  auto loss_at = [&](float a, float b, std::optional<float> a_pass2) {
    Graph g;
    Var av = g.constant(Tensor(Shape{1, 1}, a)), bv = g.constant(Tensor(Shape{1, 1}, b));
    Var est1 = g.mul(g.constant(Tensor::row(x)), g.repeat_columns(av, 64));
    Var src = est1;
    if (a_pass2) src = g.mul(g.constant(Tensor::row(x)), g.repeat_columns(g.constant(Tensor(Shape{1, 1}, *a_pass2)), 64));
    Var shifted = g.conv1d(src, g.constant(delta), g.constant(Tensor(Shape{1}, 0.0f)), delay_params);
    Var est2 = g.add(g.mul(src, g.repeat_columns(bv, 64)), shifted);
    return static_cast<double>(g.value(g.add(g.scale(g.snr_loss(est1, ref_t), w1),
                                             g.scale(g.snr_loss(est2, ref_t), w2)))[0]);
  };
  const float h = 1e-3f;
  const double fd_a_detached = (loss_at(0.7f + h, -0.4f, 0.7f) - loss_at(0.7f - h, -0.4f, 0.7f)) / (2 * h);
  const double fd_a_full = (loss_at(0.7f + h, -0.4f, std::nullopt) - loss_at(0.7f - h, -0.4f, std::nullopt)) / (2 * h);
  const double fd_b = (loss_at(0.7f, -0.4f + h, 0.7f) - loss_at(0.7f, -0.4f - h, 0.7f)) / (2 * h);

  const GradientMap det = grads(true), full = grads(false);
  CHECK(det.at("a")[0] == doctest::Approx(fd_a_detached).epsilon(1e-3));
  CHECK(full.at("a")[0] == doctest::Approx(fd_a_full).epsilon(1e-3));
  CHECK(std::fabs(fd_a_full - fd_a_detached) > 1e-2);
  CHECK(det.at("b")[0] == doctest::Approx(fd_b).epsilon(1e-3));
  CHECK(det.at("b")[0] == doctest::Approx(full.at("b")[0]).epsilon(1e-6));
}

TEST_CASE("freeze contract in dense modes") {
  const Dataset data = tiny_dataset(1);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 5);
  for (TrainMode mode : {TrainMode::kDenseAr, TrainMode::kDenseParis}) {
    CAPTURE(to_string(mode));
    const TrainResult r = train(data, quick_config(mode), baseline);
    CHECK(changed_tensors(baseline, r.checkpoint) == dynamic_scope(baseline));
    for (const auto& [name, entry] : r.checkpoint.entries) CHECK(entry.trainable == (scope_of(name) == Scope::kDynamic));
  }
  TrainConfig open = quick_config(TrainMode::kDenseAr);
  open.freeze_baseline = false;
  const TrainResult r = train(data, open, baseline);
  CHECK(changed_tensors(baseline, r.checkpoint).size() > dynamic_scope(baseline).size());
}

TEST_CASE("baseline training touches only the baseline scope") {
  const Dataset data = tiny_dataset(2);
  Checkpoint init = jittered_checkpoint(micro_config(), 6);
  TrainConfig cfg = quick_config(TrainMode::kBaseline);
  const TrainResult r = train(data, cfg, init);
  REQUIRE(r.record.rows.size() == 2);
  for (const std::string& name : changed_tensors(init, r.checkpoint))
    CHECK((scope_of(name) == Scope::kBaseline || name == "dyn.adapt.proj.w"));
  if (r.checkpoint.contains("dyn.adapt.proj.w"))
    CHECK(r.checkpoint.tensor("dyn.adapt.proj.w").values() == r.checkpoint.tensor("sep.adapt.proj.w").values());
}

TEST_CASE("one AR iteration is plain teacher forcing") {
  Dataset data = tiny_dataset(3, 1, 1);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 7);
  TrainConfig cfg = quick_config(TrainMode::kDenseAr);
  cfg.iterations = 1;
  cfg.epochs_per_iteration = 3;
  cfg.batch_size = 1;
  const TrainResult r = train(data, cfg, baseline);

  Checkpoint ckpt = baseline;
  set_trainable_scope(ckpt, Scope::kDynamic);
  Adam opt(AdamConfig{cfg.lr});
  const Example& ex = data.train[0];
  const Waveform cond = make_ar_condition(ex.target, ckpt.config.sample_delay);
  const int out_len = ckpt.config.output_length(static_cast<int>(ex.mixture.size()));
  const Tensor ref = Tensor::row(Waveform(ex.target.begin(), ex.target.begin() + out_len));
  for (int e = 0; e < 3; ++e) {
    Graph g;
    Network net(ckpt, true);
    auto out = net.forward(g, g.constant(Tensor::row(ex.mixture)), g.constant(Tensor::row(ex.enrollment)),
                           g.constant(Tensor::row(cond)), Mode::kDynamic);
    const Var loss = hybrid_loss(g, out.estimate, ref, cfg.loss_weights());
    CHECK(r.record.rows[static_cast<std::size_t>(e)].loss == doctest::Approx(g.value(loss)[0]).epsilon(1e-12));
    opt.step(ckpt, g.backward(loss));
  }
  for (const auto& [name, entry] : ckpt.entries) {
    CAPTURE(name);
    CHECK(entry.tensor.values() == r.checkpoint.tensor(name).values());
  }
}

TEST_CASE("paris with w2 = 0 is zero-conditioned single-pass training") {
  Dataset data = tiny_dataset(4, 1, 0);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 8);
  TrainConfig cfg = quick_config(TrainMode::kDenseParis);
  cfg.paris_pass_weights = {1.0f, 0.0f};
  cfg.epochs_per_iteration = 2;
  cfg.batch_size = 1;
  const TrainResult r = train(data, cfg, baseline);

  Checkpoint ckpt = baseline;
  set_trainable_scope(ckpt, Scope::kDynamic);
  Adam opt(AdamConfig{cfg.lr});
  const Example& ex = data.train[0];
  const Waveform zero(ex.mixture.size(), 0.0f);
  const int out_len = ckpt.config.output_length(static_cast<int>(ex.mixture.size()));
  const Tensor ref = Tensor::row(Waveform(ex.target.begin(), ex.target.begin() + out_len));
  for (int e = 0; e < 2; ++e) {
    Graph g;
    Network net(ckpt, true);
    auto out = net.forward(g, g.constant(Tensor::row(ex.mixture)), g.constant(Tensor::row(ex.enrollment)),
                           g.constant(Tensor::row(zero)), Mode::kDynamic);
    opt.step(ckpt, g.backward(hybrid_loss(g, out.estimate, ref, cfg.loss_weights())));
  }
  for (const auto& [name, entry] : ckpt.entries) CHECK(entry.tensor.values() == r.checkpoint.tensor(name).values());
}

TEST_CASE("training is reproducible") {
  const Dataset data = tiny_dataset(5, 6, 2);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 9);
  for (TrainMode mode : {TrainMode::kBaseline, TrainMode::kDenseAr, TrainMode::kDenseParis}) {
    CAPTURE(to_string(mode));
    TrainConfig cfg = quick_config(mode);
    cfg.batch_size = 3;
    const TrainResult a = train(data, cfg, baseline);
    const TrainResult b = train(data, cfg, baseline);
    cfg.threads = 3;
    const TrainResult c = train(data, cfg, baseline);
    CHECK(a.record == b.record);
    CHECK(a.record == c.record);
    for (const auto& [name, entry] : a.checkpoint.entries) CHECK(entry.tensor.values() == c.checkpoint.tensor(name).values());
    cfg.seed = 12;
    CHECK(!(train(data, cfg, baseline).record == a.record));
  }
}

TEST_CASE("train record") {
  const Dataset data = tiny_dataset(6);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 10);
  TrainConfig cfg = quick_config(TrainMode::kDenseAr);
  std::vector<TrainRow> seen;
  std::vector<int> iterations;
  const TrainResult r = train_ar(data, cfg, baseline, [&](const TrainRow& row) { seen.push_back(row); },
                                 [&](int it, const Checkpoint&) { iterations.push_back(it); });
  CHECK(seen == r.record.rows);
  CHECK(iterations == std::vector<int>{1, 2});
  REQUIRE(r.record.rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.record.rows[i].epoch == static_cast<int>(i) + 1);
    CHECK(r.record.rows[i].iteration == static_cast<int>(i) / 2 + 1);
    CHECK(std::isfinite(r.record.rows[i].si_sdri));
  }
  std::ostringstream os;
  write_csv(r.record, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "iteration,epoch,loss,si_sdri");
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 4);

  // Early stop: a huge threshold ends after iteration 2.
  cfg.iterations = 5;
  cfg.early_stop_db = 1e9;
  CHECK(train_ar(data, cfg, baseline).record.rows.size() == 4);
}

TEST_CASE("train errors") {
  const Dataset data = tiny_dataset(7);
  const Checkpoint baseline = init_checkpoint(micro_config(), 11);
  auto with = [](auto edit) {
    TrainConfig c = quick_config(TrainMode::kDenseAr);
    edit(c);
    return c;
  };
  for (const TrainConfig& bad : {with([](TrainConfig& c) { c.snr_weight = 0.5f; }),
                                 with([](TrainConfig& c) { c.iterations = 0; }),
                                 with([](TrainConfig& c) { c.epochs_per_iteration = 0; }),
                                 with([](TrainConfig& c) { c.batch_size = 0; }),
                                 with([](TrainConfig& c) { c.lr = 0.0f; })}) {
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    CHECK_THROWS_AS(train(data, bad, baseline), std::invalid_argument);
  }
  CHECK_THROWS_AS(parse_train_mode("dense"), std::invalid_argument);
  CHECK(parse_train_mode("dense-paris") == TrainMode::kDenseParis);
  CHECK(std::string(to_string(parse_train_mode("dense-ar"))) == "dense-ar");

  for (TrainMode mode : {TrainMode::kBaseline, TrainMode::kDenseAr, TrainMode::kDenseParis})
    CHECK_THROWS_AS(train(Dataset{}, quick_config(mode), baseline), std::invalid_argument);

  Checkpoint incompatible = baseline;
  incompatible.entries.erase("dyn.fuse.w");
  CHECK_THROWS_AS(train(data, quick_config(TrainMode::kDenseAr), incompatible), CheckpointError);
  TrainConfig short_delay = quick_config(TrainMode::kDenseParis);
  short_delay.sample_delay = 4;
  CHECK_THROWS_AS(train(data, short_delay, baseline), ConfigError);

  Dataset mismatched = data;
  mismatched.train[0].target.pop_back();
  CHECK_THROWS_AS(train(mismatched, quick_config(TrainMode::kBaseline), baseline), std::invalid_argument);
}

TEST_CASE("sample_delay override") {
  const Dataset data = tiny_dataset(8);
  const Checkpoint baseline = jittered_checkpoint(micro_config(), 12);
  TrainConfig cfg = quick_config(TrainMode::kDenseAr);
  cfg.iterations = 1;
  cfg.epochs_per_iteration = 1;
  cfg.sample_delay = 48;
  CHECK(train(data, cfg, baseline).checkpoint.config.sample_delay == 48);
  cfg.sample_delay = 0;
  CHECK(train(data, cfg, baseline).checkpoint.config.sample_delay == baseline.config.sample_delay);
}

TEST_CASE("toy dataset") {
  ToyDataConfig cfg;
  cfg.num_train = 6;
  cfg.num_heldout = 3;
  const Dataset a = make_toy_dataset(cfg), b = make_toy_dataset(cfg);
  REQUIRE(a.train.size() == 6);
  REQUIRE(a.heldout.size() == 3);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].mixture == b.train[i].mixture);
    CHECK(a.train[i].mixture.size() == 4000);
    CHECK(a.train[i].enrollment.size() == 4000);
  }
  cfg.seed = 2;
  CHECK(make_toy_dataset(cfg).train[0].mixture != a.train[0].mixture);

  const auto speakers = toy_speakers(cfg);
  REQUIRE(speakers.size() == 4);
  for (std::size_t i = 0; i + 1 < speakers.size(); ++i) CHECK(speakers[i].high_hz <= speakers[i + 1].low_hz);
  const Waveform u = toy_utterance(speakers[0], 4000, 8000, 3);
  double energy = 0.0;
  for (float v : u) energy += static_cast<double>(v) * v;
  CHECK(std::sqrt(energy / 4000.0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("infer conditioning") {
  std::mt19937 rng(13);
  const Checkpoint ckpt = jittered_checkpoint(micro_config(), 13);
  const Example ex = random_example(rng, 500);
  const Waveform st = infer(ckpt, ex, Conditioning::kNone);
  CHECK(st == forward(ex.mixture, ex.enrollment, std::nullopt, Mode::kStatic, ckpt));
  const Waveform cond = delay_signal(ex.target, 500, ckpt.config.sample_delay);
  CHECK(infer(ckpt, ex, Conditioning::kOracle) ==
        forward(ex.mixture, ex.enrollment, std::span<const float>(cond), Mode::kDynamic, ckpt));
  const Waveform self = infer(ckpt, ex, Conditioning::kSelf);
  const Waveform fixed = dense::testing::self_feedback_offline(ex.mixture, ex.enrollment, ckpt);
  REQUIRE(self.size() == fixed.size());
  for (std::size_t i = 0; i < self.size(); ++i) CHECK(self[i] == doctest::Approx(fixed[i]).epsilon(1e-4).scale(1.0));
  CHECK_THROWS_AS(mean_si_sdri(ckpt, {}, Conditioning::kNone), std::invalid_argument);
}
