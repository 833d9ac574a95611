#include "dense/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dense/checkpoint_io.hpp"
#include "dense/manifest.hpp"
#include "dense/metrics.hpp"
#include "dense/mixture.hpp"
#include "dense/stream.hpp"
#include "dense/toy_data.hpp"
#include "dense/train.hpp"
#include "dense/wav.hpp"
#include "json.hpp"

namespace dense {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

void emit(const Io& io, const ordered_json& j) { io.out << j.dump(2) << '\n'; }

WavFile read_for(const std::string& path, const ModelConfig& cfg) {
  WavFile w = wav_read(path);
  if (w.sample_rate != cfg.sample_rate) {
    throw std::runtime_error("'" + path + "' is " + std::to_string(w.sample_rate) + " Hz but the model expects " +
                             std::to_string(cfg.sample_rate) + " Hz");
  }
  return w;
}

double parse_db(const std::string& text, const char* what) {
  if (text == "inf" || text == "+inf" || text == "Inf") return kNoNoise;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string(what) + ": expected a number of dB or 'inf', got '" + text + "'");
}

ordered_json db_json(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

// --- data sources shared by train and ablate-delay ------------------------

struct DataArgs {
  std::string manifest;
  bool toy = false;
  int toy_train = 200;
  int toy_heldout = 24;
  std::uint64_t toy_seed = 1;

  void add(CLI::App* sub) {
    sub->add_option("--manifest", manifest, "line-delimited JSON manifest");
    sub->add_flag("--toy", toy, "use the built-in synthetic two-source task instead of a manifest");
    sub->add_option("--toy-train", toy_train, "toy training mixtures")->check(CLI::PositiveNumber);
    sub->add_option("--toy-heldout", toy_heldout, "toy held-out mixtures")->check(CLI::NonNegativeNumber);
    sub->add_option("--toy-seed", toy_seed, "toy data seed");
  }

  Dataset load(const Io& io, int* sample_rate) const {
    if (toy == !manifest.empty()) throw UsageError("give exactly one of --manifest or --toy");
    if (toy) {
      ToyDataConfig cfg;
      cfg.num_train = toy_train;
      cfg.num_heldout = toy_heldout;
      cfg.seed = toy_seed;
      *sample_rate = cfg.sample_rate;
      io.err << "toy data: " << toy_train << " train, " << toy_heldout << " held-out mixtures\n";
      return make_toy_dataset(cfg);
    }
    Dataset d = load_dataset(read_manifest(manifest), sample_rate);
    io.err << "manifest: " << d.train.size() << " train, " << d.heldout.size() << " held-out records\n";
    return d;
  }
};

struct TrainArgs {
  std::string mode = "baseline";
  int iters = 3;
  int epochs = 50;
  int delay = 0;
  float lr = 1e-3f;
  int batch = 4;
  std::uint64_t seed = 0;
  int threads = 0;
  float paris_w1 = 0.5f, paris_w2 = 0.5f;
  bool no_freeze = false;
  double early_stop_db = 0.1;

  void add(CLI::App* sub, bool with_mode) {
    if (with_mode) sub->add_option("--mode", mode, "baseline|dense-ar|dense-paris");
    sub->add_option("--iters", iters, "AR iterations")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", epochs, "epochs per iteration")->check(CLI::PositiveNumber);
    if (with_mode) sub->add_option("--delay", delay, "sample delay for dense modes (0 keeps the checkpoint's)");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "shuffling seed");
    sub->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--paris-w1", paris_w1, "PARIS pass-1 loss weight");
    sub->add_option("--paris-w2", paris_w2, "PARIS pass-2 loss weight");
    sub->add_flag("--no-freeze", no_freeze, "dense modes: also update baseline-scope tensors");
    sub->add_option("--early-stop-db", early_stop_db, "AR: stop when held-out SI-SDRi gains less than this");
  }

  TrainConfig config() const {
    TrainConfig cfg;
    try {
      cfg.mode = parse_train_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    cfg.iterations = iters;
    cfg.epochs_per_iteration = epochs;
    cfg.sample_delay = delay;
    cfg.lr = lr;
    cfg.batch_size = batch;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.paris_pass_weights = {paris_w1, paris_w2};
    cfg.freeze_baseline = !no_freeze;
    cfg.early_stop_db = early_stop_db;
    try {
      validate(cfg);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

EpochCallback log_epochs(const Io& io) {
  return [&io](const TrainRow& r) {
    io.err << "iteration " << r.iteration << " epoch " << r.epoch << " loss " << std::fixed << std::setprecision(4)
           << r.loss << " held-out si_sdri " << r.si_sdri << '\n'
           << std::defaultfloat;
  };
}

ModelConfig config_from(const std::string& path, bool micro) {
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    ModelConfig cfg = nlohmann::json::parse(in).get<ModelConfig>();
    validate(cfg);
    return cfg;
  }
  return micro ? micro_config() : ModelConfig{};
}

// --- subcommands ------------------------------------------------------------

void add_mix(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    std::string target, interf, noise, snr = "inf", out, target_out, encoding = "float32";
    double sir = 0.0;
    std::uint64_t seed = 0;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("mix", "mix a target with an interferer (and noise) at a given SIR/SNR");
  sub->add_option("--target", a->target, "target speech wav")->required();
  sub->add_option("--interf", a->interf, "interfering speech wav")->required();
  sub->add_option("--noise", a->noise, "noise wav (white noise from --seed when absent and --snr is finite)");
  sub->add_option("--sir", a->sir, "target-to-interferer ratio, dB");
  sub->add_option("--snr", a->snr, "target-to-noise ratio, dB, or inf");
  sub->add_option("--seed", a->seed, "noise seed");
  sub->add_option("--out", a->out, "mixture wav")->required();
  sub->add_option("--target-out", a->target_out, "also write the cropped target here");
  sub->add_option("--encoding", a->encoding, "float32|pcm16")->check(CLI::IsMember({"float32", "pcm16"}));
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      const double snr = parse_db(a->snr, "--snr");
      const WavFile t = wav_read(a->target), i = wav_read(a->interf);
      if (t.sample_rate != i.sample_rate) throw std::runtime_error("target and interferer sample rates differ");
      WavFile n;
      if (!a->noise.empty()) {
        n = wav_read(a->noise);
        if (n.sample_rate != t.sample_rate) throw std::runtime_error("noise sample rate differs from the target's");
      }
      const Mixture m = synthesize_mixture(t.samples, i.samples, n.samples, a->sir, snr, a->seed);
      const WavEncoding enc = a->encoding == "pcm16" ? WavEncoding::kPcm16 : WavEncoding::kFloat32;
      wav_write(a->out, WavFile{t.sample_rate, m.mixture}, enc);
      if (!a->target_out.empty()) wav_write(a->target_out, WavFile{t.sample_rate, m.target}, enc);
      ordered_json j;
      j["out"] = a->out;
      j["sample_rate"] = t.sample_rate;
      j["samples"] = m.mixture.size();
      j["sir_db"] = a->sir;
      j["snr_db"] = db_json(snr);
      j["interferer_gain"] = m.gains.interferer;
      j["noise_gain"] = m.gains.noise;
      j["measured_sir_db"] = power_ratio_db(m.target, m.interferer);
      emit(io, j);
    };
  });
}

void add_train(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    DataArgs data;
    TrainArgs train;
    std::string init_ckpt, out_ckpt, record, config;
    bool micro = false;
    std::uint64_t init_seed = 0;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("train", "train the baseline or a dense variant");
  a->data.add(sub);
  a->train.add(sub, true);
  sub->add_option("--init-ckpt", a->init_ckpt, "starting checkpoint (the trained baseline for dense modes)");
  sub->add_option("--config", a->config, "model config JSON for a fresh baseline");
  sub->add_flag("--micro", a->micro, "fresh baseline uses the micro config");
  sub->add_option("--init-seed", a->init_seed, "weight initialisation seed for a fresh baseline");
  sub->add_option("--out-ckpt", a->out_ckpt, "where to write the trained checkpoint")->required();
  sub->add_option("--record", a->record, "per-epoch CSV (iteration,epoch,loss,si_sdri)");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      const TrainConfig cfg = a->train.config();
      if (cfg.mode != TrainMode::kBaseline && a->init_ckpt.empty()) {
        throw UsageError("--mode " + a->train.mode + " needs --init-ckpt (a trained baseline)");
      }
      if (!a->init_ckpt.empty() && (!a->config.empty() || a->micro)) {
        throw UsageError("--config/--micro only apply to a fresh baseline, not with --init-ckpt");
      }
      const Checkpoint init = a->init_ckpt.empty() ? init_checkpoint(config_from(a->config, a->micro), a->init_seed)
                                                   : load_checkpoint(a->init_ckpt);
      int rate = 0;
      const Dataset data = a->data.load(io, &rate);
      if (rate != init.config.sample_rate) {
        throw std::runtime_error("data is " + std::to_string(rate) + " Hz, model expects " +
                                 std::to_string(init.config.sample_rate) + " Hz");
      }
      const TrainResult r = train(data, cfg, init, log_epochs(io));
      save_checkpoint(a->out_ckpt, r.checkpoint);
      if (!a->record.empty()) {
        std::ofstream os(a->record);
        if (!os) throw std::runtime_error("cannot write '" + a->record + "'");
        write_csv(r.record, os);
      }
      ordered_json j;
      j["mode"] = to_string(cfg.mode);
      j["epochs"] = r.record.rows.size();
      j["iterations"] = r.record.rows.empty() ? 0 : r.record.rows.back().iteration;
      j["final_loss"] = r.record.rows.empty() ? ordered_json(nullptr) : ordered_json(r.record.rows.back().loss);
      j["final_si_sdri"] = r.record.rows.empty() ? ordered_json(nullptr) : db_json(r.record.rows.back().si_sdri);
      j["sample_delay"] = r.checkpoint.config.sample_delay;
      j["out_ckpt"] = a->out_ckpt;
      emit(io, j);
    };
  });
}

struct ExtractInputs {
  std::string ckpt, mixture, enroll, condition;
};

void add_extract(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    ExtractInputs in;
    std::string mode = "dynamic", out;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("extract", "extract the enrolled speaker from a mixture");
  sub->add_option("--ckpt", a->in.ckpt, "checkpoint")->required();
  sub->add_option("--mixture", a->in.mixture, "mixture wav")->required();
  sub->add_option("--enroll", a->in.enroll, "enrollment wav")->required();
  sub->add_option("--condition", a->in.condition,
                  "clean target wav to condition on (upper-bound inference); default is self-feedback");
  sub->add_option("--mode", a->mode, "static|dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  sub->add_option("--out", a->out, "output wav")->required();
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      const Mode mode = parse_mode(a->mode);
      if (mode == Mode::kStatic && !a->in.condition.empty()) throw UsageError("--condition needs --mode dynamic");
      auto ckpt = std::make_shared<const Checkpoint>(load_checkpoint(a->in.ckpt));
      const ModelConfig& cfg = ckpt->config;
      const WavFile mix = read_for(a->in.mixture, cfg), enr = read_for(a->in.enroll, cfg);
      Waveform est;
      std::string source = "none";
      if (mode == Mode::kStatic) {
        est = forward(mix.samples, enr.samples, std::nullopt, Mode::kStatic, *ckpt);
      } else if (a->in.condition.empty()) {
        source = "self";
        est = stream_extract(ckpt, mix.samples, enr.samples, StreamOptions{Mode::kDynamic, ConditionSource::kSelf});
      } else {
        source = "oracle";
        const WavFile c = read_for(a->in.condition, cfg);
        const Waveform delayed = make_ar_condition(c.samples, cfg.sample_delay, mix.samples.size());
        est = forward(mix.samples, enr.samples, std::span<const float>(delayed), Mode::kDynamic, *ckpt);
      }
      wav_write(a->out, WavFile{cfg.sample_rate, est});
      ordered_json j;
      j["out"] = a->out;
      j["mode"] = a->mode;
      j["condition"] = source;
      j["samples"] = est.size();
      emit(io, j);
    };
  });
}

void add_stream(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    ExtractInputs in;
    std::string mode = "dynamic", out, report;
    std::size_t chunk = 0;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("stream", "run the frame-synchronous engine chunk by chunk and report latency");
  sub->add_option("--ckpt", a->in.ckpt, "checkpoint")->required();
  sub->add_option("--mixture", a->in.mixture, "mixture wav")->required();
  sub->add_option("--enroll", a->in.enroll, "enrollment wav")->required();
  sub->add_option("--chunk", a->chunk, "samples per push (default: one hop)");
  sub->add_option("--mode", a->mode, "static|dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  sub->add_option("--out", a->out, "output wav");
  sub->add_option("--report", a->report, "also write the latency JSON here");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      auto ckpt = std::make_shared<const Checkpoint>(load_checkpoint(a->in.ckpt));
      const ModelConfig& cfg = ckpt->config;
      const WavFile mix = read_for(a->in.mixture, cfg), enr = read_for(a->in.enroll, cfg);
      const std::size_t chunk = a->chunk == 0 ? static_cast<std::size_t>(cfg.stride) : a->chunk;
      StreamEngine engine(ckpt, enr.samples, StreamOptions{parse_mode(a->mode), ConditionSource::kSelf});
      Waveform est;
      est.reserve(mix.samples.size());
      const std::span<const float> x(mix.samples);
      const auto start = std::chrono::steady_clock::now();
      for (std::size_t pos = 0; pos < x.size(); pos += chunk) engine.push(x.subspan(pos, std::min(chunk, x.size() - pos)), est);
      const Waveform tail = engine.flush();
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      est.insert(est.end(), tail.begin(), tail.end());
      if (!a->out.empty()) wav_write(a->out, WavFile{cfg.sample_rate, est});

      const ConditionAudit& audit = engine.state().audit;
      ordered_json j;
      j["hop_latency_ms"] = 1000.0 * cfg.stride / cfg.sample_rate;
      j["window_latency_ms"] = 1000.0 * cfg.kernel / cfg.sample_rate;
      j["rtf"] = elapsed / (static_cast<double>(mix.samples.size()) / cfg.sample_rate);
      j["chunk"] = chunk;
      j["samples_in"] = mix.samples.size();
      j["samples_out"] = est.size();
      j["frames"] = engine.state().frames_processed;
      j["condition_reads"] = audit.reads;
      j["condition_violations"] = audit.violations;
      if (audit.reads > 0) j["condition_min_age"] = audit.min_age;
      if (!a->report.empty()) {
        std::ofstream os(a->report);
        if (!os) throw std::runtime_error("cannot write '" + a->report + "'");
        os << j.dump(2) << '\n';
      }
      emit(io, j);
    };
  });
}

ordered_json eval_json(const metrics::EvalResult& r) {
  nlohmann::json plain = r;
  ordered_json j;
  for (const char* k : {"sdr_db", "sdri_db", "si_sdr_db", "si_sdri_db", "stoi"}) j[k] = plain[k];
  return j;
}

void add_eval(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    std::string est, ref, mix, manifest, ckpt, mode = "dynamic", condition = "self";
    int threads = 0;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("eval", "SDRi, SI-SDRi and STOI of estimates against references");
  sub->add_option("--est", a->est, "estimate wav");
  sub->add_option("--ref", a->ref, "clean reference wav");
  sub->add_option("--mix", a->mix, "mixture wav");
  sub->add_option("--manifest", a->manifest, "score every record (needs 'estimate' fields or --ckpt)");
  sub->add_option("--ckpt", a->ckpt, "with --manifest: produce the estimates with this checkpoint");
  sub->add_option("--mode", a->mode, "with --ckpt: static|dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  sub->add_option("--condition", a->condition, "with --ckpt in dynamic mode: self|oracle|zero")
      ->check(CLI::IsMember({"self", "oracle", "zero"}));
  sub->add_option("--threads", a->threads, "worker threads")->check(CLI::NonNegativeNumber);
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      const bool single = !a->est.empty() || !a->ref.empty() || !a->mix.empty();
      if (single == !a->manifest.empty()) throw UsageError("give either --est/--ref/--mix or --manifest");
      if (single) {
        if (a->est.empty() || a->ref.empty() || a->mix.empty()) throw UsageError("--est, --ref and --mix go together");
        if (!a->ckpt.empty()) throw UsageError("--ckpt needs --manifest");
        const WavFile est = wav_read(a->est), ref = wav_read(a->ref), mix = wav_read(a->mix);
        if (est.sample_rate != ref.sample_rate || mix.sample_rate != ref.sample_rate) {
          throw std::runtime_error("sample rates differ");
        }
        ordered_json j = eval_json(metrics::evaluate(est.samples, ref.samples, mix.samples, ref.sample_rate));
        j["stoi_x100"] = j["stoi"].get<double>() * 100.0;
        emit(io, j);
        return;
      }
      const auto records = read_manifest(a->manifest);
      int rate = 0;
      const Dataset data = load_dataset(records, &rate);
      std::vector<const Example*> examples;
      std::vector<const ManifestRecord*> recs;
      {
        std::size_t ti = 0, hi = 0;
        for (const ManifestRecord& r : records) {
          examples.push_back(r.heldout ? &data.heldout[hi++] : &data.train[ti++]);
          recs.push_back(&r);
        }
      }
      std::shared_ptr<const Checkpoint> ckpt;
      Conditioning cond = Conditioning::kNone;
      if (!a->ckpt.empty()) {
        ckpt = std::make_shared<const Checkpoint>(load_checkpoint(a->ckpt));
        if (ckpt->config.sample_rate != rate) throw std::runtime_error("manifest sample rate differs from the model's");
        if (parse_mode(a->mode) == Mode::kDynamic) {
          cond = a->condition == "self" ? Conditioning::kSelf
                 : a->condition == "oracle" ? Conditioning::kOracle
                                            : Conditioning::kZero;
        }
      } else {
        for (const ManifestRecord* r : recs) {
          if (!r->estimate) throw UsageError("record without an 'estimate' field; pass --ckpt to extract instead");
        }
      }
      std::vector<metrics::EvalResult> results(examples.size());
      parallel_for(examples.size(), a->threads, [&](std::size_t i) {
        const Example& ex = *examples[i];
        Waveform est;
        if (ckpt) {
          est = infer(*ckpt, ex, cond);
        } else {
          const WavFile w = wav_read(*recs[i]->estimate);
          if (w.sample_rate != rate) throw std::runtime_error("estimate sample rate differs from the manifest's");
          est = w.samples;
        }
        results[i] = metrics::evaluate(est, ex.target, ex.mixture, rate);
      });
      const metrics::Aggregate agg = metrics::aggregate(results);
      ordered_json j;
      j["count"] = agg.count;
      j["mean"] = eval_json(agg.mean);
      j["median"] = eval_json(agg.median);
      ordered_json rows = ordered_json::array();
      for (std::size_t i = 0; i < results.size(); ++i) {
        ordered_json row;
        row["mixture"] = recs[i]->mixture.string();
        row.update(eval_json(results[i]));
        rows.push_back(row);
      }
      j["records"] = rows;
      emit(io, j);
    };
  });
}

void add_inspect(CLI::App& app, const Io& io, std::function<void()>& run) {
  auto path = std::make_shared<std::string>();
  auto* sub = app.add_subcommand("inspect", "print a checkpoint's config and tensor table");
  sub->add_option("--ckpt", *path, "checkpoint")->required();
  sub->callback([&run, &io, path] {
    run = [&io, path] {
      const Checkpoint ckpt = load_checkpoint(*path);
      ordered_json j;
      j["format_version"] = ckpt.format_version;
      j["config"] = nlohmann::json(ckpt.config);
      std::size_t total = 0, dynamic = 0, trainable = 0;
      ordered_json tensors = ordered_json::array();
      for (const auto& [name, entry] : ckpt.entries) {
        const bool dyn = scope_of(name) == Scope::kDynamic;
        ordered_json t;
        t["name"] = name;
        t["shape"] = entry.tensor.shape();
        t["scope"] = dyn ? "dynamic" : "baseline";
        t["trainable"] = entry.trainable;
        tensors.push_back(t);
        total += entry.tensor.size();
        if (dyn) dynamic += entry.tensor.size();
        if (entry.trainable) trainable += entry.tensor.size();
      }
      j["parameters"] = total;
      j["baseline_parameters"] = total - dynamic;
      j["dynamic_parameters"] = dynamic;
      j["trainable_parameters"] = trainable;
      j["hop_latency_ms"] = 1000.0 * ckpt.config.stride / ckpt.config.sample_rate;
      j["window_latency_ms"] = 1000.0 * ckpt.config.kernel / ckpt.config.sample_rate;
      j["tensors"] = tensors;
      emit(io, j);
    };
  });
}

void add_bench(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    std::string ckpt, mode = "dynamic";
    double duration = 10.0;
    std::uint64_t seed = 0;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("bench", "streaming real-time factor on synthetic audio");
  sub->add_option("--ckpt", a->ckpt, "checkpoint (default: a freshly initialised default config)");
  sub->add_option("--duration", a->duration, "seconds of audio")->check(CLI::PositiveNumber);
  sub->add_option("--mode", a->mode, "static|dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  sub->add_option("--seed", a->seed, "initialisation seed when no checkpoint is given");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      auto ckpt = std::make_shared<const Checkpoint>(a->ckpt.empty() ? init_checkpoint(ModelConfig{}, a->seed)
                                                                     : load_checkpoint(a->ckpt));
      const LatencyReport r = measure(ckpt, a->duration, parse_mode(a->mode));
      ordered_json j;
      j["mode"] = a->mode;
      j["duration_s"] = a->duration;
      j["hop_latency_ms"] = r.hop_latency_ms;
      j["window_latency_ms"] = r.window_latency_ms;
      j["rtf"] = r.rtf;
      j["real_time"] = r.rtf < 1.0;
      emit(io, j);
    };
  });
}

void add_ablate_delay(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    DataArgs data;
    TrainArgs train;
    std::vector<int> delays{16, 32, 64, 128};
    std::string init_ckpt;
    int baseline_epochs = 20;
    bool micro = false;
  };
  auto a = std::make_shared<Args>();
  a->train.iters = 1;
  a->train.epochs = 5;
  auto* sub = app.add_subcommand("ablate-delay", "held-out SI-SDRi of dense-ar training per sample delay (CSV)");
  sub->add_option("--delays", a->delays, "comma-separated sample delays")->delimiter(',');
  a->data.add(sub);
  a->train.add(sub, false);
  sub->add_option("--init-ckpt", a->init_ckpt, "trained baseline (default: train one first)");
  sub->add_option("--baseline-epochs", a->baseline_epochs, "epochs for the baseline when no --init-ckpt")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--micro", a->micro, "fresh baseline uses the micro config");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      if (a->delays.empty()) throw UsageError("--delays is empty");
      TrainConfig cfg = a->train.config();
      cfg.mode = TrainMode::kDenseAr;
      int rate = 0;
      const Dataset data = a->data.load(io, &rate);
      Checkpoint baseline;
      if (a->init_ckpt.empty()) {
        TrainConfig base = cfg;
        base.mode = TrainMode::kBaseline;
        base.epochs_per_iteration = a->baseline_epochs;
        io.err << "training a baseline for " << a->baseline_epochs << " epochs\n";
        baseline = train(data, base, init_checkpoint(a->micro ? micro_config() : ModelConfig{}, cfg.seed),
                         log_epochs(io))
                       .checkpoint;
      } else {
        baseline = load_checkpoint(a->init_ckpt);
      }
      if (rate != baseline.config.sample_rate) throw std::runtime_error("data sample rate differs from the model's");
      for (int d : a->delays) {
        if (d < baseline.config.kernel) {
          throw UsageError("delay " + std::to_string(d) + " is below the encoder window (" +
                           std::to_string(baseline.config.kernel) + " samples)");
        }
      }
      const std::vector<Example>& scored = data.heldout.empty() ? data.train : data.heldout;
      if (data.heldout.empty()) io.err << "no held-out records; scoring on the training set\n";
      io.out << "delay,si_sdri\n";
      for (int d : a->delays) {
        cfg.sample_delay = d;
        io.err << "delay " << d << '\n';
        const TrainResult r = train_ar(data, cfg, baseline, log_epochs(io));
        const double score = mean_si_sdri(r.checkpoint, scored, Conditioning::kSelf, cfg.threads);
        io.out << d << ',' << std::setprecision(std::numeric_limits<double>::max_digits10) << score << '\n';
        io.out.flush();
      }
    };
  });
}

void add_dump_emb(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    ExtractInputs in;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("dump-emb", "per-frame static and dynamic embeddings as CSV");
  sub->add_option("--ckpt", a->in.ckpt, "checkpoint")->required();
  sub->add_option("--mixture", a->in.mixture, "mixture wav")->required();
  sub->add_option("--enroll", a->in.enroll, "enrollment wav")->required();
  sub->add_option("--condition", a->in.condition, "clean target wav (default: the model's own streamed output)");
  sub->add_option("--out", a->out, "CSV path (default: stdout)");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      auto ckpt = std::make_shared<const Checkpoint>(load_checkpoint(a->in.ckpt));
      const ModelConfig& cfg = ckpt->config;
      const WavFile mix = read_for(a->in.mixture, cfg), enr = read_for(a->in.enroll, cfg);
      const Waveform source =
          a->in.condition.empty()
              ? stream_extract(ckpt, mix.samples, enr.samples, StreamOptions{Mode::kDynamic, ConditionSource::kSelf})
              : read_for(a->in.condition, cfg).samples;
      const Waveform cond = make_ar_condition(source, cfg.sample_delay, mix.samples.size());
      if (a->out.empty()) {
        write_embedding_csv(compute_embeddings(mix.samples, enr.samples, cond, *ckpt), io.out);
        return;
      }
      const EmbeddingTable table = compute_embeddings(mix.samples, enr.samples, cond, *ckpt);
      std::ofstream os(a->out);
      if (!os) throw std::runtime_error("cannot write '" + a->out + "'");
      write_embedding_csv(table, os);
      ordered_json j;
      j["out"] = a->out;
      j["frames"] = table.frames.frames();
      j["dim"] = table.frames.dim();
      j["condition"] = a->in.condition.empty() ? "self" : "oracle";
      emit(io, j);
    };
  });
}

void add_toy_data(CLI::App& app, const Io& io, std::function<void()>& run) {
  struct Args {
    std::string out_dir;
    ToyDataConfig cfg;
  };
  auto a = std::make_shared<Args>();
  auto* sub = app.add_subcommand("toy-data", "write the synthetic two-source task as wav files plus a manifest");
  sub->add_option("--out-dir", a->out_dir, "output directory")->required();
  sub->add_option("--train", a->cfg.num_train, "training mixtures")->check(CLI::PositiveNumber);
  sub->add_option("--heldout", a->cfg.num_heldout, "held-out mixtures")->check(CLI::NonNegativeNumber);
  sub->add_option("--length", a->cfg.length, "samples per mixture")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a->cfg.seed, "seed");
  sub->callback([&run, &io, a] {
    run = [&io, a] {
      const fs::path dir(a->out_dir);
      fs::create_directories(dir);
      const Dataset d = make_toy_dataset(a->cfg);
      std::vector<ManifestRecord> records;
      auto put = [&](const std::vector<Example>& split, const char* tag, bool heldout) {
        for (std::size_t i = 0; i < split.size(); ++i) {
          std::ostringstream stem;
          stem << tag << '_' << std::setw(4) << std::setfill('0') << i;
          ManifestRecord r;
          r.mixture = dir / (stem.str() + "_mix.wav");
          r.target = dir / (stem.str() + "_target.wav");
          r.enrollment = dir / (stem.str() + "_enroll.wav");
          r.heldout = heldout;
          wav_write(r.mixture, WavFile{a->cfg.sample_rate, split[i].mixture});
          wav_write(r.target, WavFile{a->cfg.sample_rate, split[i].target});
          wav_write(r.enrollment, WavFile{a->cfg.sample_rate, split[i].enrollment});
          records.push_back(std::move(r));
        }
      };
      put(d.train, "train", false);
      put(d.heldout, "heldout", true);
      const fs::path manifest = dir / "manifest.jsonl";
      write_manifest(manifest, records);
      ordered_json j;
      j["manifest"] = manifest.string();
      j["train"] = d.train.size();
      j["heldout"] = d.heldout.size();
      j["sample_rate"] = a->cfg.sample_rate;
      emit(io, j);
    };
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const Io io{out, err};
  CLI::App app{"dense: causal target-speaker extraction workbench"};
  app.require_subcommand(1);
  std::function<void()> run;
  add_mix(app, io, run);
  add_train(app, io, run);
  add_extract(app, io, run);
  add_stream(app, io, run);
  add_eval(app, io, run);
  add_inspect(app, io, run);
  add_bench(app, io, run);
  add_ablate_delay(app, io, run);
  add_dump_emb(app, io, run);
  add_toy_data(app, io, run);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }
  try {
    run();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dense
