#include "dense/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dense/kernels.hpp"

namespace dense {

namespace {

struct Pointwise {
  const float* w = nullptr;
  const float* b = nullptr;  // may be null
  int in = 0;
  int out = 0;

  // y[o] = b[o] + sum_i w[o,i] x[i], accumulated in input order.
  void apply(const float* x, float* y) const {
    for (int o = 0; o < out; ++o) {
      float acc = b ? b[o] : 0.0f;
      const float* wo = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += wo[i] * x[i];
      y[o] = acc;
    }
  }
};

struct Block {
  Pointwise in, out;
  const float* prelu1 = nullptr;
  const float* cln1_gain = nullptr;
  const float* cln1_bias = nullptr;
  const float* dw_w = nullptr;
  const float* dw_b = nullptr;
  const float* prelu2 = nullptr;
  const float* cln2_gain = nullptr;
  const float* cln2_bias = nullptr;
  int dilation = 1;
};

Pointwise pointwise(const Checkpoint& ckpt, const std::string& prefix, bool bias = true) {
  const Tensor& w = ckpt.tensor(prefix + ".w");
  return Pointwise{w.data().data(), bias ? ckpt.tensor(prefix + ".b").data().data() : nullptr, w.dim(1), w.dim(0)};
}

Block block(const Checkpoint& ckpt, const std::string& p, int dilation) {
  Block b;
  b.in = pointwise(ckpt, p + ".in");
  b.out = pointwise(ckpt, p + ".out");
  b.prelu1 = ckpt.tensor(p + ".prelu1").data().data();
  b.cln1_gain = ckpt.tensor(p + ".cln1.gain").data().data();
  b.cln1_bias = ckpt.tensor(p + ".cln1.bias").data().data();
  b.dw_w = ckpt.tensor(p + ".dw.w").data().data();
  b.dw_b = ckpt.tensor(p + ".dw.b").data().data();
  b.prelu2 = ckpt.tensor(p + ".prelu2").data().data();
  b.cln2_gain = ckpt.tensor(p + ".cln2.gain").data().data();
  b.cln2_bias = ckpt.tensor(p + ".cln2.bias").data().data();
  b.dilation = dilation;
  return b;
}

void apply_prelu(std::span<float> x, const float* alpha) {
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = kernels::prelu(x[c], alpha[c]);
}

// Mirrors the per-frame arithmetic of kernels::cumulative_layer_norm.
void apply_cln(std::span<float> x, ClnRunningStats& stats, const float* gain, const float* bias) {
  for (float v : x) {
    const double d = v;
    stats.sum += d;
    stats.sum_sq += d * d;
  }
  stats.count += x.size();
  const double count = static_cast<double>(stats.count);
  const double mean = stats.sum / count;
  const double var = std::max(0.0, stats.sum_sq / count - mean * mean);
  const float mu = static_cast<float>(mean);
  const float r = static_cast<float>(1.0 / std::sqrt(var + kNormEps));
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = gain[c] * ((x[c] - mu) * r) + bias[c];
}

ConvCache make_cache(int channels, int span) {
  ConvCache c;
  c.channels = channels;
  c.span = span;
  c.columns.assign(static_cast<std::size_t>(span + 1) * channels, 0.0f);
  return c;
}

void cache_push(ConvCache& cache, std::span<const float> column) {
  cache.head = (cache.head + 1) % (cache.span + 1);
  std::copy(column.begin(), column.end(), cache.columns.begin() + static_cast<std::ptrdiff_t>(cache.head) * cache.channels);
}

const float* cache_column(const ConvCache& cache, int lag) {
  const int slots = cache.span + 1;
  const int slot = ((cache.head - lag) % slots + slots) % slots;
  return cache.columns.data() + static_cast<std::size_t>(slot) * cache.channels;
}

}  // namespace

struct StreamEngine::Weights {
  int kernel = 0, stride = 0, enc = 0, bottleneck = 0, hidden = 0, embed = 0, tcn_kernel = 0;
  int adaptation_index = 0, delay = 0;
  const float* encoder = nullptr;
  const float* decoder = nullptr;
  Pointwise sep_bottleneck, mask;
  std::vector<Block> sep_blocks;
  const float* dyn_encoder = nullptr;
  Pointwise dyn_bottleneck, dyn_head, fuse;
  std::vector<Block> dyn_blocks;
  const float* fuse_alpha = nullptr;
  Pointwise dyn_proj;  // w == nullptr when N == bottleneck
};

struct StreamEngine::Scratch {
  std::vector<float> enc, x, h1, h2, mask, contrib;
  std::vector<float> cond_frame, branch_enc, branch_x, speech, joint, delta, fused, fused_proj;
};

StreamEngine::StreamEngine(std::shared_ptr<const Checkpoint> ckpt, std::span<const float> enrollment,
                           StreamOptions options)
    : ckpt_(std::move(ckpt)), options_(options) {
  if (!ckpt_) throw StreamError("stream: null checkpoint");
  validate(*ckpt_);
  const ModelConfig& cfg = ckpt_->config;
  if (!cfg.causal) throw StreamError("stream: streaming requires a causal configuration");

  auto w = std::make_shared<Weights>();
  w->kernel = cfg.kernel;
  w->stride = cfg.stride;
  w->enc = cfg.enc_channels;
  w->bottleneck = cfg.bottleneck_channels;
  w->hidden = cfg.hidden_channels;
  w->embed = cfg.embed_dim;
  w->tcn_kernel = cfg.tcn_kernel;
  w->adaptation_index = cfg.adaptation_block_index;
  w->delay = cfg.sample_delay;
  w->encoder = ckpt_->tensor("encoder.w").data().data();
  w->decoder = ckpt_->tensor("decoder.w").data().data();
  w->sep_bottleneck = pointwise(*ckpt_, "sep.bottleneck");
  w->mask = pointwise(*ckpt_, "sep.mask");
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    w->sep_blocks.push_back(block(*ckpt_, "sep.block" + std::to_string(b), cfg.dilation(b)));
  }
  w->dyn_encoder = ckpt_->tensor("dyn.encoder.w").data().data();
  w->dyn_bottleneck = pointwise(*ckpt_, "dyn.bottleneck");
  w->dyn_head = pointwise(*ckpt_, "dyn.head");
  w->fuse = pointwise(*ckpt_, "dyn.fuse");
  w->fuse_alpha = ckpt_->tensor("dyn.fuse.alpha").data().data();
  for (int b = 0; b < cfg.speech_branch_blocks; ++b) {
    w->dyn_blocks.push_back(block(*ckpt_, "dyn.block" + std::to_string(b), 1 << b));
  }
  if (cfg.needs_projection()) w->dyn_proj = pointwise(*ckpt_, "dyn.adapt.proj", false);
  weights_ = w;

  auto s = std::make_unique<Scratch>();
  s->enc.resize(cfg.enc_channels);
  s->x.resize(cfg.bottleneck_channels);
  s->h1.resize(cfg.hidden_channels);
  s->h2.resize(cfg.hidden_channels);
  s->mask.resize(cfg.enc_channels);
  s->contrib.resize(cfg.kernel);
  s->cond_frame.resize(cfg.kernel);
  s->branch_enc.resize(cfg.enc_channels);
  s->branch_x.resize(cfg.bottleneck_channels);
  s->speech.resize(cfg.embed_dim);
  s->joint.resize(2 * static_cast<std::size_t>(cfg.embed_dim));
  s->delta.resize(cfg.embed_dim);
  s->fused.resize(cfg.embed_dim);
  s->fused_proj.resize(cfg.bottleneck_channels);
  scratch_ = std::move(s);

  // Static embedding is computed once, offline, from the enrollment.
  const Tensor ec = auxiliary_embed(enrollment, *ckpt_);
  state_.static_embed = ec.values();
  if (cfg.needs_projection()) {
    state_.adapt_static.resize(cfg.bottleneck_channels);
    pointwise(*ckpt_, "sep.adapt.proj", false).apply(state_.static_embed.data(), state_.adapt_static.data());
  } else {
    state_.adapt_static = state_.static_embed;
  }

  const int span_unit = cfg.tcn_kernel - 1;
  for (const Block& b : w->sep_blocks) state_.conv_caches.push_back(make_cache(cfg.hidden_channels, span_unit * b.dilation));
  for (const Block& b : w->dyn_blocks) state_.conv_caches.push_back(make_cache(cfg.hidden_channels, span_unit * b.dilation));
  state_.cln_stats.assign(2 * state_.conv_caches.size(), ClnRunningStats{});
  state_.delay_ring.samples.assign(static_cast<std::size_t>(cfg.sample_delay + cfg.kernel), 0.0f);
  state_.ola_buffer.assign(cfg.kernel, 0.0f);
  state_.input_frame.assign(cfg.kernel, 0.0f);
}

StreamEngine::StreamEngine(StreamEngine&&) noexcept = default;
StreamEngine& StreamEngine::operator=(StreamEngine&&) noexcept = default;
StreamEngine::~StreamEngine() = default;

float StreamEngine::read_condition(std::int64_t index) {
  ConditionAudit& audit = state_.audit;
  const DelayRing& ring = state_.delay_ring;
  const auto size = static_cast<std::int64_t>(ring.samples.size());
  ++audit.reads;
  const std::int64_t age = (state_.samples_consumed - 1) - index;
  audit.min_age = std::min(audit.min_age, age);
  bool ok = age >= weights_->delay;
  // Must already be in the ring and not yet overwritten.
  if (index >= ring.written || index < ring.written - size) ok = false;
  if (!ok) {
    ++audit.violations;
    return 0.0f;
  }
  return ring.samples[static_cast<std::size_t>(index % size)];
}

void StreamEngine::run_block(std::size_t block_index, std::size_t cln_slot, std::span<float> x) {
  const Weights& w = *weights_;
  Scratch& s = *scratch_;
  const Block& b = block_index < w.sep_blocks.size() ? w.sep_blocks[block_index]
                                                      : w.dyn_blocks[block_index - w.sep_blocks.size()];
  b.in.apply(x.data(), s.h1.data());
  apply_prelu(s.h1, b.prelu1);
  apply_cln(s.h1, state_.cln_stats[cln_slot], b.cln1_gain, b.cln1_bias);

  ConvCache& cache = state_.conv_caches[block_index];
  cache_push(cache, s.h1);
  const int taps = w.tcn_kernel;
  for (int c = 0; c < w.hidden; ++c) {
    float acc = b.dw_b[c];
    const float* wc = b.dw_w + static_cast<std::size_t>(c) * taps;
    for (int k = 0; k < taps; ++k) acc += wc[k] * cache_column(cache, (taps - 1 - k) * b.dilation)[c];
    s.h2[c] = acc;
  }
  apply_prelu(s.h2, b.prelu2);
  apply_cln(s.h2, state_.cln_stats[cln_slot + 1], b.cln2_gain, b.cln2_bias);
  // out projection accumulated then added as a residual, like the graph's add(x, h)
  for (int o = 0; o < b.out.out; ++o) {
    float acc = b.out.b[o];
    const float* wo = b.out.w + static_cast<std::size_t>(o) * b.out.in;
    for (int i = 0; i < b.out.in; ++i) acc += wo[i] * s.h2[i];
    x[o] = x[o] + acc;
  }
}

void StreamEngine::process_frame() {
  const Weights& w = *weights_;
  Scratch& s = *scratch_;
  const bool dynamic = options_.mode == Mode::kDynamic;
  const std::int64_t t = state_.frames_processed;
  const std::size_t n_sep = w.sep_blocks.size();

  for (int o = 0; o < w.enc; ++o) {
    float acc = 0.0f;
    const float* wo = w.encoder + static_cast<std::size_t>(o) * w.kernel;
    for (int k = 0; k < w.kernel; ++k) acc += wo[k] * state_.input_frame[k];
    s.enc[o] = acc > 0.0f ? acc : 0.0f;
  }

  const float* adapt = state_.adapt_static.data();
  if (dynamic) {
    // Condition sample m = t*S + k is the source delayed by d samples.
    for (int k = 0; k < w.kernel; ++k) {
      const std::int64_t src = t * w.stride + k - w.delay;
      s.cond_frame[k] = src < 0 ? 0.0f : read_condition(src);
    }
    for (int o = 0; o < w.enc; ++o) {
      float acc = 0.0f;
      const float* wo = w.dyn_encoder + static_cast<std::size_t>(o) * w.kernel;
      for (int k = 0; k < w.kernel; ++k) acc += wo[k] * s.cond_frame[k];
      s.branch_enc[o] = acc > 0.0f ? acc : 0.0f;
    }
    w.dyn_bottleneck.apply(s.branch_enc.data(), s.branch_x.data());
    for (std::size_t b = 0; b < w.dyn_blocks.size(); ++b) run_block(n_sep + b, 2 * (n_sep + b), s.branch_x);
    w.dyn_head.apply(s.branch_x.data(), s.speech.data());

    const int n = w.embed;
    std::copy(state_.static_embed.begin(), state_.static_embed.end(), s.joint.begin());
    std::copy(s.speech.begin(), s.speech.end(), s.joint.begin() + n);
    w.fuse.apply(s.joint.data(), s.delta.data());
    for (int i = 0; i < n; ++i) s.fused[i] = state_.static_embed[i] + kernels::prelu(s.delta[i], w.fuse_alpha[i]);
    if (w.dyn_proj.w) {
      w.dyn_proj.apply(s.fused.data(), s.fused_proj.data());
      adapt = s.fused_proj.data();
    } else {
      adapt = s.fused.data();
    }
  }

  w.sep_bottleneck.apply(s.enc.data(), s.x.data());
  for (std::size_t b = 0; b < n_sep; ++b) {
    run_block(b, 2 * b, s.x);
    if (static_cast<int>(b) + 1 == w.adaptation_index) {
      for (int c = 0; c < w.bottleneck; ++c) s.x[c] = s.x[c] * adapt[c];
    }
  }
  w.mask.apply(s.x.data(), s.mask.data());
  for (int c = 0; c < w.enc; ++c) s.mask[c] = s.enc[c] * kernels::sigmoid(s.mask[c]);

  std::fill(s.contrib.begin(), s.contrib.end(), 0.0f);
  for (int c = 0; c < w.enc; ++c) {
    const float v = s.mask[c];
    const float* wc = w.decoder + static_cast<std::size_t>(c) * w.kernel;
    for (int k = 0; k < w.kernel; ++k) s.contrib[k] += v * wc[k];
  }
  for (int k = 0; k < w.kernel; ++k) state_.ola_buffer[k] += s.contrib[k];
  ++state_.frames_processed;
}

void StreamEngine::emit(std::vector<float>& out) {
  const int hop = weights_->stride;
  const int k = weights_->kernel;
  DelayRing& ring = state_.delay_ring;
  const auto size = static_cast<std::int64_t>(ring.samples.size());
  for (int i = 0; i < hop; ++i) {
    const float v = state_.ola_buffer[i];
    out.push_back(v);
    if (options_.condition == ConditionSource::kSelf) {
      ring.samples[static_cast<std::size_t>(ring.written % size)] = v;
      ++ring.written;
    }
  }
  state_.samples_emitted += hop;
  std::memmove(state_.ola_buffer.data(), state_.ola_buffer.data() + hop, sizeof(float) * (k - hop));
  std::fill(state_.ola_buffer.begin() + (k - hop), state_.ola_buffer.end(), 0.0f);
}

void StreamEngine::push_sample(float sample, const float* condition) {
  if (condition) {
    DelayRing& ring = state_.delay_ring;
    const auto size = static_cast<std::int64_t>(ring.samples.size());
    ring.samples[static_cast<std::size_t>(ring.written % size)] = *condition;
    ++ring.written;
  }
  state_.input_frame[state_.input_fill++] = sample;
  ++state_.samples_consumed;
  if (state_.input_fill == weights_->kernel) {
    process_frame();
    emit(*out_);
    const int hop = weights_->stride;
    const int keep = weights_->kernel - hop;
    std::memmove(state_.input_frame.data(), state_.input_frame.data() + hop, sizeof(float) * keep);
    state_.input_fill = keep;
  }
}

void StreamEngine::push(std::span<const float> samples, std::vector<float>& out) {
  if (state_.flushed) throw StreamError("stream: push after flush");
  if (options_.mode == Mode::kDynamic && options_.condition == ConditionSource::kExternal) {
    throw StreamError("stream: external-condition stream needs condition samples");
  }
  out_ = &out;
  for (float v : samples) push_sample(v, nullptr);
  out_ = nullptr;
}

void StreamEngine::push(std::span<const float> samples, std::span<const float> condition, std::vector<float>& out) {
  if (state_.flushed) throw StreamError("stream: push after flush");
  if (options_.condition != ConditionSource::kExternal) {
    throw StreamError("stream: condition samples supplied to a self-conditioned stream");
  }
  if (condition.size() != samples.size()) {
    throw StreamError("stream: " + std::to_string(condition.size()) + " condition samples for " +
                      std::to_string(samples.size()) + " mixture samples");
  }
  out_ = &out;
  for (std::size_t i = 0; i < samples.size(); ++i) push_sample(samples[i], &condition[i]);
  out_ = nullptr;
}

std::vector<float> StreamEngine::push(std::span<const float> samples) {
  std::vector<float> out;
  push(samples, out);
  return out;
}

std::vector<float> StreamEngine::flush() {
  if (state_.flushed) throw StreamError("stream: already flushed");
  state_.flushed = true;
  std::vector<float> out;
  if (state_.frames_processed == 0) return out;
  const int tail = weights_->kernel - weights_->stride;
  out.assign(state_.ola_buffer.begin(), state_.ola_buffer.begin() + tail);
  state_.samples_emitted += tail;
  std::fill(state_.ola_buffer.begin(), state_.ola_buffer.end(), 0.0f);
  return out;
}

Waveform stream_extract(std::shared_ptr<const Checkpoint> ckpt, std::span<const float> mixture,
                        std::span<const float> enrollment, StreamOptions options, std::size_t chunk,
                        std::span<const float> external_condition) {
  StreamEngine engine(std::move(ckpt), enrollment, options);
  const bool external = options.mode == Mode::kDynamic && options.condition == ConditionSource::kExternal;
  if (external && external_condition.size() != mixture.size()) {
    throw StreamError("stream: external condition length differs from mixture");
  }
  Waveform out;
  out.reserve(mixture.size());
  const std::size_t step = chunk == 0 ? std::max<std::size_t>(mixture.size(), 1) : chunk;
  for (std::size_t pos = 0; pos < mixture.size(); pos += step) {
    const std::size_t n = std::min(step, mixture.size() - pos);
    if (external) {
      engine.push(mixture.subspan(pos, n), external_condition.subspan(pos, n), out);
    } else {
      engine.push(mixture.subspan(pos, n), out);
    }
  }
  const auto tail = engine.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace dense
