#include "dense/model.hpp"

#include <fstream>
#include <iomanip>
#include <limits>

namespace dense {

Mode parse_mode(const std::string& text) {
  if (text == "static") return Mode::kStatic;
  if (text == "dynamic") return Mode::kDynamic;
  throw std::invalid_argument("unknown mode '" + text + "' (expected static|dynamic)");
}

Network::Network(const Checkpoint& ckpt, bool enable_grad) : ckpt_(ckpt), enable_grad_(enable_grad) {
  validate(ckpt_);
}

Var Network::param(Graph& g, const std::string& name) const {
  const TensorEntry& e = ckpt_.entry(name);
  return g.parameter(name, e.tensor, enable_grad_ && e.trainable);
}

Var Network::pointwise_conv(Graph& g, Var x, const std::string& prefix, bool bias) const {
  Var b = bias ? param(g, prefix + ".b") : Var{};
  return g.conv1d(x, param(g, prefix + ".w"), b, kernels::Conv1dParams{});
}

Var Network::tcn_block(Graph& g, Var x, const std::string& prefix, int dilation) const {
  const ModelConfig& cfg = ckpt_.config;
  Var h = pointwise_conv(g, x, prefix + ".in");
  h = g.prelu(h, param(g, prefix + ".prelu1"));
  h = g.cumulative_layer_norm(h, param(g, prefix + ".cln1.gain"), param(g, prefix + ".cln1.bias"), kNormEps);
  kernels::Conv1dParams dw;
  dw.dilation = dilation;
  dw.groups = cfg.hidden_channels;
  const int span = (cfg.tcn_kernel - 1) * dilation;
  if (cfg.causal) {
    dw.pad_left = span;
  } else {
    dw.pad_left = span / 2;
    dw.pad_right = span / 2;
  }
  h = g.conv1d(h, param(g, prefix + ".dw.w"), param(g, prefix + ".dw.b"), dw);
  h = g.prelu(h, param(g, prefix + ".prelu2"));
  h = g.cumulative_layer_norm(h, param(g, prefix + ".cln2.gain"), param(g, prefix + ".cln2.bias"), kNormEps);
  h = pointwise_conv(g, h, prefix + ".out");
  return g.add(x, h);
}

Var Network::encode(Graph& g, Var wave) const {
  const ModelConfig& cfg = ckpt_.config;
  const Tensor& y = g.value(wave);
  require(y.rank() == 2 && y.dim(0) == 1, "encode: waveform must be 1 x L");
  if (y.dim(1) < cfg.kernel) {
    throw ShapeError("encode: input of " + std::to_string(y.dim(1)) + " samples is shorter than one frame");
  }
  kernels::Conv1dParams p;
  p.stride = cfg.stride;
  return g.relu(g.conv1d(wave, param(g, "encoder.w"), Var{}, p));
}

Var Network::auxiliary_embed(Graph& g, Var enrollment) const {
  if (g.value(enrollment).size() < static_cast<std::size_t>(ckpt_.config.kernel)) {
    throw ShapeError("auxiliary_embed: enrollment shorter than one frame");
  }
  Var x = pointwise_conv(g, encode(g, enrollment), "aux.bottleneck");
  for (int i = 0; i < ckpt_.config.aux_blocks; ++i) x = tcn_block(g, x, "aux.block" + std::to_string(i), 1 << i);
  return g.time_mean(pointwise_conv(g, x, "aux.head"));
}

Var Network::speech_branch(Graph& g, Var condition) const {
  const ModelConfig& cfg = ckpt_.config;
  if (g.value(condition).size() < static_cast<std::size_t>(cfg.kernel)) {
    throw ShapeError("speech_branch: condition shorter than one frame");
  }
  kernels::Conv1dParams p;
  p.stride = cfg.stride;
  Var x = g.relu(g.conv1d(condition, param(g, "dyn.encoder.w"), Var{}, p));
  x = pointwise_conv(g, x, "dyn.bottleneck");
  for (int i = 0; i < cfg.speech_branch_blocks; ++i) x = tcn_block(g, x, "dyn.block" + std::to_string(i), 1 << i);
  return pointwise_conv(g, x, "dyn.head");
}

Var Network::fuse_embeddings(Graph& g, Var static_embed, Var speech_embed) const {
  const Tensor& es = g.value(speech_embed);
  const int n = ckpt_.config.embed_dim;
  require(g.value(static_embed).size() == static_cast<std::size_t>(n) && es.rank() == 2 && es.dim(0) == n,
          "fuse_embeddings: embedding dims do not match N=" + std::to_string(n));
  Var repeated = g.repeat_columns(static_embed, es.dim(1));
  Var joint = g.concat_rows(repeated, speech_embed);
  Var delta = g.prelu(pointwise_conv(g, joint, "dyn.fuse"), param(g, "dyn.fuse.alpha"));
  return g.add(repeated, delta);
}

Var Network::adapt(Graph& g, Var x, Var embedding, bool dynamic) const {
  Var e = embedding;
  if (ckpt_.config.needs_projection()) {
    e = g.conv1d(e, param(g, dynamic ? "dyn.adapt.proj.w" : "sep.adapt.proj.w"), Var{}, kernels::Conv1dParams{});
  }
  return dynamic ? g.mul(x, e) : g.mul_column(x, e);
}

Var Network::separate(Graph& g, Var encoded, Var embedding, Mode mode) const {
  const ModelConfig& cfg = ckpt_.config;
  const Tensor& emb = g.value(embedding);
  const bool dynamic = mode == Mode::kDynamic;
  require(emb.rank() == 2 && emb.dim(0) == cfg.embed_dim,
          "separate: embedding must have " + std::to_string(cfg.embed_dim) + " rows");
  if (dynamic && emb.dim(1) != g.value(encoded).dim(1)) {
    throw ShapeError("separate: dynamic embedding has " + std::to_string(emb.dim(1)) + " frames, mixture has " +
                     std::to_string(g.value(encoded).dim(1)));
  }
  Var x = pointwise_conv(g, encoded, "sep.bottleneck");
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    x = tcn_block(g, x, "sep.block" + std::to_string(b), cfg.dilation(b));
    if (b + 1 == cfg.adaptation_block_index) x = adapt(g, x, embedding, dynamic);
  }
  return g.sigmoid(pointwise_conv(g, x, "sep.mask"));
}

Var Network::decode(Graph& g, Var encoded, Var mask) const {
  require(g.value(encoded).same_shape(g.value(mask)), "decode: encoded and mask shapes differ");
  return g.conv_transpose1d(g.mul(encoded, mask), param(g, "decoder.w"), ckpt_.config.stride);
}

Network::Outputs Network::forward(Graph& g, Var mixture, Var enrollment, std::optional<Var> condition,
                                  Mode mode) const {
  Var encoded = encode(g, mixture);
  Var ec = auxiliary_embed(g, enrollment);
  Var embedding = ec;
  if (mode == Mode::kDynamic) {
    if (!condition) throw std::invalid_argument("dynamic mode requires a condition signal");
    if (g.value(*condition).size() != g.value(mixture).size()) {
      throw ShapeError("condition has " + std::to_string(g.value(*condition).size()) + " samples, mixture has " +
                       std::to_string(g.value(mixture).size()));
    }
    embedding = fuse_embeddings(g, ec, speech_branch(g, *condition));
  }
  Var mask = separate(g, encoded, embedding, mode);
  return Outputs{decode(g, encoded, mask), ec, embedding};
}

// ---------------------------------------------------------------------------

namespace {

Tensor transpose(const Tensor& t) {
  const int rows = t.dim(0), cols = t.dim(1);
  Tensor out({cols, rows});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(c, r) = t.at(r, c);
  return out;
}

Var wave(Graph& g, std::span<const float> samples) {
  if (samples.empty()) throw ShapeError("empty waveform");
  return g.constant(Tensor::row(Waveform(samples.begin(), samples.end())));
}

}  // namespace

Tensor encode(std::span<const float> y, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  return g.value(net.encode(g, wave(g, y)));
}

Tensor auxiliary_embed(std::span<const float> enrollment, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  const Tensor& e = g.value(net.auxiliary_embed(g, wave(g, enrollment)));
  return e.reshaped({1, static_cast<int>(e.size())});
}

EmbeddingSequence speech_branch(std::span<const float> delayed_condition, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  return {transpose(g.value(net.speech_branch(g, wave(g, delayed_condition))))};
}

EmbeddingSequence fuse_embeddings(const Tensor& static_embed, const EmbeddingSequence& speech,
                                  const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  Var ec = g.constant(static_embed.reshaped({static_cast<int>(static_embed.size()), 1}));
  Var es = g.constant(transpose(speech.values));
  return {transpose(g.value(net.fuse_embeddings(g, ec, es)))};
}

Tensor adaptation(const Tensor& x, const Tensor& e) {
  Graph g;
  const int c = static_cast<int>(e.size());
  return g.value(g.mul_column(g.constant(x), g.constant(e.reshaped({c, 1}))));
}

Tensor adaptation(const Tensor& x, const EmbeddingSequence& e) {
  Graph g;
  require(e.frames() == x.dim(1), "adaptation: embedding frames do not match input frames");
  return g.value(g.mul(g.constant(x), g.constant(transpose(e.values))));
}

Tensor separate(const Tensor& encoded, const Tensor& static_embed, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  Var e = g.constant(static_embed.reshaped({static_cast<int>(static_embed.size()), 1}));
  return g.value(net.separate(g, g.constant(encoded), e, Mode::kStatic));
}

Tensor separate(const Tensor& encoded, const EmbeddingSequence& dynamic_embed, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  if (dynamic_embed.frames() != encoded.dim(1)) {
    throw ShapeError("separate: dynamic embedding has " + std::to_string(dynamic_embed.frames()) +
                     " frames, mixture has " + std::to_string(encoded.dim(1)));
  }
  Var e = g.constant(transpose(dynamic_embed.values));
  return g.value(net.separate(g, g.constant(encoded), e, Mode::kDynamic));
}

Waveform decode(const Tensor& encoded, const Tensor& mask, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  return g.value(net.decode(g, g.constant(encoded), g.constant(mask))).values();
}

Waveform forward(std::span<const float> mixture, std::span<const float> enrollment,
                 std::optional<std::span<const float>> condition, Mode mode, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  std::optional<Var> cond;
  if (condition) cond = wave(g, *condition);
  auto out = net.forward(g, wave(g, mixture), wave(g, enrollment), cond, mode);
  return g.value(out.estimate).values();
}

EmbeddingTable compute_embeddings(std::span<const float> mixture, std::span<const float> enrollment,
                                  std::span<const float> condition, const Checkpoint& ckpt) {
  Graph g;
  Network net(ckpt);
  auto out = net.forward(g, wave(g, mixture), wave(g, enrollment), wave(g, condition), Mode::kDynamic);
  const Tensor& ec = g.value(out.static_embed);
  return EmbeddingTable{ec.reshaped({1, static_cast<int>(ec.size())}), {transpose(g.value(out.embedding))}};
}

void write_embedding_csv(const EmbeddingTable& table, std::ostream& os) {
  const int n = table.frames.dim();
  os << "frame";
  for (int i = 0; i < n; ++i) os << ",e" << i;
  os << '\n';
  os << std::setprecision(std::numeric_limits<float>::max_digits10);
  os << "static";
  for (int i = 0; i < n; ++i) os << ',' << table.static_embed[static_cast<std::size_t>(i)];
  os << '\n';
  for (int t = 0; t < table.frames.frames(); ++t) {
    os << t;
    for (int i = 0; i < n; ++i) os << ',' << table.frames.values.at(t, i);
    os << '\n';
  }
}

void dump_embeddings(std::span<const float> mixture, std::span<const float> enrollment,
                     std::span<const float> condition, const Checkpoint& ckpt, const std::filesystem::path& path) {
  const EmbeddingTable table = compute_embeddings(mixture, enrollment, condition, ckpt);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_embedding_csv(table, os);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace dense
