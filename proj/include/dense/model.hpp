#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dense/checkpoint.hpp"
#include "dense/graph.hpp"

namespace dense {

using Waveform = std::vector<float>;

enum class Mode { kStatic, kDynamic };

Mode parse_mode(const std::string& text);

// Per-frame embeddings, T x N.
struct EmbeddingSequence {
  Tensor values;
  int frames() const { return values.dim(0); }
  int dim() const { return values.dim(1); }
};

inline constexpr float kNormEps = 1e-8f;

// Graph builder for the extractor. Holds a reference to the checkpoint; the
// checkpoint must outlive the Network. Parameters enter the graph as
// trainable only when gradients are enabled and the checkpoint marks them so.
class Network {
 public:
  explicit Network(const Checkpoint& ckpt, bool enable_grad = false);

  const ModelConfig& config() const { return ckpt_.config; }
  const Checkpoint& checkpoint() const { return ckpt_; }

  // y: 1 x L -> enc_channels x T
  Var encode(Graph& g, Var wave) const;
  // enrollment: 1 x L -> N x 1
  Var auxiliary_embed(Graph& g, Var enrollment) const;
  // delayed condition: 1 x L -> N x T
  Var speech_branch(Graph& g, Var condition) const;
  // e_c: N x 1, e_s: N x T -> N x T
  Var fuse_embeddings(Graph& g, Var static_embed, Var speech_embed) const;
  // embedding is N x 1 (static) or N x T (dynamic); returns the mask, enc_channels x T
  Var separate(Graph& g, Var encoded, Var embedding, Mode mode) const;
  Var decode(Graph& g, Var encoded, Var mask) const;

  struct Outputs {
    Var estimate;         // 1 x L_out
    Var static_embed;     // N x 1
    Var embedding;        // N x 1 or N x T (what the adaptation layer saw)
  };
  // condition is required in dynamic mode, already delay-shifted, same length as mixture.
  Outputs forward(Graph& g, Var mixture, Var enrollment, std::optional<Var> condition, Mode mode) const;

 private:
  Var param(Graph& g, const std::string& name) const;
  Var pointwise_conv(Graph& g, Var x, const std::string& prefix, bool bias = true) const;
  Var tcn_block(Graph& g, Var x, const std::string& prefix, int dilation) const;
  Var adapt(Graph& g, Var x, Var embedding, bool dynamic) const;

  const Checkpoint& ckpt_;
  bool enable_grad_;
};

// Plain-tensor entry points. Waveforms are mono float arrays.
Tensor encode(std::span<const float> y, const Checkpoint& ckpt);
Tensor auxiliary_embed(std::span<const float> enrollment, const Checkpoint& ckpt);  // 1 x N
EmbeddingSequence speech_branch(std::span<const float> delayed_condition, const Checkpoint& ckpt);
EmbeddingSequence fuse_embeddings(const Tensor& static_embed, const EmbeddingSequence& speech,
                                  const Checkpoint& ckpt);
// x: C x T; e: 1 x C static or a T x C sequence.
Tensor adaptation(const Tensor& x, const Tensor& e);
Tensor adaptation(const Tensor& x, const EmbeddingSequence& e);
Tensor separate(const Tensor& encoded, const Tensor& static_embed, const Checkpoint& ckpt);
Tensor separate(const Tensor& encoded, const EmbeddingSequence& dynamic_embed, const Checkpoint& ckpt);
Waveform decode(const Tensor& encoded, const Tensor& mask, const Checkpoint& ckpt);

Waveform forward(std::span<const float> mixture, std::span<const float> enrollment,
                 std::optional<std::span<const float>> condition, Mode mode, const Checkpoint& ckpt);

// Frame embedding table: row 0 is the static embedding, then one fused
// dynamic embedding per frame.
struct EmbeddingTable {
  Tensor static_embed;     // 1 x N
  EmbeddingSequence frames;
};
EmbeddingTable compute_embeddings(std::span<const float> mixture, std::span<const float> enrollment,
                                  std::span<const float> condition, const Checkpoint& ckpt);
void write_embedding_csv(const EmbeddingTable& table, std::ostream& os);
void dump_embeddings(std::span<const float> mixture, std::span<const float> enrollment,
                     std::span<const float> condition, const Checkpoint& ckpt,
                     const std::filesystem::path& path);

}  // namespace dense
