#include "dense/checkpoint.hpp"

#include <cmath>
#include <random>

namespace dense {

const char* to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::kBadMagic: return "bad magic";
    case CheckpointErrorKind::kUnsupportedVersion: return "unsupported version";
    case CheckpointErrorKind::kTruncated: return "truncated payload";
    case CheckpointErrorKind::kBadDtype: return "unsupported dtype";
    case CheckpointErrorKind::kBadConfig: return "bad config";
    case CheckpointErrorKind::kMissingTensor: return "missing tensor";
    case CheckpointErrorKind::kUnexpectedTensor: return "unexpected tensor";
    case CheckpointErrorKind::kShapeMismatch: return "shape mismatch";
    case CheckpointErrorKind::kIo: return "i/o error";
  }
  return "unknown";
}

Scope scope_of(const std::string& name) {
  return name.rfind(kDynamicPrefix, 0) == 0 ? Scope::kDynamic : Scope::kBaseline;
}

const TensorEntry& Checkpoint::entry(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw CheckpointError(CheckpointErrorKind::kMissingTensor, name);
  return it->second;
}

const Tensor& Checkpoint::tensor(const std::string& name) const { return entry(name).tensor; }

Tensor& Checkpoint::tensor(const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw CheckpointError(CheckpointErrorKind::kMissingTensor, name);
  return it->second.tensor;
}

namespace {

void add_block(std::map<std::string, Shape>& out, const std::string& prefix, int io, int hidden, int kernel) {
  out[prefix + ".in.w"] = {hidden, io, 1};
  out[prefix + ".in.b"] = {hidden};
  out[prefix + ".prelu1"] = {hidden};
  out[prefix + ".cln1.gain"] = {hidden};
  out[prefix + ".cln1.bias"] = {hidden};
  out[prefix + ".dw.w"] = {hidden, 1, kernel};
  out[prefix + ".dw.b"] = {hidden};
  out[prefix + ".prelu2"] = {hidden};
  out[prefix + ".cln2.gain"] = {hidden};
  out[prefix + ".cln2.bias"] = {hidden};
  out[prefix + ".out.w"] = {io, hidden, 1};
  out[prefix + ".out.b"] = {io};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::map<std::string, Shape> expected_shapes(const ModelConfig& cfg) {
  const int e = cfg.enc_channels, b = cfg.bottleneck_channels, h = cfg.hidden_channels;
  const int n = cfg.embed_dim, k = cfg.kernel, p = cfg.tcn_kernel;
  std::map<std::string, Shape> out;
  out["encoder.w"] = {e, 1, k};
  out["decoder.w"] = {e, 1, k};

  out["aux.bottleneck.w"] = {b, e, 1};
  out["aux.bottleneck.b"] = {b};
  for (int i = 0; i < cfg.aux_blocks; ++i) add_block(out, "aux.block" + std::to_string(i), b, h, p);
  out["aux.head.w"] = {n, b, 1};
  out["aux.head.b"] = {n};

  out["sep.bottleneck.w"] = {b, e, 1};
  out["sep.bottleneck.b"] = {b};
  for (int i = 0; i < cfg.num_blocks(); ++i) add_block(out, "sep.block" + std::to_string(i), b, h, p);
  if (cfg.needs_projection()) out["sep.adapt.proj.w"] = {b, n, 1};
  out["sep.mask.w"] = {e, b, 1};
  out["sep.mask.b"] = {e};

  out["dyn.encoder.w"] = {e, 1, k};
  out["dyn.bottleneck.w"] = {b, e, 1};
  out["dyn.bottleneck.b"] = {b};
  for (int i = 0; i < cfg.speech_branch_blocks; ++i) add_block(out, "dyn.block" + std::to_string(i), b, h, p);
  out["dyn.head.w"] = {n, b, 1};
  out["dyn.head.b"] = {n};
  out["dyn.fuse.w"] = {n, 2 * n, 1};
  out["dyn.fuse.b"] = {n};
  out["dyn.fuse.alpha"] = {n};
  if (cfg.needs_projection()) out["dyn.adapt.proj.w"] = {b, n, 1};
  return out;
}

void validate(const Checkpoint& ckpt) {
  try {
    validate(ckpt.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::kBadConfig, e.what());
  }
  const auto shapes = expected_shapes(ckpt.config);
  for (const auto& [name, shape] : shapes) {
    auto it = ckpt.entries.find(name);
    if (it == ckpt.entries.end()) throw CheckpointError(CheckpointErrorKind::kMissingTensor, name);
    if (it->second.tensor.shape() != shape) {
      throw CheckpointError(CheckpointErrorKind::kShapeMismatch,
                            name + " is " + shape_str(it->second.tensor.shape()) + ", expected " + shape_str(shape));
    }
  }
  for (const auto& [name, entry] : ckpt.entries) {
    if (!shapes.count(name)) throw CheckpointError(CheckpointErrorKind::kUnexpectedTensor, name);
  }
}

Checkpoint init_checkpoint(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Checkpoint ckpt;
  ckpt.config = cfg;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : expected_shapes(cfg)) {
    Tensor t(shape);
    if (ends_with(name, ".gain")) {
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    } else if (ends_with(name, "prelu1") || ends_with(name, "prelu2") || ends_with(name, ".alpha")) {
      std::fill(t.data().begin(), t.data().end(), 0.25f);
    } else if (ends_with(name, ".w")) {
      // fan-in scaled uniform
      const int fan_in = shape.size() == 3 ? shape[1] * shape[2] : shape.back();
      float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
      if (name == "decoder.w") bound = 1.0f / std::sqrt(static_cast<float>(shape[0]));
      if (name == "dyn.fuse.w") bound *= 0.1f;
      std::uniform_real_distribution<float> dist(-bound, bound);
      for (float& v : t.data()) v = dist(rng);
    }
    ckpt.entries[name] = TensorEntry{std::move(t), true};
  }
  sync_dynamic_from_baseline(ckpt);
  return ckpt;
}

void set_trainable_scope(Checkpoint& ckpt, Scope scope) {
  for (auto& [name, entry] : ckpt.entries) entry.trainable = scope_of(name) == scope;
}

void set_all_trainable(Checkpoint& ckpt, bool trainable) {
  for (auto& [name, entry] : ckpt.entries) entry.trainable = trainable;
}

void sync_dynamic_from_baseline(Checkpoint& ckpt) {
  if (ckpt.contains("sep.adapt.proj.w") && ckpt.contains("dyn.adapt.proj.w")) {
    ckpt.tensor("dyn.adapt.proj.w") = ckpt.tensor("sep.adapt.proj.w");
  }
}

void zero_mask_learning(Checkpoint& ckpt) {
  for (const char* name : {"dyn.fuse.w", "dyn.fuse.b"}) {
    Tensor& t = ckpt.tensor(name);
    std::fill(t.data().begin(), t.data().end(), 0.0f);
  }
}

}  // namespace dense
