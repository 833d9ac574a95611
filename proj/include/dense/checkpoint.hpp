#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dense/config.hpp"
#include "dense/tensor.hpp"

namespace dense {

enum class CheckpointErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kBadDtype,
  kBadConfig,
  kMissingTensor,
  kUnexpectedTensor,
  kShapeMismatch,
  kIo,
};

const char* to_string(CheckpointErrorKind kind);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Parameters under this prefix belong to the dynamic-embedding scope (speech
// branch, fusion layer, dynamic adaptation projection); everything else is
// the static baseline extractor.
inline constexpr const char* kDynamicPrefix = "dyn.";

enum class Scope { kBaseline, kDynamic };
Scope scope_of(const std::string& name);

struct TensorEntry {
  Tensor tensor;
  bool trainable = true;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  std::map<std::string, TensorEntry> entries;
  std::uint32_t format_version = kFormatVersion;

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);
  const TensorEntry& entry(const std::string& name) const;
};

// Every parameter name the network reads, with its shape.
std::map<std::string, Shape> expected_shapes(const ModelConfig& cfg);

// Throws CheckpointError naming the first missing, unexpected or misshapen tensor.
void validate(const Checkpoint& ckpt);

// Random initialisation of both scopes. The dynamic adaptation projection (if
// any) starts as a copy of the static one.
Checkpoint init_checkpoint(const ModelConfig& cfg, std::uint64_t seed);

// Marks one scope trainable and freezes the other.
void set_trainable_scope(Checkpoint& ckpt, Scope scope);
void set_all_trainable(Checkpoint& ckpt, bool trainable);

// Copies baseline tensors that the dynamic scope mirrors (the adaptation
// projection) so a zeroed fusion layer reproduces the static baseline.
void sync_dynamic_from_baseline(Checkpoint& ckpt);

// Zeroes the fusion layer's mask-learning weights and bias.
void zero_mask_learning(Checkpoint& ckpt);

}  // namespace dense
