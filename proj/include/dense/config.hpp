#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

namespace dense {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Architectural hyperparameters. Defaults are the desk-scale configuration:
// 8 kHz audio, 16-sample encoder kernel with stride 8.
struct ModelConfig {
  int sample_rate = 8000;
  int kernel = 16;  // encoder/decoder window K, samples
  int stride = 8;   // hop S, samples
  int enc_channels = 64;
  int bottleneck_channels = 32;
  int hidden_channels = 64;
  int tcn_kernel = 3;
  int blocks_per_repeat = 4;
  int repeats = 2;
  int embed_dim = 32;
  int adaptation_block_index = 7;  // 1-based over all separator blocks
  int sample_delay = 32;
  int speech_branch_blocks = 2;
  int aux_blocks = 2;
  bool causal = true;

  int num_blocks() const { return blocks_per_repeat * repeats; }
  int dilation(int block) const { return 1 << (block % blocks_per_repeat); }
  // Encoder frames for a signal of the given length (valid framing).
  int frames(int length) const;
  // Decoder output length for a signal of the given length.
  int output_length(int length) const;
  bool needs_projection() const { return embed_dim != bottleneck_channels; }

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError describing the first violated invariant.
void validate(const ModelConfig& cfg);

// Tiny widths for unit tests and toy training runs.
ModelConfig micro_config();

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

}  // namespace dense
