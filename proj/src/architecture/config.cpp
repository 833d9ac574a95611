#include "dense/config.hpp"

namespace dense {

int ModelConfig::frames(int length) const {
  if (length < kernel) {
    throw ConfigError("signal of " + std::to_string(length) + " samples is shorter than one frame (" +
                      std::to_string(kernel) + ")");
  }
  return (length - kernel) / stride + 1;
}

int ModelConfig::output_length(int length) const { return (frames(length) - 1) * stride + kernel; }

void validate(const ModelConfig& cfg) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(cfg.sample_rate, "sample_rate");
  positive(cfg.kernel, "kernel");
  positive(cfg.stride, "stride");
  positive(cfg.enc_channels, "enc_channels");
  positive(cfg.bottleneck_channels, "bottleneck_channels");
  positive(cfg.hidden_channels, "hidden_channels");
  positive(cfg.tcn_kernel, "tcn_kernel");
  positive(cfg.blocks_per_repeat, "blocks_per_repeat");
  positive(cfg.repeats, "repeats");
  positive(cfg.embed_dim, "embed_dim");
  positive(cfg.speech_branch_blocks, "speech_branch_blocks");
  positive(cfg.aux_blocks, "aux_blocks");
  if (cfg.stride > cfg.kernel) {
    throw ConfigError("stride (" + std::to_string(cfg.stride) + ") must not exceed kernel (" +
                      std::to_string(cfg.kernel) + ")");
  }
  if (cfg.sample_delay < cfg.kernel) {
    throw ConfigError("sample_delay (" + std::to_string(cfg.sample_delay) +
                      ") must be at least one frame (" + std::to_string(cfg.kernel) + " samples)");
  }
  if (cfg.adaptation_block_index < 1 || cfg.adaptation_block_index > cfg.num_blocks()) {
    throw ConfigError("adaptation_block_index must be in [1, " + std::to_string(cfg.num_blocks()) + "], got " +
                      std::to_string(cfg.adaptation_block_index));
  }
  if (!cfg.causal && cfg.tcn_kernel % 2 == 0) {
    throw ConfigError("non-causal configuration needs an odd tcn_kernel");
  }
}

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.enc_channels = 16;
  cfg.bottleneck_channels = 8;
  cfg.hidden_channels = 16;
  cfg.tcn_kernel = 3;
  cfg.blocks_per_repeat = 4;
  cfg.repeats = 2;
  cfg.embed_dim = 8;
  cfg.adaptation_block_index = 7;
  cfg.sample_delay = 32;
  cfg.speech_branch_blocks = 2;
  cfg.aux_blocks = 1;
  return cfg;
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"sample_rate", cfg.sample_rate},
                     {"kernel", cfg.kernel},
                     {"stride", cfg.stride},
                     {"enc_channels", cfg.enc_channels},
                     {"bottleneck_channels", cfg.bottleneck_channels},
                     {"hidden_channels", cfg.hidden_channels},
                     {"tcn_kernel", cfg.tcn_kernel},
                     {"blocks_per_repeat", cfg.blocks_per_repeat},
                     {"repeats", cfg.repeats},
                     {"embed_dim", cfg.embed_dim},
                     {"adaptation_block_index", cfg.adaptation_block_index},
                     {"sample_delay", cfg.sample_delay},
                     {"speech_branch_blocks", cfg.speech_branch_blocks},
                     {"aux_blocks", cfg.aux_blocks},
                     {"causal", cfg.causal}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  ModelConfig d;
  cfg.sample_rate = j.value("sample_rate", d.sample_rate);
  cfg.kernel = j.value("kernel", d.kernel);
  cfg.stride = j.value("stride", d.stride);
  cfg.enc_channels = j.value("enc_channels", d.enc_channels);
  cfg.bottleneck_channels = j.value("bottleneck_channels", d.bottleneck_channels);
  cfg.hidden_channels = j.value("hidden_channels", d.hidden_channels);
  cfg.tcn_kernel = j.value("tcn_kernel", d.tcn_kernel);
  cfg.blocks_per_repeat = j.value("blocks_per_repeat", d.blocks_per_repeat);
  cfg.repeats = j.value("repeats", d.repeats);
  cfg.embed_dim = j.value("embed_dim", d.embed_dim);
  cfg.adaptation_block_index = j.value("adaptation_block_index", d.adaptation_block_index);
  cfg.sample_delay = j.value("sample_delay", d.sample_delay);
  cfg.speech_branch_blocks = j.value("speech_branch_blocks", d.speech_branch_blocks);
  cfg.aux_blocks = j.value("aux_blocks", d.aux_blocks);
  cfg.causal = j.value("causal", d.causal);
}

}  // namespace dense
