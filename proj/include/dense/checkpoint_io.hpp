#pragma once

// Binary checkpoint file:
//   "DTSE" | u32 version | u32 n + n bytes config JSON | u32 count |
//   count x (u16 n + name | u8 dtype | u8 trainable | u8 ndim | ndim x u32 | float32 data)
// All integers and floats little-endian. dtype 0 is float32, the only one defined.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dense/checkpoint.hpp"

namespace dense {

struct CheckpointLoadOptions {
  // Compare tensor names and shapes with what the stored config expects.
  bool check_against_config = true;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError; the kind names the failure.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, CheckpointLoadOptions options = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, CheckpointLoadOptions options = {});

}  // namespace dense
