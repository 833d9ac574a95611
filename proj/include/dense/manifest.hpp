#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dense/train.hpp"

namespace dense {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One JSON object per line:
//   {"mixture": ..., "target": ..., "enrollment": ..., "noise": ..., "estimate": ..., "split": "train"|"heldout"}
// noise, estimate and split are optional. Relative paths resolve against the
// manifest's directory.
struct ManifestRecord {
  std::filesystem::path mixture;
  std::filesystem::path target;
  std::filesystem::path enrollment;
  std::optional<std::filesystem::path> noise;
  std::optional<std::filesystem::path> estimate;
  bool heldout = false;
};

std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

// Loads every referenced file. All files must exist and share one sample rate,
// which is returned through sample_rate.
Dataset load_dataset(const std::vector<ManifestRecord>& records, int* sample_rate = nullptr);

}  // namespace dense
