#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dense {

enum class WavErrorKind { kMalformed, kUnsupportedEncoding, kMultichannel, kIo };

class WavError : public std::runtime_error {
 public:
  WavError(WavErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  WavErrorKind kind() const { return kind_; }

 private:
  WavErrorKind kind_;
};

enum class WavEncoding { kPcm16, kFloat32 };

// Mono RIFF/WAVE audio; samples nominally in [-1, 1].
struct WavFile {
  int sample_rate = 8000;
  std::vector<float> samples;
};

std::vector<std::uint8_t> wav_encode(const WavFile& wav, WavEncoding encoding = WavEncoding::kFloat32);
WavFile wav_decode(std::span<const std::uint8_t> bytes);

WavFile wav_read(const std::filesystem::path& path);
void wav_write(const std::filesystem::path& path, const WavFile& wav, WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace dense
