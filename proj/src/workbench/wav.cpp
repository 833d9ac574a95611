#include "dense/wav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "bytes.hpp"

namespace dense {

namespace bytes {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace bytes

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct Malformed : WavError {
  explicit Malformed(const std::string& m) : WavError(WavErrorKind::kMalformed, "wav: " + m) {}
};

std::int16_t to_pcm16(float x) {
  const float scaled = std::nearbyint(x * 32768.0f);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0f, 32767.0f));
}

}  // namespace

std::vector<std::uint8_t> wav_encode(const WavFile& wav, WavEncoding encoding) {
  if (wav.sample_rate <= 0) throw WavError(WavErrorKind::kMalformed, "wav: sample rate must be positive");
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t block = bits / 8;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.samples.size()) * block;
  bytes::Writer w;
  w.raw("RIFF");
  w.u32(4 + (8 + 16) + (pcm ? 0 : 8 + 4) + 8 + data_bytes);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(pcm ? kFormatPcm : kFormatFloat);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(wav.sample_rate));
  w.u32(static_cast<std::uint32_t>(wav.sample_rate) * block);
  w.u16(static_cast<std::uint16_t>(block));
  w.u16(bits);
  if (!pcm) {
    // non-PCM formats carry a fact chunk with the frame count
    w.raw("fact");
    w.u32(4);
    w.u32(static_cast<std::uint32_t>(wav.samples.size()));
  }
  w.raw("data");
  w.u32(data_bytes);
  for (float x : wav.samples) {
    if (pcm) {
      w.i16(to_pcm16(x));
    } else {
      w.f32(x);
    }
  }
  return w.take();
}

WavFile wav_decode(std::span<const std::uint8_t> data) {
  bytes::Reader<Malformed> r(data);
  if (r.remaining() < 12 || r.str(4) != "RIFF") throw Malformed("missing RIFF header");
  r.u32();
  if (r.str(4) != "WAVE") throw Malformed("missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    if (size > r.remaining()) throw Malformed("chunk '" + id + "' runs past the end of the file");
    if (id == "fmt ") {
      if (size < 16) throw Malformed("fmt chunk too short");
      bytes::Reader<Malformed> f(r.take(size));
      format = f.u16();
      channels = f.u16();
      rate = f.u32();
      f.u32();
      const std::uint16_t block_align = f.u16();
      bits = f.u16();
      if (format == kFormatExtensible) {
        if (size < 40) throw Malformed("extensible fmt chunk too short");
        f.skip(2 + 2 + 4);
        format = f.u16();  // first two bytes of the sub-format GUID
      }
      if (channels == 0 || rate == 0) throw Malformed("zero channels or sample rate");
      if (block_align != channels * (bits / 8)) throw Malformed("inconsistent block alignment");
      have_fmt = true;
      if (size % 2) r.skip(std::min<std::size_t>(1, r.remaining()));
      continue;
    }
    if (id != "data") {
      r.skip(size);
      if (size % 2) r.skip(std::min<std::size_t>(1, r.remaining()));
      continue;
    }
    if (!have_fmt) throw Malformed("data chunk before fmt chunk");
    if (channels != 1) {
      throw WavError(WavErrorKind::kMultichannel,
                     "wav: " + std::to_string(channels) + "-channel audio is not supported (mono only)");
    }
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
      throw WavError(WavErrorKind::kUnsupportedEncoding,
                     "wav: unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                         " bits); expected 16-bit PCM or 32-bit float");
    }
    const std::size_t width = bits / 8;
    if (size % width) throw Malformed("data chunk is not a whole number of samples");
    bytes::Reader<Malformed> d(r.take(size));
    WavFile wav;
    wav.sample_rate = static_cast<int>(rate);
    wav.samples.resize(size / width);
    for (float& x : wav.samples) x = pcm16 ? static_cast<float>(d.i16()) / 32768.0f : d.f32();
    return wav;
  }
  throw Malformed(have_fmt ? "no data chunk" : "no fmt chunk");
}

WavFile wav_read(const std::filesystem::path& path) {
  std::vector<std::uint8_t> data;
  try {
    data = bytes::read_file(path.string());
  } catch (const std::runtime_error& e) {
    throw WavError(WavErrorKind::kIo, std::string("wav: ") + e.what());
  }
  try {
    return wav_decode(data);
  } catch (const WavError& e) {
    throw WavError(e.kind(), std::string(e.what()) + " (" + path.string() + ")");
  }
}

void wav_write(const std::filesystem::path& path, const WavFile& wav, WavEncoding encoding) {
  const auto data = wav_encode(wav, encoding);
  try {
    bytes::write_file(path.string(), data);
  } catch (const std::runtime_error& e) {
    throw WavError(WavErrorKind::kIo, std::string("wav: ") + e.what());
  }
}

}  // namespace dense
