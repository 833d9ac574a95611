#include "dense/checkpoint_io.hpp"

#include <set>

#include "bytes.hpp"
#include "json.hpp"

namespace dense {

namespace {

constexpr char kMagic[] = "DTSE";
constexpr std::uint8_t kDtypeFloat32 = 0;

struct Truncated : CheckpointError {
  explicit Truncated(const std::string& m) : CheckpointError(CheckpointErrorKind::kTruncated, m) {}
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  bytes::Writer w;
  w.raw(kMagic);
  w.u32(Checkpoint::kFormatVersion);
  const std::string config = nlohmann::json(ckpt.config).dump();
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.raw(config);
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& [name, entry] : ckpt.entries) {
    if (name.size() > 0xFFFF) throw CheckpointError(CheckpointErrorKind::kUnexpectedTensor, "tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(kDtypeFloat32);
    w.u8(entry.trainable ? 1 : 0);
    const Shape& shape = entry.tensor.shape();
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : entry.tensor.data()) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> data, CheckpointLoadOptions options) {
  bytes::Reader<Truncated> r(data);
  if (r.remaining() < 4) throw Truncated("file shorter than the magic number");
  if (r.str(4) != kMagic) throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a checkpoint file (magic is not DTSE)");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError(CheckpointErrorKind::kUnsupportedVersion,
                          "format version " + std::to_string(version) + " (this build reads version " +
                              std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  Checkpoint ckpt;
  const std::string config_text = r.str(r.u32());
  try {
    ckpt.config = nlohmann::json::parse(config_text).get<ModelConfig>();
    validate(ckpt.config);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kBadConfig, std::string("config blob: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::kBadConfig, std::string("config blob: ") + e.what());
  }

  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u16());
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeFloat32) {
      throw CheckpointError(CheckpointErrorKind::kBadDtype,
                            "tensor '" + name + "' has dtype " + std::to_string(dtype) + " (only 0 = float32 is defined)");
    }
    const bool trainable = r.u8() != 0;
    const std::uint8_t ndim = r.u8();
    if (ndim < 1 || ndim > 3) {
      throw CheckpointError(CheckpointErrorKind::kShapeMismatch,
                            "tensor '" + name + "' has rank " + std::to_string(ndim) + " (expected 1..3)");
    }
    Shape shape;
    std::uint64_t n = 1;
    for (int d = 0; d < ndim; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > 0x7fffffffu) {
        throw CheckpointError(CheckpointErrorKind::kShapeMismatch, "tensor '" + name + "' has a bad dimension");
      }
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    if (n * 4 > r.remaining()) throw Truncated("payload of tensor '" + name + "' runs past the end of the file");
    std::vector<float> values(static_cast<std::size_t>(n));
    for (float& v : values) v = r.f32();
    if (!ckpt.entries.emplace(name, TensorEntry{Tensor(shape, std::move(values)), trainable}).second) {
      throw CheckpointError(CheckpointErrorKind::kUnexpectedTensor, "tensor '" + name + "' appears twice");
    }
  }
  if (r.remaining() != 0) {
    throw Truncated(std::to_string(r.remaining()) + " trailing bytes after the last tensor (length fields are inconsistent)");
  }
  if (options.check_against_config) validate(ckpt);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto data = encode_checkpoint(ckpt);
  try {
    bytes::write_file(path.string(), data);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointErrorKind::kIo, e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, CheckpointLoadOptions options) {
  std::vector<std::uint8_t> data;
  try {
    data = bytes::read_file(path.string());
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointErrorKind::kIo, e.what());
  }
  return decode_checkpoint(data, options);
}

}  // namespace dense
