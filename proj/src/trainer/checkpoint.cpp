#include "degsr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace degsr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > remaining()) {
      throw CheckpointTruncatedError(std::string("checkpoint truncated while reading ") + what + " (need " +
                                     std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", " +
                                     std::to_string(remaining()) + " left)");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    auto b = take(n, what);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  put_bytes(out, kCheckpointMagic.data(), kCheckpointMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.descriptor.size()));
  put_bytes(out, ckpt.descriptor.data(), ckpt.descriptor.size());

  const std::size_t payload_start = out.size();
  for (const auto& t : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    put_bytes(out, t.name.data(), t.name.size());
    const Shape& s = t.tensor.shape();
    put_u32(out, 4);
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    put_bytes(out, t.tensor.ptr(), t.tensor.numel() * sizeof(float));
  }
  put_u32(out, crc_of(std::span(out).subspan(payload_start)));
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw NotACheckpointError("not a checkpoint file (bad magic)");
  }
  Reader r(bytes);
  r.take(kCheckpointMagic.size(), "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.descriptor = r.str("descriptor");

  const std::size_t payload_start = r.pos();
  if (r.remaining() < 4) throw CheckpointTruncatedError("checkpoint truncated before the CRC");
  const std::size_t payload_end = bytes.size() - 4;
  while (r.pos() < payload_end) {
    std::string name = r.str("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank < 1 || rank > 4) {
      throw CheckpointCorruptError("tensor " + name + " has unsupported rank " + std::to_string(rank));
    }
    int dims[4] = {1, 1, 1, 1};
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = r.u32("tensor dims");
      if (d > (1u << 30)) throw CheckpointCorruptError("tensor " + name + " has an implausible dimension");
      dims[4 - rank + i] = static_cast<int>(d);
    }
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};
    auto payload = r.take(shape.numel() * sizeof(float), "tensor payload");
    if (r.pos() > payload_end) throw CheckpointTruncatedError("checkpoint truncated inside tensor " + name);
    std::vector<float> values(shape.numel());
    std::memcpy(values.data(), payload.data(), payload.size());
    ckpt.tensors.push_back({std::move(name), Tensor::from(shape, std::move(values))});
  }
  const std::uint32_t stored = r.u32("CRC");
  const std::uint32_t actual = crc_of(bytes.subspan(payload_start, payload_end - payload_start));
  if (stored != actual) {
    // A cut on a record boundary leaves well-formed records followed by four
    // stray bytes; the declared tensor count tells that apart from corruption.
    const auto desc = nlohmann::json::parse(ckpt.descriptor, nullptr, false);
    if (desc.is_object() && desc.contains("tensor_count") && desc["tensor_count"].is_number_unsigned() &&
        desc["tensor_count"].get<std::size_t>() > ckpt.tensors.size()) {
      throw CheckpointTruncatedError("checkpoint truncated: " + std::to_string(ckpt.tensors.size()) + " of " +
                                     std::to_string(desc["tensor_count"].get<std::size_t>()) + " tensors present");
    }
    throw CheckpointCorruptError("checkpoint CRC mismatch");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void export_params(Checkpoint& ckpt, const std::string& prefix, const ModelParams& params) {
  for (const auto& p : params.items()) ckpt.tensors.push_back({prefix + p.name, p.tensor.clone()});
}

void import_params(const Checkpoint& ckpt, const std::string& prefix, ModelParams& params) {
  for (const auto& p : params.items()) {
    const std::string name = prefix + p.name;
    const Tensor* t = ckpt.find(name);
    if (t == nullptr) {
      throw CheckpointShapeError("checkpoint has no tensor " + name + " (expected shape " +
                                 p.tensor.shape().str() + ")");
    }
    if (t->shape() != p.tensor.shape()) {
      throw CheckpointShapeError("tensor " + name + " has shape " + t->shape().str() + " in the checkpoint but " +
                                 p.tensor.shape().str() + " in the network");
    }
    Tensor dst = p.tensor;
    std::copy(t->data().begin(), t->data().end(), dst.data().begin());
  }
}

}  // namespace degsr
