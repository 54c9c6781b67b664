#pragma once

// Binary checkpoint container.
//
// Layout (all integers little-endian):
//   "DNSRCKPT"  u32 version  u32 length + UTF-8 JSON descriptor
//   repeated:   u32 length + name  u32 rank  rank x u32 dims  float32 payload
//   u32 CRC32 over the tensor records
//
// The descriptor carries architecture settings, optimizer step counters,
// the iteration counter and the run configuration echo. It is kept as the
// exact text that was read so a load/save round trip reproduces the bytes.
// When the descriptor is a JSON object with an unsigned "tensor_count", a
// file holding fewer tensors is reported as truncated.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "degsr/nn.hpp"

namespace degsr {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "DNSRCKPT";

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Missing or wrong magic bytes.
struct NotACheckpointError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointTruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// CRC mismatch or malformed records.
struct CheckpointCorruptError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// Tensor or architecture does not fit the network it is loaded into.
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};

struct CheckpointTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string descriptor;  // JSON text
  std::vector<CheckpointTensor> tensors;

  // nullptr when absent.
  const Tensor* find(std::string_view name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Appends every parameter as "<prefix><name>".
void export_params(Checkpoint& ckpt, const std::string& prefix, const ModelParams& params);
// Copies "<prefix><name>" tensors into the parameters. Throws
// CheckpointShapeError naming the tensor and both shapes on any mismatch.
void import_params(const Checkpoint& ckpt, const std::string& prefix, ModelParams& params);

}  // namespace degsr
