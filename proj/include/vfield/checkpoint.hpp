#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vfield/sac.hpp"

namespace vfield::agent {

/// Binary checkpoint layout (little-endian):
///   magic "VFCKPT\0\0" | u32 version
///   u32 n_meta  { str key, str value }*
///   u32 n_tensor { str name, u8 dtype, u32 ndim, u64 dim[ndim], data }*
///   u64 FNV-1a checksum of everything before it
/// where str = u32 length + bytes and dtype 1 = float64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

struct CheckpointContents {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> metadata;
  std::vector<CheckpointTensor> tensors;
};

std::string encode_checkpoint(const CheckpointContents& contents);
/// Throws CorruptFile or VersionMismatch.
CheckpointContents decode_checkpoint(const std::string& bytes);

/// Serialises a learner. Metadata records the architecture plus the given
/// config hash and step count.
std::string serialize_bundle(AgentBundle& bundle, const std::string& config_hash);

void save_checkpoint(AgentBundle& bundle, const std::filesystem::path& path,
                     const std::string& config_hash = "");

/// Replaces every tensor and counter of bundle from contents. All shapes are
/// validated first, so a failure leaves bundle untouched.
void restore_bundle(AgentBundle& bundle, const CheckpointContents& contents);

/// Reads a checkpoint and rebuilds the learner it describes. Architecture
/// comes from the file; optimiser hyperparameters from base. If
/// expected_obs_dim is positive it must match the stored observation width.
std::unique_ptr<AgentBundle> load_checkpoint(const std::filesystem::path& path,
                                             int expected_obs_dim = 0,
                                             const TrainConfig& base = TrainConfig{});

CheckpointContents read_checkpoint(const std::filesystem::path& path);

}  // namespace vfield::agent
