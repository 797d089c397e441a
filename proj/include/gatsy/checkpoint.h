#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gatsy/model.h"

namespace gatsy {

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  FeatureKind feature_kind = FeatureKind::kHandcrafted;
  /// Seed of the random feature matrix when feature_kind is kRandom.
  std::optional<std::uint64_t> feature_seed;
  /// Genre vocabulary the head was trained on, if any.
  std::vector<std::string> vocabulary;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "GTSYCKPT", u32 version, u32 length + JSON header (config, seed,
/// feature kind), u32 tensor count, then per tensor: u32 name length, name,
/// u8 dtype (1 = float64), u32 ndim, u64 dims, row-major little-endian data.
/// Running statistics are stored as tensors named "<layer>.running_mean"
/// and "<layer>.running_var".
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gatsy
