#pragma once

#include <filesystem>
#include <string>

#include "hinet/model.hpp"

namespace hinet {

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout:
///
///   HINETCKPT <version>\n
///   config <bytes>\n<config text>
///   manifest <bytes>\n<lines "name shape(d0xd1x..) offset count">
///   payload <bytes>\n<little-endian float64 values>
///   [normalizer <bytes>\n<"mean ..." and "stddev ..." lines>]
///
/// Offsets are byte offsets into the payload. The normalizer section is
/// optional; when it is absent `normalizer` is left empty.
std::string serialize_checkpoint(const HiNetParams& params, const Normalizer* normalizer = nullptr);
HiNetParams deserialize_checkpoint(const std::string& bytes, Normalizer* normalizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const HiNetParams& params,
                     const Normalizer* normalizer = nullptr);
HiNetParams load_checkpoint(const std::filesystem::path& path, Normalizer* normalizer = nullptr);

/// Text manifest of a checkpoint (for inspection).
std::string checkpoint_manifest(const HiNetParams& params);

}  // namespace hinet
