// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfaug/field.hpp"

#include <filesystem>

namespace nerfaug {

/// Versioned binary checkpoint: magic, format version, field config (JSON)
/// with its hash, then the flat parameter vector as raw doubles. Loading
/// verifies the hash and the parameter count.
void save_checkpoint(const std::filesystem::path& path, const FieldParameters& params);
FieldParameters load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace nerfaug
