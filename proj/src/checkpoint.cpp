// Copyright Contributors to the nerfaug project
// SPDX-License-Identifier: Apache-2.0

#include "nerfaug/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <stdexcept>

namespace nerfaug {

namespace {
constexpr char kMagic[9] = "NAUGCKPT";
}

void save_checkpoint(const std::filesystem::path& path, const FieldParameters& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create checkpoint " + path.string());
  out.write(kMagic, 8);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(out, params.config().hash());
  detail::write_string(out, params.config().to_json());
  detail::write_pod<std::uint64_t>(out, params.flat().size());
  detail::write_doubles(out, params.flat());
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

FieldParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  detail::expect_magic(in, kMagic, "checkpoint " + path.string());
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  const auto hash = detail::read_pod<std::uint64_t>(in);
  const FieldConfig config = FieldConfig::from_json(detail::read_string(in));
  if (config.hash() != hash) throw std::runtime_error("checkpoint " + path.string() + ": config hash mismatch");
  const auto count = detail::read_pod<std::uint64_t>(in);
  FieldParameters params(config);
  if (count != params.flat().size())
    throw std::runtime_error("checkpoint " + path.string() + ": parameter count does not match its config");
  detail::read_doubles(in, params.flat());
  return params;
}

}  // namespace nerfaug
