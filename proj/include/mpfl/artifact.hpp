#pragma once

// Binary model artifact. Little-endian layout:
//
//   "MPFM"  u32 version = 1
//   u32 dense layer count, then per layer: u32 in, u32 out, u8 prunable
//   float64 parameters in ModelParams::flat() order
//   u32 mask byte length, then the packed mask (same encoding as on the wire)

#include <filesystem>

#include "mpfl/mask.hpp"
#include "mpfl/model.hpp"
#include "mpfl/wire.hpp"

namespace mpfl {

inline constexpr std::uint32_t kArtifactVersion = 1;

struct ModelArtifact {
  Model model;
  PruneMask mask;
  bool operator==(const ModelArtifact&) const = default;
};

Bytes encode_artifact(const Model& model, const PruneMask& mask);
ModelArtifact decode_artifact(std::span<const std::uint8_t> bytes);

void write_artifact(const std::filesystem::path& path, const Model& model, const PruneMask& mask);
ModelArtifact read_artifact(const std::filesystem::path& path);

}  // namespace mpfl
