#pragma once

// Versioned binary container for trained models (.pvae).
//
// Layout (all integers and floats little-endian):
//   8 bytes  magic "EDDIPVAE"
//   u32      format version
//   u64      header length, then a UTF-8 JSON header (schema, config, layer activations)
//   u64      array count, then per array:
//              u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major)

#include <cstdint>
#include <filesystem>
#include <string>

#include "eddi/partial_vae.hpp"

namespace eddi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize(const PartialVae& model);
PartialVae deserialize(const std::string& bytes);

void save(const PartialVae& model, const std::filesystem::path& path);
PartialVae load(const std::filesystem::path& path);

}  // namespace eddi
