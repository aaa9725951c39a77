#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusdom/backbone.hpp"
#include "fusdom/downstream.hpp"

namespace fusdom {

/// Binary container: magic "FUSD", u16 format version, config block,
/// stage tag, provenance, named f64 parameter blobs, trailing CRC32 of all
/// preceding bytes. All integers little-endian.
void save_checkpoint(const ModelSnapshot& snapshot, const std::filesystem::path& path);

/// Verifies magic, version and CRC before parsing; the parameter set must
/// match the config's skeleton exactly (names, order, shapes).
ModelSnapshot load_checkpoint(const std::filesystem::path& path);

/// Same container with the linear CTC head appended ("ctc_head.w"/".b") and
/// the mode recorded in the stage tag.
void save_finetuned(const FinetunedModel& model, const std::filesystem::path& path);
FinetunedModel load_finetuned(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

}  // namespace fusdom
