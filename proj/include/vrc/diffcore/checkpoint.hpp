#pragma once

#include <filesystem>

#include <json.hpp>

#include "vrc/diffcore/param_store.hpp"

namespace vrc::diff {

inline constexpr int kCheckpointVersion = 1;

// Writes <manifest> (JSON: entry names, shapes, byte offsets, caller
// metadata) and <manifest stem>.bin (little-endian float64, entries in name
// order). Both files go through write-to-temp + rename.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& manifest,
                     const nlohmann::json& metadata = nlohmann::json::object());

// Replaces the store's contents with the checkpoint's entries and seed;
// returns the metadata object. Throws DataError on malformed input.
nlohmann::json load_checkpoint(ParamStore& store, const std::filesystem::path& manifest);

// Reads only the metadata object.
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& manifest);

// Little-endian float64 / float32 helpers shared with the dataset writer.
void append_f64_le(std::string& out, double v);
double read_f64_le(const unsigned char* p);
void append_f32_le(std::string& out, float v);
float read_f32_le(const unsigned char* p);

// Write bytes to path via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace vrc::diff
