#include "vrc/diffcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vrc/errors.hpp"

namespace vrc::diff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename U>
void append_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename U>
U load_le(const unsigned char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return bits;
}

fs::path blob_path_for(const fs::path& manifest) {
  fs::path blob = manifest;
  blob.replace_extension(".bin");
  return blob;
}

}  // namespace

void append_f64_le(std::string& out, double v) { append_le(out, std::bit_cast<std::uint64_t>(v)); }
double read_f64_le(const unsigned char* p) { return std::bit_cast<double>(load_le<std::uint64_t>(p)); }
void append_f32_le(std::string& out, float v) { append_le(out, std::bit_cast<std::uint32_t>(v)); }
float read_f32_le(const unsigned char* p) { return std::bit_cast<float>(load_le<std::uint32_t>(p)); }

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError(DataErrorCode::io, "cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError(DataErrorCode::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError(DataErrorCode::io, "rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_checkpoint(const ParamStore& store, const fs::path& manifest, const json& metadata) {
  std::string blob;
  blob.reserve(store.scalar_count() * 8);
  json entries = json::array();
  for (const auto& [name, p] : store.entries()) {
    entries.push_back({{"name", name}, {"shape", p.value.shape()}, {"offset", blob.size()}});
    for (double v : p.value.data()) append_f64_le(blob, v);
  }
  const fs::path blob_path = blob_path_for(manifest);
  json doc = {{"format", "vrc-checkpoint"},
              {"format_version", kCheckpointVersion},
              {"rng_seed", store.seed()},
              {"blob", blob_path.filename().string()},
              {"blob_bytes", blob.size()},
              {"entries", std::move(entries)},
              {"metadata", metadata}};
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest, doc.dump(2) + "\n");
}

static json parse_manifest(const fs::path& manifest) {
  json doc;
  try {
    doc = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "vrc-checkpoint")
    throw DataError(DataErrorCode::parse, manifest.string() + " is not a checkpoint manifest");
  if (doc.value("format_version", -1) != kCheckpointVersion)
    throw DataError(DataErrorCode::version_mismatch,
                    manifest.string() + ": checkpoint version " +
                        std::to_string(doc.value("format_version", -1)));
  return doc;
}

json read_checkpoint_metadata(const fs::path& manifest) {
  return parse_manifest(manifest).value("metadata", json::object());
}

json load_checkpoint(ParamStore& store, const fs::path& manifest) {
  const json doc = parse_manifest(manifest);
  const fs::path blob_path = manifest.parent_path() / doc.at("blob").get<std::string>();
  const std::string blob = read_file(blob_path);
  if (blob.size() != doc.at("blob_bytes").get<std::size_t>())
    throw DataError(DataErrorCode::truncated_blob,
                    blob_path.string() + " has " + std::to_string(blob.size()) + " bytes, manifest says " +
                        std::to_string(doc.at("blob_bytes").get<std::size_t>()));
  ParamStore loaded(doc.at("rng_seed").get<std::uint64_t>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (const json& e : doc.at("entries")) {
    Shape shape = e.at("shape").get<Shape>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_size(shape);
    if (offset + 8 * n > blob.size())
      throw DataError(DataErrorCode::truncated_blob,
                      blob_path.string() + ": entry '" + e.at("name").get<std::string>() +
                          "' runs past end of blob");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_f64_le(bytes + offset + 8 * i);
    loaded.assign(e.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
  }
  store = std::move(loaded);
  return doc.value("metadata", json::object());
}

}  // namespace vrc::diff
