#include "medmat/nn/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "medmat/core/error.hpp"

namespace medmat::nn {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "archive payloads assume little endian");

void save_archive(const fs::path& path, const Archive& archive) {
  json doc;
  doc["format"] = archive.format;
  doc["version"] = archive.version;
  doc["metadata"] = archive.metadata;
  json tensors = json::object();
  for (const auto& [name, t] : archive.tensors) {
    std::vector<std::uint8_t> bytes(t.size() * sizeof(double));
    if (!bytes.empty()) std::memcpy(bytes.data(), t.data(), bytes.size());
    tensors[name] = {{"shape", {t.channels(), t.height(), t.width()}}, {"data", json::binary(std::move(bytes))}};
  }
  doc["tensors"] = std::move(tensors);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
  const std::vector<std::uint8_t> cbor = json::to_cbor(doc);
  out.write(reinterpret_cast<const char*>(cbor.data()), static_cast<std::streamsize>(cbor.size()));
}

Archive load_archive(const fs::path& path, const std::string& expected_format, int expected_version) {
  if (!fs::exists(path)) throw NotFoundError(fmt::format("no such archive: {}", path.string()));
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json doc;
  try {
    doc = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: not a valid archive ({})", path.string(), e.what()));
  }
  if (!doc.is_object() || !doc.contains("format") || !doc.contains("version") || !doc.contains("tensors")) {
    throw FormatError(fmt::format("{}: missing archive header fields", path.string()));
  }

  Archive archive;
  archive.format = doc.at("format").get<std::string>();
  archive.version = doc.at("version").get<int>();
  if (archive.format != expected_format) {
    throw VersionError(fmt::format("{}: format tag '{}' (expected '{}')", path.string(), archive.format,
                                   expected_format));
  }
  if (archive.version != expected_version) {
    throw VersionError(fmt::format("{}: format version {} (expected {})", path.string(), archive.version,
                                   expected_version));
  }
  archive.metadata = doc.value("metadata", json::object());
  for (const auto& [name, entry] : doc.at("tensors").items()) {
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw FormatError(fmt::format("tensor {} has a malformed shape", name));
    const auto& payload = entry.at("data").get_binary();
    Tensor t({shape[0], shape[1], shape[2]});
    if (payload.size() != t.size() * sizeof(double)) {
      throw FormatError(fmt::format("tensor {} payload size does not match its shape", name));
    }
    if (!payload.empty()) std::memcpy(t.data(), payload.data(), payload.size());
    archive.tensors.emplace(name, std::move(t));
  }
  return archive;
}

}  // namespace medmat::nn
