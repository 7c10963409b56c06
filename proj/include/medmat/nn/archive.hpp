#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "medmat/core/tensor.hpp"

namespace medmat::nn {

/// Single-file weight archive: a format tag, a version, free-form JSON
/// metadata and named tensors. Serialized as CBOR; tensor payloads are raw
/// little-endian doubles, so a save/load round trip is bit exact.
struct Archive {
  std::string format;
  int version = 0;
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

void save_archive(const std::filesystem::path& path, const Archive& archive);

/// Throws NotFoundError, FormatError on a corrupt file, and VersionError
/// when the tag or version differ from the expected ones.
Archive load_archive(const std::filesystem::path& path, const std::string& expected_format,
                     int expected_version);

}  // namespace medmat::nn
