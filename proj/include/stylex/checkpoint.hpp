#pragma once

#include <string>

#include "stylex/model.hpp"

namespace stylex {

// Versioned tensor-archive checkpoint: 8-byte magic, a JSON header with the
// task descriptor, encoder config, alpha, trained flag, vocabulary, and the
// tensor manifest, followed by raw little-endian float64 data in manifest
// order. Layout documented in the README.
void save_checkpoint(StylexModel& model, const std::string& path);
StylexModel load_checkpoint(const std::string& path);

// FNV-1a content hash of a file, hex-encoded; recorded in run manifests.
std::string file_hash(const std::string& path);

}  // namespace stylex
