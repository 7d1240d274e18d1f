#pragma once

#include <string>

#include "sslam/core/surfel.hpp"

namespace sslam {

/// Versioned binary surfel-map file: magic, version, count, then one packed
/// little-endian float32 record per surfel, closed by a CRC-32 of the
/// payload. Loading verifies magic, version, size, and checksum.
void save_map(const std::string& path, const SurfelMapd& map);
SurfelMapd load_map(const std::string& path);

}  // namespace sslam
