#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace clipper::util {

/// SHA-256 digest as lowercase hex. Used for stable content hashes:
/// book ids, pair ids, cache keys, and stage staleness checks.
std::string sha256_hex(std::string_view data);

/// First `n` hex chars of sha256_hex; convenient for short ids.
std::string sha256_hex_prefix(std::string_view data, std::size_t n);

}  // namespace clipper::util
