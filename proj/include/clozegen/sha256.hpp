#pragma once

#include <string>
#include <string_view>

namespace clozegen {

// Hex digest of the SHA-256 of `data`. Used for content-addressed cache keys
// and config hashes; not a security boundary.
std::string sha256_hex(std::string_view data);

}  // namespace clozegen
