#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace meibo {

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// First 8 bytes of SHA-256 as an integer; stable across platforms.
std::uint64_t sha256_u64(std::string_view bytes);

}  // namespace meibo
