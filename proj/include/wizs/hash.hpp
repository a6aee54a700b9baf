#pragma once

#include <string>
#include <string_view>

namespace wizs {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);
/// Throws Error(kInvalidArgument) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace wizs
