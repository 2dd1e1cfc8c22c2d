#pragma once

#include <string>
#include <string_view>

namespace scaudit {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace scaudit
