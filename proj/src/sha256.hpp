#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace iace {

// Self-contained SHA-256 (FIPS 180-4); used for prompt hashes, config
// digests and run-report digests.
std::string sha256_hex(std::string_view data);

}  // namespace iace
