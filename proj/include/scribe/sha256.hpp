#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace scribe {

// FIPS 180-4 SHA-256. Used for mock-embedding seeds, content-hash stage
// caching and plan-set fingerprints, so it must be stable across platforms.
std::array<std::uint8_t, 32> sha256(std::string_view data);

std::string sha256_hex(std::string_view data);

// First 8 digest bytes, big-endian, as a PRNG seed.
std::uint64_t sha256_seed(std::string_view data);

}  // namespace scribe
