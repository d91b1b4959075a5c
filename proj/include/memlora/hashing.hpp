#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace memlora {

// 64-bit FNV-1a. Stable across platforms, used for prompt digests, template
// checksums and the mock embedder.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

// One step of the splitmix64 generator; `state` is advanced in place.
std::uint64_t splitmix64(std::uint64_t& state);

std::string hex64(std::uint64_t value);

// Lowercase hex SHA-256 of raw bytes (image content identity).
std::string sha256_hex(std::string_view bytes);

} // namespace memlora
