#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cgrag {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a whole file; throws InputError if unreadable.
std::string sha256_file(const std::string& path);

/// 64-bit FNV-1a, optionally salted. Stable across platforms.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t salt = 0) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (salt * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace cgrag
