#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace langkit::hash {

// splitmix64 finalizer; full-avalanche bijection on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded FNV-1a over raw bytes, splitmix-finalized. Stable across platforms;
// this is the hash behind shingles, band keys and content digests that do not
// need collision resistance against an adversary.
inline std::uint64_t bytes64(std::string_view data, std::uint64_t seed = 0) {
    std::uint64_t h = 14695981039346656037ull ^ mix64(seed);
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return mix64(h);
}

inline std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// SHA-256 hex digest (OpenSSL-backed). For cache keys and resume markers.
std::string sha256_hex(std::string_view data);

}  // namespace langkit::hash
