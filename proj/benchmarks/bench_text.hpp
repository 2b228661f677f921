#pragma once

// Deterministic Thai-heavy sample inputs shared by the benchmark binaries.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace benchtext {

// Random codepoints from the Thai block, a space every dozen characters so
// segmenters and shinglers see realistic run lengths. Three bytes per
// codepoint in UTF-8.
inline std::string thai_text(std::mt19937_64& rng, std::size_t codepoints) {
    std::string out;
    out.reserve(codepoints * 3);
    for (std::size_t i = 0; i < codepoints; ++i) {
        if (i != 0 && i % 12 == 0) {
            out.push_back(' ');
            continue;
        }
        char32_t cp = 0x0E01 + rng() % 0x57;
        out.push_back(char(0xE0 | (cp >> 12)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(char(0x80 | (cp & 0x3F)));
    }
    return out;
}

inline std::vector<std::string> thai_docs(std::size_t count, std::size_t codepoints,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> docs;
    docs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) docs.push_back(thai_text(rng, codepoints));
    return docs;
}

}  // namespace benchtext
