#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace langkit::uni {

// Strict UTF-8 validation: rejects overlong forms, surrogates and > U+10FFFF.
bool utf8_valid(std::string_view s);

// Unicode scalar value count. Throws Error("invalid-utf8") on malformed input.
std::size_t count_codepoints(std::string_view s);

// Decodes the codepoint at byte offset i and advances i past it.
// Precondition: s is valid UTF-8 and i points at a sequence start.
char32_t decode_at(std::string_view s, std::size_t& i);

void append_utf8(std::string& out, char32_t cp);

std::vector<char32_t> to_codepoints(std::string_view s);

// Canonical composition (NFC).
std::string nfc(std::string_view s);

// General category L* (letter).
bool is_letter(char32_t cp);

inline bool is_ascii_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v';
}

}  // namespace langkit::uni
