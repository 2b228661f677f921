#include "langkit/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>

#include "langkit/error.hpp"

namespace langkit::uni {

namespace {

// Returns the length of the UTF-8 sequence starting with byte b, or 0 if b
// cannot start a sequence.
int seq_len(unsigned char b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 0;
}

}  // namespace

bool utf8_valid(std::string_view s) {
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        int len = seq_len(b0);
        if (len == 0 || i + len > n) return false;
        if (len == 1) {
            ++i;
            continue;
        }
        char32_t cp = b0 & (0xFF >> (len + 1));
        for (int j = 1; j < len; ++j) {
            unsigned char bj = static_cast<unsigned char>(s[i + j]);
            if ((bj & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (bj & 0x3F);
        }
        // overlong, surrogate and out-of-range rejection
        if (len == 2 && cp < 0x80) return false;
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;
        if (cp > 0x10FFFF) return false;
        i += len;
    }
    return true;
}

std::size_t count_codepoints(std::string_view s) {
    if (!utf8_valid(s)) throw Error("invalid-utf8", "count_codepoints");
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size();) {
        i += static_cast<std::size_t>(seq_len(static_cast<unsigned char>(s[i])));
        ++count;
    }
    return count;
}

char32_t decode_at(std::string_view s, std::size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    int len = seq_len(b0);
    if (len <= 1) {
        ++i;
        return b0;
    }
    char32_t cp = b0 & (0xFF >> (len + 1));
    for (int j = 1; j < len; ++j) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + j]) & 0x3F);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::vector<char32_t> to_codepoints(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) out.push_back(decode_at(s, i));
    return out;
}

std::string nfc(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("icu-init", u_errorName(status));
    std::string out;
    icu::StringByteSink<std::string> sink(&out);
    norm->normalizeUTF8(0, icu::StringPiece(s.data(), static_cast<int32_t>(s.size())), sink,
                        nullptr, status);
    if (U_FAILURE(status)) throw Error("icu-normalize", u_errorName(status));
    return out;
}

bool is_letter(char32_t cp) {
    return u_isalpha(static_cast<UChar32>(cp)) != 0;
}

}  // namespace langkit::uni
