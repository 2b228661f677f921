#pragma once

// Internal JSON helpers. nlohmann types stay out of public headers so the
// installed package carries no vendor dependency.

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "langkit/error.hpp"

namespace langkit::jsonio {

using ojson = nlohmann::ordered_json;

inline ojson load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io-open", "cannot open " + path.string());
    try {
        return ojson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("json-parse", path.string() + ": " + e.what());
    }
}

// Atomic-ish write: temp file in the same directory, then rename.
inline void save_file(const ojson& j, const std::filesystem::path& path, int indent = 2) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io-write", "cannot write " + tmp.string());
        out << j.dump(indent) << '\n';
        if (!out) throw Error("io-write", "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline ojson parse(std::string_view text, const std::string& what) {
    try {
        return ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("json-parse", what + ": " + e.what());
    }
}

inline std::string get_str(const ojson& j, const char* key, const std::string& fallback = {}) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_string()) throw Error("json-type", std::string(key) + " must be a string");
    return it->get<std::string>();
}

}  // namespace langkit::jsonio
