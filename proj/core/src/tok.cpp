#include "langkit/tok.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "jsonio.hpp"
#include "langkit/corpus.hpp"
#include "langkit/error.hpp"
#include "langkit/unicode.hpp"

namespace langkit::tok {

namespace {

bool printable_ascii(unsigned char c) { return c >= 0x21 && c <= 0x7E; }

std::string hex_byte(unsigned char c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", c);
    return buf;
}

// Tokens that are readable text are written with "\n" and "\\" escapes;
// anything else (raw bytes from byte-level merges, controls, a lone
// unprintable byte) is written as a run of <0xNN> groups.
std::string render_token(const std::string& t) {
    bool clean = t.size() == 1 ? printable_ascii(static_cast<unsigned char>(t[0]))
                               : uni::utf8_valid(t);
    for (char c : t)
        if (static_cast<unsigned char>(c) < 0x20 && c != '\n') clean = false;
    if (!clean) {
        std::string out;
        for (char c : t) out += hex_byte(static_cast<unsigned char>(c));
        return out;
    }
    std::string out;
    out.reserve(t.size());
    for (char c : t) {
        if (c == '\\')
            out += "\\\\";
        else if (c == '\n')
            out += "\\n";
        else
            out += c;
    }
    return out;
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

bool byte_group_run(std::string_view line) {
    if (line.empty() || line.size() % 6 != 0) return false;
    for (std::size_t i = 0; i < line.size(); i += 6)
        if (line.substr(i, 3) != "<0x" || hex_digit(line[i + 3]) < 0 ||
            hex_digit(line[i + 4]) < 0 || line[i + 5] != '>')
            return false;
    return true;
}

std::string parse_token_line(std::string_view line, std::size_t lineno) {
    if (byte_group_run(line)) {
        std::string out;
        for (std::size_t i = 0; i < line.size(); i += 6)
            out += static_cast<char>(hex_digit(line[i + 3]) * 16 + hex_digit(line[i + 4]));
        return out;
    }
    std::string out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '\\') {
            out += line[i];
            continue;
        }
        if (i + 1 >= line.size())
            throw Error("vocab-format",
                        "dangling escape at line " + std::to_string(lineno));
        char next = line[++i];
        if (next == '\\')
            out += '\\';
        else if (next == 'n')
            out += '\n';
        else
            throw Error("vocab-format", "unknown escape \"\\" + std::string(1, next) +
                                            "\" at line " + std::to_string(lineno));
    }
    return out;
}

void check_invariants(const SubwordVocab& v) {
    if (v.byte_fallback) {
        std::vector<bool> seen(256, false);
        for (const auto& t : v.tokens)
            if (t.size() == 1) seen[static_cast<unsigned char>(t[0])] = true;
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            throw Error("vocab-invariant",
                        "byte_fallback vocabulary is missing single-byte tokens");
    }
    std::unordered_set<std::string_view> all(v.tokens.begin(), v.tokens.end());
    for (const auto& [l, r] : v.merges)
        if (!all.contains(l + r))
            throw Error("vocab-invariant", "merge output not in vocabulary: " + l + r);
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::trained: return "trained";
        case Provenance::imported: return "imported";
        case Provenance::merged: return "merged";
    }
    return "trained";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "trained") return Provenance::trained;
    if (s == "imported") return Provenance::imported;
    if (s == "merged") return Provenance::merged;
    throw Error("vocab-format", "unknown provenance \"" + std::string(s) + "\"");
}

SubwordVocab merge_vocabs(const SubwordVocab& base, const SubwordVocab& addon) {
    if (base.byte_fallback != addon.byte_fallback)
        throw Error("incompatible-vocab",
                    "cannot merge vocabularies with different byte_fallback settings");
    SubwordVocab out;
    out.tokens = base.tokens;
    out.byte_fallback = base.byte_fallback;
    out.provenance = Provenance::merged;
    std::unordered_set<std::string_view> have(base.tokens.begin(), base.tokens.end());
    for (const auto& t : addon.tokens)
        if (have.insert(t).second) out.tokens.push_back(t);
    return out;
}

Encoder::Encoder(const SubwordVocab& vocab) : vocab_(&vocab) {
    ids_.reserve(vocab.tokens.size());
    for (std::uint32_t id = 0; id < vocab.tokens.size(); ++id) {
        const auto& t = vocab.tokens[id];
        if (t.empty()) throw Error("vocab-invariant", "empty token at id " + std::to_string(id));
        auto [it, fresh] = ids_.emplace(t, id);
        if (!fresh) throw Error("duplicate-token", "\"" + render_token(t) + "\"");
        max_token_len_ = std::max(max_token_len_, t.size());
    }
}

std::vector<std::uint32_t> Encoder::encode(std::string_view text) const {
    std::vector<std::uint32_t> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t limit = std::min(max_token_len_, text.size() - pos);
        bool matched = false;
        for (std::size_t len = limit; len >= 1; --len) {
            auto it = ids_.find(text.substr(pos, len));
            if (it != ids_.end()) {
                out.push_back(it->second);
                pos += len;
                matched = true;
                break;
            }
        }
        if (!matched)
            throw Error("uncovered-input",
                        "no token matches at byte offset " + std::to_string(pos));
    }
    return out;
}

std::string Encoder::decode(const std::vector<std::uint32_t>& ids) const {
    std::string out;
    for (auto id : ids) {
        if (id >= vocab_->tokens.size())
            throw Error("bad-token-id", std::to_string(id));
        out += vocab_->tokens[id];
    }
    return out;
}

std::vector<std::uint32_t> encode(const SubwordVocab& vocab, std::string_view text) {
    return Encoder(vocab).encode(text);
}

std::string decode(const SubwordVocab& vocab, const std::vector<std::uint32_t>& ids) {
    return Encoder(vocab).decode(ids);
}

EfficiencyReport token_efficiency(const SubwordVocab& model_vocab,
                                  const SubwordVocab& reference_vocab,
                                  const std::vector<std::string>& texts,
                                  const std::string& corpus_id) {
    Encoder model(model_vocab);
    Encoder reference(reference_vocab);
    EfficiencyReport rep;
    rep.corpus_id = corpus_id;
    for (const auto& t : texts) {
        rep.token_count_model += model.encode(t).size();
        rep.token_count_reference += reference.encode(t).size();
    }
    if (rep.token_count_model == 0 || rep.token_count_reference == 0)
        throw Error("empty-corpus", "no tokens produced");
    rep.efficiency_pct = 100.0 * static_cast<double>(rep.token_count_reference) /
                         static_cast<double>(rep.token_count_model);
    return rep;
}

EfficiencyReport token_efficiency_manifest(const SubwordVocab& model_vocab,
                                           const SubwordVocab& reference_vocab,
                                           const std::string& manifest_path) {
    std::vector<std::string> texts;
    for (auto& doc : corpus::read_all(manifest_path)) texts.push_back(std::move(doc.text));
    return token_efficiency(model_vocab, reference_vocab, texts, manifest_path);
}

std::string efficiency_report_to_json(const EfficiencyReport& report) {
    jsonio::ojson j;
    j["token_count_model"] = report.token_count_model;
    j["token_count_reference"] = report.token_count_reference;
    j["efficiency_pct"] = report.efficiency_pct;
    j["corpus_id"] = report.corpus_id;
    return j.dump(2);
}

void Lexicon::add(std::string word) {
    if (word.empty()) throw Error("bad-config", "empty lexicon word");
    max_word_len = std::max(max_word_len, word.size());
    words.insert(std::move(word));
}

bool Lexicon::contains(std::string_view word) const { return words.contains(word); }

Lexicon make_lexicon(const std::vector<std::string>& words) {
    Lexicon lex;
    for (const auto& w : words) lex.add(w);
    return lex;
}

Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path);
    Lexicon lex;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!uni::utf8_valid(line)) throw Error("invalid-utf8", "lexicon word in " + path);
        lex.add(line);
    }
    return lex;
}

namespace {

bool ascii_space(char c) { return uni::is_ascii_space(static_cast<unsigned char>(c)); }

// Longest lexicon word starting at pos, 0 when none.
std::size_t match_len(std::string_view text, std::size_t pos, const Lexicon& lex) {
    std::size_t limit = std::min(lex.max_word_len, text.size() - pos);
    for (std::size_t len = limit; len >= 1; --len)
        if (lex.contains(text.substr(pos, len))) return len;
    return 0;
}

}  // namespace

std::vector<std::string> max_match_segment(std::string_view text, const Lexicon& lex) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        if (ascii_space(text[pos])) {
            ++pos;
            continue;
        }
        if (std::size_t len = match_len(text, pos, lex); len > 0) {
            out.emplace_back(text.substr(pos, len));
            pos += len;
            continue;
        }
        // OOV run: whole codepoints until whitespace or a dictionary match.
        std::size_t start = pos;
        while (pos < text.size() && !ascii_space(text[pos]) &&
               (pos == start || match_len(text, pos, lex) == 0)) {
            ++pos;
            while (pos < text.size() &&
                   (static_cast<unsigned char>(text[pos]) & 0xC0) == 0x80)
                ++pos;
        }
        out.emplace_back(text.substr(start, pos - start));
    }
    return out;
}

std::vector<std::string> whitespace_segment(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && ascii_space(text[pos])) ++pos;
        std::size_t start = pos;
        while (pos < text.size() && !ascii_space(text[pos])) ++pos;
        if (pos > start) out.emplace_back(text.substr(start, pos - start));
    }
    return out;
}

void export_vocab(const SubwordVocab& vocab, const std::string& path) {
    check_invariants(vocab);
    auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io-write", "cannot write " + tmp);
        for (const auto& t : vocab.tokens) out << render_token(t) << '\n';
        if (!out) throw Error("io-write", "short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);

    jsonio::ojson side;
    side["byte_fallback"] = vocab.byte_fallback;
    side["provenance"] = to_string(vocab.provenance);
    auto merges = jsonio::ojson::array();
    // merge sides use the token-file rendering so raw bytes stay JSON-safe
    for (const auto& [l, r] : vocab.merges)
        merges.push_back(jsonio::ojson::array({render_token(l), render_token(r)}));
    side["merges"] = std::move(merges);
    jsonio::save_file(side, path + ".json");
}

SubwordVocab import_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path);
    SubwordVocab v;
    v.provenance = Provenance::imported;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string tok = parse_token_line(line, lineno);
        if (tok.empty())
            throw Error("vocab-format", "empty token at line " + std::to_string(lineno));
        if (!seen.insert(tok).second)
            throw Error("duplicate-token", "\"" + render_token(tok) + "\" at line " +
                                               std::to_string(lineno));
        v.tokens.push_back(std::move(tok));
    }
    if (v.tokens.empty()) throw Error("vocab-format", "no tokens in " + path);

    if (std::filesystem::exists(path + ".json")) {
        auto side = jsonio::load_file(path + ".json");
        v.byte_fallback = side.value("byte_fallback", false);
        v.provenance = provenance_from_string(jsonio::get_str(side, "provenance", "imported"));
        if (auto it = side.find("merges"); it != side.end()) {
            for (const auto& m : *it) {
                if (!m.is_array() || m.size() != 2)
                    throw Error("vocab-format", "merge entries must be [left, right] pairs");
                v.merges.emplace_back(parse_token_line(m[0].get<std::string>(), 0),
                                      parse_token_line(m[1].get<std::string>(), 0));
            }
        }
        check_invariants(v);
    }
    return v;
}

}  // namespace langkit::tok
