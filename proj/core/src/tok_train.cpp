#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "langkit/corpus.hpp"
#include "langkit/error.hpp"
#include "langkit/tok.hpp"
#include "langkit/unicode.hpp"

namespace langkit::tok {

namespace {

using Sym = std::uint32_t;

std::uint64_t pack(Sym l, Sym r) { return (std::uint64_t(l) << 32) | r; }

struct WordSeq {
    std::vector<Sym> syms;
    std::uint64_t freq = 0;
};

// Whitespace-delimited chunks; merges never cross them.
std::vector<std::pair<std::string, std::uint64_t>> count_words(
    const std::vector<std::string>& texts) {
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& text : texts) {
        std::size_t pos = 0;
        while (pos < text.size()) {
            while (pos < text.size() &&
                   uni::is_ascii_space(static_cast<unsigned char>(text[pos])))
                ++pos;
            std::size_t start = pos;
            while (pos < text.size() &&
                   !uni::is_ascii_space(static_cast<unsigned char>(text[pos])))
                ++pos;
            if (pos > start) ++freq[std::string(text.substr(start, pos - start))];
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> out(freq.begin(), freq.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

SubwordVocab train_bpe(const std::vector<std::string>& texts,
                       std::size_t target_vocab_size,
                       bool byte_fallback) {
    std::size_t total = 0;
    for (const auto& t : texts) total += t.size();
    if (total == 0) throw Error("empty-corpus", "training corpus has no text");

    SubwordVocab vocab;
    vocab.byte_fallback = byte_fallback;
    vocab.provenance = Provenance::trained;

    std::unordered_map<std::string, Sym> id_of;
    auto add_token = [&](std::string t) {
        Sym id = static_cast<Sym>(vocab.tokens.size());
        id_of.emplace(t, id);
        vocab.tokens.push_back(std::move(t));
        return id;
    };

    if (byte_fallback) {
        for (int b = 0; b < 256; ++b) add_token(std::string(1, static_cast<char>(b)));
    } else {
        std::set<char32_t> observed;
        for (const auto& t : texts)
            for (char32_t cp : uni::to_codepoints(t)) observed.insert(cp);
        for (char32_t cp : observed) {
            std::string t;
            uni::append_utf8(t, cp);
            add_token(std::move(t));
        }
    }
    if (target_vocab_size <= vocab.tokens.size())
        throw ValidationError(
            "bad-config", "target_vocab_size " + std::to_string(target_vocab_size) +
                              " does not exceed the base alphabet size " +
                              std::to_string(vocab.tokens.size()));

    std::vector<WordSeq> words;
    for (auto& [word, freq] : count_words(texts)) {
        WordSeq seq;
        seq.freq = freq;
        if (byte_fallback) {
            for (char c : word) seq.syms.push_back(id_of.at(std::string(1, c)));
        } else {
            for (char32_t cp : uni::to_codepoints(word)) {
                std::string t;
                uni::append_utf8(t, cp);
                seq.syms.push_back(id_of.at(t));
            }
        }
        words.push_back(std::move(seq));
    }

    // A pair whose concatenation is already a token cannot grow the
    // vocabulary; once banned it stays banned because tokens are never removed.
    std::unordered_set<std::uint64_t> banned;
    std::unordered_map<std::uint64_t, std::uint64_t> pair_count;

    while (vocab.tokens.size() < target_vocab_size) {
        pair_count.clear();
        for (const auto& w : words)
            for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
                std::uint64_t key = pack(w.syms[i], w.syms[i + 1]);
                if (!banned.contains(key)) pair_count[key] += w.freq;
            }

        bool have_best = false;
        Sym best_l = 0, best_r = 0;
        std::string best_merged;
        while (!have_best) {
            std::uint64_t best_count = 0;
            for (const auto& [key, count] : pair_count)
                best_count = std::max(best_count, count);
            if (best_count < 2) break;  // nothing left occurring twice

            bool found = false;
            for (const auto& [key, count] : pair_count) {
                if (count != best_count) continue;
                Sym l = static_cast<Sym>(key >> 32), r = static_cast<Sym>(key & 0xFFFFFFFF);
                std::string merged = vocab.tokens[l] + vocab.tokens[r];
                if (!found || merged < best_merged ||
                    (merged == best_merged && vocab.tokens[l] < vocab.tokens[best_l])) {
                    best_l = l;
                    best_r = r;
                    best_merged = std::move(merged);
                    found = true;
                }
            }
            if (id_of.contains(best_merged)) {
                std::uint64_t key = pack(best_l, best_r);
                banned.insert(key);
                pair_count.erase(key);
                continue;
            }
            have_best = true;
        }
        if (!have_best) break;

        vocab.merges.emplace_back(vocab.tokens[best_l], vocab.tokens[best_r]);
        Sym merged_id = add_token(best_merged);
        for (auto& w : words) {
            auto& s = w.syms;
            std::size_t out = 0;
            for (std::size_t i = 0; i < s.size();) {
                if (i + 1 < s.size() && s[i] == best_l && s[i + 1] == best_r) {
                    s[out++] = merged_id;
                    i += 2;
                } else {
                    s[out++] = s[i++];
                }
            }
            s.resize(out);
        }
    }

    return vocab;
}

SubwordVocab train_bpe_manifest(const std::string& manifest_path,
                                std::size_t target_vocab_size,
                                bool byte_fallback) {
    std::vector<std::string> texts;
    for (auto& doc : corpus::read_all(manifest_path)) texts.push_back(std::move(doc.text));
    return train_bpe(texts, target_vocab_size, byte_fallback);
}

}  // namespace langkit::tok
