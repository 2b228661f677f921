#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace langkit::tok {

enum class Provenance { trained, imported, merged };

std::string to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

// Subword vocabulary. Immutable once built; ids are positions in `tokens`.
struct SubwordVocab {
    std::vector<std::string> tokens;
    std::vector<std::pair<std::string, std::string>> merges;
    bool byte_fallback = false;
    Provenance provenance = Provenance::trained;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const SubwordVocab&) const = default;
};

// Trains a byte-pair vocabulary: base alphabet (all 256 bytes when
// byte_fallback, else the observed characters) extended by greedy
// highest-frequency adjacent-pair merges until `target_vocab_size` is reached
// or no pair occurs at least twice. Ties break on the merged token string, so
// two runs on the same corpus are byte-identical.
SubwordVocab train_bpe(const std::vector<std::string>& texts,
                       std::size_t target_vocab_size,
                       bool byte_fallback = true);

// Same trainer fed from a shard manifest produced by the corpus module.
SubwordVocab train_bpe_manifest(const std::string& manifest_path,
                                std::size_t target_vocab_size,
                                bool byte_fallback = true);

// Appends the addon tokens missing from base, in addon id order. Base ids are
// unchanged; the result carries no merge table.
SubwordVocab merge_vocabs(const SubwordVocab& base, const SubwordVocab& addon);

// Greedy longest-match encoder over the token inventory. With byte_fallback
// the 256 single-byte tokens guarantee total coverage and an exact byte
// round-trip; without it an unmatched position throws "uncovered-input".
class Encoder {
  public:
    explicit Encoder(const SubwordVocab& vocab);

    std::vector<std::uint32_t> encode(std::string_view text) const;
    std::string decode(const std::vector<std::uint32_t>& ids) const;
    const SubwordVocab& vocab() const { return *vocab_; }

  private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept {
            return std::hash<std::string_view>{}(s);
        }
    };

    const SubwordVocab* vocab_;
    std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> ids_;
    std::size_t max_token_len_ = 0;
};

std::vector<std::uint32_t> encode(const SubwordVocab& vocab, std::string_view text);
std::string decode(const SubwordVocab& vocab, const std::vector<std::uint32_t>& ids);

// Relative token efficiency of a model vocabulary against a reference
// vocabulary on one corpus: 100 * reference_count / model_count. Above 100
// means the model tokenizer spends fewer tokens on the same text.
struct EfficiencyReport {
    std::uint64_t token_count_model = 0;
    std::uint64_t token_count_reference = 0;
    double efficiency_pct = 0.0;
    std::string corpus_id;
};

EfficiencyReport token_efficiency(const SubwordVocab& model_vocab,
                                  const SubwordVocab& reference_vocab,
                                  const std::vector<std::string>& texts,
                                  const std::string& corpus_id = {});

EfficiencyReport token_efficiency_manifest(const SubwordVocab& model_vocab,
                                           const SubwordVocab& reference_vocab,
                                           const std::string& manifest_path);

std::string efficiency_report_to_json(const EfficiencyReport& report);

// Dictionary for maximal-matching segmentation.
struct Lexicon {
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept {
            return std::hash<std::string_view>{}(s);
        }
    };

    std::unordered_set<std::string, Hash, std::equal_to<>> words;
    std::size_t max_word_len = 0;  // bytes

    void add(std::string word);
    bool contains(std::string_view word) const;
};

Lexicon make_lexicon(const std::vector<std::string>& words);
Lexicon load_lexicon(const std::string& path);

// Greedy longest-match word segmentation. Whitespace always delimits and is
// dropped; a position with no dictionary match starts an out-of-vocabulary run
// that ends where a match or whitespace begins. Concatenating the output
// yields the input minus whitespace.
std::vector<std::string> max_match_segment(std::string_view text, const Lexicon& lex);

// Splits on ASCII whitespace runs. The fallback segmenter for metrics.
std::vector<std::string> whitespace_segment(std::string_view text);

using Segmenter = std::function<std::vector<std::string>(std::string_view)>;

// Vocabulary file I/O: one token per line with "\"->"\\\\" and newline->"\\n"
// escapes, unprintable single-byte tokens rendered "<0xNN>", plus a JSON
// sidecar at <path>.json holding byte_fallback, provenance and merges.
// Importing a bare token file without a sidecar yields provenance "imported"
// and no merges.
void export_vocab(const SubwordVocab& vocab, const std::string& path);
SubwordVocab import_vocab(const std::string& path);

}  // namespace langkit::tok
