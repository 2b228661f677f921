#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "langkit/corpus.hpp"

namespace langkit::curate {

// Inclusive codepoint interval; defaults to the Thai block.
struct ScriptRange {
    char32_t lo = 0x0E00;
    char32_t hi = 0x0E7F;
};

struct FilterPolicy {
    ScriptRange target_script_range;
    double min_script_ratio = 0.6;
    std::uint64_t min_doc_chars = 200;
    std::uint64_t max_doc_chars = 1000000;
    double min_mean_line_chars = 30.0;
    double max_dup_line_ratio = 0.3;
    std::vector<std::string> domain_allow;
    std::vector<std::string> domain_deny;   // deny wins over allow
};

// Parses the policy JSON; absent keys keep defaults. Script bounds accept
// integers or "U+XXXX" strings. Throws ValidationError on inconsistent values.
FilterPolicy filter_policy_from_json(std::string_view json_text);

// In-range letters over all letters (general category L*); 0 when the text
// has no letters at all.
double script_ratio(std::string_view text, ScriptRange range);

struct FilterOutcome {
    bool kept = false;
    std::string reason;   // first failing rule name, or "pass"
};

// Rule order, fixed as external contract: domain_deny, domain_allow,
// min_doc_chars, max_doc_chars, min_script_ratio, min_mean_line_chars,
// max_dup_line_ratio. Reason codes are these rule names.
FilterOutcome apply_filters(const corpus::Document& doc, const FilterPolicy& policy);

struct FilterStats {
    std::uint64_t input_count = 0;
    std::uint64_t kept_count = 0;
    std::map<std::string, std::uint64_t> rejections;   // rule name -> count
};

std::string filter_stats_to_json(const FilterStats& stats);

// Streams a corpus through apply_filters; kept docs preserve input order.
std::pair<corpus::ShardManifest, FilterStats> filter_corpus(
    const std::filesystem::path& manifest_path, const FilterPolicy& policy,
    const std::filesystem::path& out_dir, std::uint64_t max_per_shard = 100000,
    std::optional<std::int64_t> epoch_s = std::nullopt);

// One domain per line, '#' starts a comment, blank lines ignored.
std::vector<std::string> load_domain_list(const std::filesystem::path& path);

struct MixSource {
    std::filesystem::path manifest;
    double weight = 0.0;
};

struct MixSpec {
    std::vector<MixSource> sources;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> target_docs;
};

// Parses {"sources":[{"manifest":...,"weight":...}],"seed":...,"target_docs":...}.
// Relative manifest paths resolve against base_dir.
MixSpec mix_spec_from_json(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});

struct MixReport {
    std::uint64_t total = 0;
    std::vector<std::uint64_t> per_source;
    std::uint64_t ids_remapped = 0;   // cross-source id collisions
};

std::string mix_report_to_json(const MixReport& report);

// Interleaves sources document by document: each draw picks a source from the
// seeded PRNG stream (std::mt19937_64) according to the weights, renormalized
// over non-exhausted sources; each source is read sequentially. Identical
// spec and seed give byte-identical output. Colliding ids from later sources
// are prefixed "s<index>:".
std::pair<corpus::ShardManifest, MixReport> mix_corpora(
    const MixSpec& spec, const std::filesystem::path& out_dir,
    std::uint64_t max_per_shard = 100000,
    std::optional<std::int64_t> epoch_s = std::nullopt);

}  // namespace langkit::curate
