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

namespace langkit::dedup {

// Distinct character n-grams of a document, each reduced to a 64-bit hash.
// hashes is sorted and unique; n and seed travel along for compatibility
// checks further down the pipeline.
struct ShingleSet {
    std::vector<std::uint64_t> hashes;
    int n = 0;
    std::uint64_t seed = 0;
};

// Character n-gram shingles over text with whitespace runs collapsed to one
// space. Texts shorter than n codepoints yield an empty set.
ShingleSet shingle(std::string_view normalized_text, int n, std::uint64_t seed);

// |a ∩ b| / |a ∪ b| over the hash sets. Both empty → 1.
double exact_jaccard(const ShingleSet& a, const ShingleSet& b);

struct MinHashSignature {
    std::vector<std::uint64_t> mins;
    std::uint32_t k = 0;
    std::uint64_t seed = 0;
    int n = 0;

    bool compatible(const MinHashSignature& o) const {
        return k == o.k && seed == o.seed && n == o.n;
    }
};

// mins[i] = min over the shingle hashes x of (a_i·x + b_i) mod (2^61−1),
// with (a_i, b_i) drawn deterministically from seed and a_i ≠ 0.
// Throws Error("empty-shingle-set") when s is empty.
MinHashSignature minhash_signature(const ShingleSet& s, std::uint32_t k,
                                   std::uint64_t seed);

// Fraction of matching coordinates; unbiased Jaccard estimate.
// Throws Error("incompatible-signatures") on mismatched (k, seed, n).
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

struct LshParams {
    std::uint32_t bands = 16;
    std::uint32_t rows = 8;
};

// One key per band: a hash of (band index, the band's row slice). Documents
// sharing any band key become candidate pairs. Throws on bands·rows ≠ sig.k.
std::vector<std::uint64_t> lsh_band_keys(const MinHashSignature& sig, const LshParams& p);

// Probability that a pair with Jaccard similarity s shares at least one band:
// 1 − (1 − s^rows)^bands.
double lsh_candidate_probability(double s, const LshParams& p);

// Candidate pairs from shared band keys, verified with estimate_jaccard ≥ tau,
// merged via union-find. Returns components of size ≥ 2; each cluster sorted
// by id, clusters sorted by first id.
std::vector<std::vector<std::string>> find_duplicate_clusters(
    const std::vector<std::pair<std::string, MinHashSignature>>& sigs,
    const LshParams& p, double tau);

// All-pairs exact-Jaccard clustering at the same threshold; the verification
// oracle the LSH path is judged against.
std::vector<std::vector<std::string>> brute_force_clusters(
    const std::vector<std::pair<std::string, ShingleSet>>& sets, double tau);

struct DedupConfig {
    int n = 5;
    std::uint32_t k = 128;
    std::uint32_t bands = 16;
    std::uint32_t rows = 8;
    double tau = 0.8;
    std::uint64_t seed = 12345;
};

// Parses {"n":5,"k":128,"bands":16,"rows":8,"tau":0.8,"seed":12345}; absent
// keys keep their defaults. Throws ValidationError on bad values.
DedupConfig dedup_config_from_json(std::string_view json_text);

struct DedupReport {
    std::uint64_t input_count = 0;
    std::uint64_t kept_count = 0;
    std::uint64_t removed_count = 0;
    std::uint64_t short_bypassed = 0;  // shorter than n, kept unconditionally
    std::map<std::uint64_t, std::uint64_t> cluster_size_histogram;
    DedupConfig params;
};

std::string report_to_json(const DedupReport& report);

// Reads a corpus, clusters near-duplicates, keeps the lexicographically
// smallest id per cluster, writes the kept corpus under out_dir.
std::pair<corpus::ShardManifest, DedupReport> deduplicate(
    const std::filesystem::path& manifest_path, const DedupConfig& cfg,
    const std::filesystem::path& out_dir, std::uint64_t max_per_shard = 100000,
    std::optional<std::int64_t> epoch_s = std::nullopt);

}  // namespace langkit::dedup
