#include "langkit/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "jsonio.hpp"
#include "langkit/error.hpp"
#include "langkit/hash.hpp"
#include "langkit/unicode.hpp"

namespace langkit::dedup {

namespace {

constexpr std::uint64_t kMersenne61 = (1ull << 61) - 1;

// (a·x + b) mod (2^61 − 1) with 128-bit folding; 2^61 ≡ 1 (mod p).
inline std::uint64_t perm_hash(std::uint64_t a, std::uint64_t b, std::uint64_t x) {
    unsigned __int128 v = static_cast<unsigned __int128>(a) * x + b;
    v = (v & kMersenne61) + (v >> 61);
    v = (v & kMersenne61) + (v >> 61);
    auto r = static_cast<std::uint64_t>(v);
    if (r >= kMersenne61) r -= kMersenne61;
    return r;
}

// Deterministic (a_i, b_i) streams: a in [1, p−1], b in [0, p−1].
struct PermParams {
    std::vector<std::uint64_t> a, b;
};

PermParams draw_permutations(std::uint32_t k, std::uint64_t seed) {
    std::mt19937_64 rng(hash::mix64(seed));
    auto draw61 = [&]() {
        // top 61 bits; values equal to p rejected for uniformity mod p
        while (true) {
            std::uint64_t v = rng() >> 3;
            if (v != kMersenne61) return v;
        }
    };
    PermParams p;
    p.a.reserve(k);
    p.b.reserve(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        std::uint64_t a;
        do {
            a = draw61();
        } while (a == 0);
        p.a.push_back(a);
        p.b.push_back(draw61());
    }
    return p;
}

// Disjoint-set forest with path halving.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

template <typename Id, typename Verify>
std::vector<std::vector<std::string>> cluster_pairs(
    const std::vector<Id>& ids, std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs,
    const Verify& verified) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    UnionFind uf(ids.size());
    for (auto [i, j] : pairs)
        if (verified(i, j)) uf.unite(i, j);

    std::unordered_map<std::size_t, std::vector<std::string>> roots;
    for (std::size_t i = 0; i < ids.size(); ++i)
        roots[uf.find(i)].push_back(ids[i]);

    std::vector<std::vector<std::string>> clusters;
    for (auto& [root, members] : roots) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        clusters.push_back(std::move(members));
    }
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return clusters;
}

}  // namespace

ShingleSet shingle(std::string_view normalized_text, int n, std::uint64_t seed) {
    if (n < 1) throw Error("bad-config", "shingle width must be >= 1");

    // collapse whitespace runs to a single space so line structure does not
    // perturb similarity
    std::string flat;
    flat.reserve(normalized_text.size());
    bool pending = false;
    std::size_t i = 0;
    while (i < normalized_text.size()) {
        char32_t cp = uni::decode_at(normalized_text, i);
        if (uni::is_ascii_space(cp)) {
            if (!flat.empty()) pending = true;
            continue;
        }
        if (pending) {
            flat.push_back(' ');
            pending = false;
        }
        uni::append_utf8(flat, cp);
    }

    // byte offsets of each codepoint start, plus end sentinel
    std::vector<std::size_t> starts;
    for (std::size_t pos = 0; pos < flat.size();) {
        starts.push_back(pos);
        uni::decode_at(flat, pos);
    }
    starts.push_back(flat.size());

    ShingleSet out;
    out.n = n;
    out.seed = seed;
    const std::size_t cp_len = starts.size() - 1;
    if (cp_len < static_cast<std::size_t>(n)) return out;

    out.hashes.reserve(cp_len - n + 1);
    for (std::size_t s = 0; s + n <= cp_len; ++s) {
        std::string_view gram(flat.data() + starts[s], starts[s + n] - starts[s]);
        out.hashes.push_back(hash::bytes64(gram, seed));
    }
    std::sort(out.hashes.begin(), out.hashes.end());
    out.hashes.erase(std::unique(out.hashes.begin(), out.hashes.end()), out.hashes.end());
    return out;
}

double exact_jaccard(const ShingleSet& a, const ShingleSet& b) {
    if (a.hashes.empty() && b.hashes.empty()) return 1.0;
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.hashes.size() && j < b.hashes.size()) {
        if (a.hashes[i] == b.hashes[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a.hashes[i] < b.hashes[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    std::size_t uni = a.hashes.size() + b.hashes.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MinHashSignature minhash_signature(const ShingleSet& s, std::uint32_t k,
                                   std::uint64_t seed) {
    if (k == 0) throw Error("bad-config", "k must be >= 1");
    if (s.hashes.empty()) throw Error("empty-shingle-set");

    PermParams perms = draw_permutations(k, seed);
    MinHashSignature sig;
    sig.k = k;
    sig.seed = seed;
    sig.n = s.n;
    sig.mins.assign(k, ~0ull);
    for (std::uint32_t i = 0; i < k; ++i) {
        std::uint64_t best = ~0ull;
        const std::uint64_t a = perms.a[i], b = perms.b[i];
        for (std::uint64_t x : s.hashes) best = std::min(best, perm_hash(a, b, x));
        sig.mins[i] = best;
    }
    return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    if (!a.compatible(b)) throw Error("incompatible-signatures");
    std::uint32_t match = 0;
    for (std::uint32_t i = 0; i < a.k; ++i)
        if (a.mins[i] == b.mins[i]) ++match;
    return static_cast<double>(match) / static_cast<double>(a.k);
}

std::vector<std::uint64_t> lsh_band_keys(const MinHashSignature& sig, const LshParams& p) {
    if (p.bands == 0 || p.rows == 0 || p.bands * p.rows != sig.k)
        throw Error("bad-config", "bands*rows must equal signature length");

    std::vector<std::uint64_t> keys;
    keys.reserve(p.bands);
    std::string buf;
    buf.reserve(p.rows * 8);
    for (std::uint32_t band = 0; band < p.bands; ++band) {
        buf.clear();
        for (std::uint32_t r = 0; r < p.rows; ++r) {
            std::uint64_t v = sig.mins[band * p.rows + r];
            for (int byte = 0; byte < 8; ++byte)
                buf.push_back(static_cast<char>((v >> (8 * byte)) & 0xFF));
        }
        keys.push_back(hash::bytes64(buf, band));
    }
    return keys;
}

double lsh_candidate_probability(double s, const LshParams& p) {
    return 1.0 - std::pow(1.0 - std::pow(s, p.rows), p.bands);
}

std::vector<std::vector<std::string>> find_duplicate_clusters(
    const std::vector<std::pair<std::string, MinHashSignature>>& sigs,
    const LshParams& p, double tau) {
    if (tau <= 0.0 || tau > 1.0) throw Error("bad-config", "tau must be in (0,1]");
    if (sigs.empty()) return {};
    std::vector<std::string> ids;
    ids.reserve(sigs.size());
    for (const auto& [id, sig] : sigs) {
        if (!sigs.front().second.compatible(sig)) throw Error("incompatible-signatures");
        ids.push_back(id);
    }

    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
    for (std::uint32_t i = 0; i < sigs.size(); ++i)
        for (std::uint64_t key : lsh_band_keys(sigs[i].second, p))
            buckets[key].push_back(i);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (const auto& [key, members] : buckets)
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j)
                pairs.emplace_back(std::min(members[i], members[j]),
                                   std::max(members[i], members[j]));

    return cluster_pairs(ids, std::move(pairs), [&](std::uint32_t i, std::uint32_t j) {
        return estimate_jaccard(sigs[i].second, sigs[j].second) >= tau;
    });
}

std::vector<std::vector<std::string>> brute_force_clusters(
    const std::vector<std::pair<std::string, ShingleSet>>& sets, double tau) {
    if (tau <= 0.0 || tau > 1.0) throw Error("bad-config", "tau must be in (0,1]");
    std::vector<std::string> ids;
    ids.reserve(sets.size());
    for (const auto& [id, s] : sets) ids.push_back(id);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (std::uint32_t i = 0; i < sets.size(); ++i)
        for (std::uint32_t j = i + 1; j < sets.size(); ++j)
            pairs.emplace_back(i, j);

    return cluster_pairs(ids, std::move(pairs), [&](std::uint32_t i, std::uint32_t j) {
        return exact_jaccard(sets[i].second, sets[j].second) >= tau;
    });
}

DedupConfig dedup_config_from_json(std::string_view json_text) {
    jsonio::ojson j = jsonio::parse(json_text, "dedup config");
    DedupConfig cfg;
    if (j.contains("n")) cfg.n = j["n"].get<int>();
    if (j.contains("k")) cfg.k = j["k"].get<std::uint32_t>();
    if (j.contains("bands")) cfg.bands = j["bands"].get<std::uint32_t>();
    if (j.contains("rows")) cfg.rows = j["rows"].get<std::uint32_t>();
    if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (cfg.n < 1) throw ValidationError("bad-config", "dedup n must be >= 1");
    if (cfg.k == 0 || cfg.bands == 0 || cfg.rows == 0 || cfg.bands * cfg.rows != cfg.k)
        throw ValidationError("bad-config", "dedup requires bands*rows == k");
    if (cfg.tau <= 0.0 || cfg.tau > 1.0)
        throw ValidationError("bad-config", "dedup tau must be in (0,1]");
    return cfg;
}

std::string report_to_json(const DedupReport& report) {
    jsonio::ojson j;
    j["input_count"] = report.input_count;
    j["kept_count"] = report.kept_count;
    j["removed_count"] = report.removed_count;
    j["short_bypassed"] = report.short_bypassed;
    jsonio::ojson hist = jsonio::ojson::object();
    for (const auto& [size, count] : report.cluster_size_histogram)
        hist[std::to_string(size)] = count;
    j["cluster_size_histogram"] = hist;
    j["params"] = {{"n", report.params.n},       {"k", report.params.k},
                   {"bands", report.params.bands}, {"rows", report.params.rows},
                   {"tau", report.params.tau},   {"seed", report.params.seed}};
    return j.dump(2) + "\n";
}

std::pair<corpus::ShardManifest, DedupReport> deduplicate(
    const std::filesystem::path& manifest_path, const DedupConfig& cfg,
    const std::filesystem::path& out_dir, std::uint64_t max_per_shard,
    std::optional<std::int64_t> epoch_s) {
    std::vector<corpus::Document> docs = corpus::read_all(manifest_path);

    DedupReport report;
    report.params = cfg;
    report.input_count = docs.size();

    std::vector<std::pair<std::string, MinHashSignature>> sigs;
    sigs.reserve(docs.size());
    for (const auto& doc : docs) {
        ShingleSet s = shingle(doc.text, cfg.n, cfg.seed);
        if (s.hashes.empty()) {
            ++report.short_bypassed;
            continue;
        }
        sigs.emplace_back(doc.id, minhash_signature(s, cfg.k, cfg.seed));
    }

    auto clusters = find_duplicate_clusters(sigs, {cfg.bands, cfg.rows}, cfg.tau);

    std::unordered_map<std::string, bool> removed;
    for (const auto& cluster : clusters) {
        ++report.cluster_size_histogram[cluster.size()];
        // cluster is sorted; the first member is the kept representative
        for (std::size_t i = 1; i < cluster.size(); ++i) removed[cluster[i]] = true;
    }

    corpus::ShardWriter writer(out_dir, max_per_shard, epoch_s);
    for (const auto& doc : docs) {
        if (removed.count(doc.id)) {
            ++report.removed_count;
            continue;
        }
        writer.add(doc);
        ++report.kept_count;
    }
    return {writer.finish(), report};
}

}  // namespace langkit::dedup
