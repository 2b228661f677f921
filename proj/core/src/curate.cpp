#include "langkit/curate.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <unordered_set>

#include "jsonio.hpp"
#include "langkit/error.hpp"
#include "langkit/unicode.hpp"

namespace langkit::curate {

namespace {

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Case-insensitive label-suffix match: "example.com" matches itself and any
// subdomain; "com" matches every .com domain.
bool domain_matches(std::string_view domain, const std::vector<std::string>& entries) {
    if (domain.empty()) return false;
    std::string d = lower_ascii(domain);
    for (const auto& raw : entries) {
        std::string e = lower_ascii(raw);
        if (e.empty()) continue;
        if (d == e) return true;
        if (d.size() > e.size() && d.compare(d.size() - e.size(), e.size(), e) == 0 &&
            d[d.size() - e.size() - 1] == '.')
            return true;
    }
    return false;
}

// Mean codepoint count over all newline-split lines.
double mean_line_chars(std::string_view text) {
    std::size_t lines = 1, chars = 0, line_chars = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = uni::decode_at(text, i);
        if (cp == '\n') {
            ++lines;
            chars += line_chars;
            line_chars = 0;
        } else {
            ++line_chars;
        }
    }
    chars += line_chars;
    return static_cast<double>(chars) / static_cast<double>(lines);
}

// Fraction of non-empty lines that repeat an earlier line.
double dup_line_ratio(std::string_view text) {
    std::size_t total = 0;
    std::unordered_set<std::string_view> seen;
    std::size_t start = 0;
    auto take = [&](std::size_t end) {
        std::string_view line = text.substr(start, end - start);
        if (!line.empty()) {
            ++total;
            seen.insert(line);
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') {
            take(i);
            start = i + 1;
        }
    }
    take(text.size());
    if (total == 0) return 0.0;
    return static_cast<double>(total - seen.size()) / static_cast<double>(total);
}

char32_t parse_codepoint(const jsonio::ojson& v, const char* key) {
    if (v.is_number_unsigned() || v.is_number_integer())
        return static_cast<char32_t>(v.get<std::uint32_t>());
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        std::string_view sv = s;
        if (sv.starts_with("U+") || sv.starts_with("u+")) sv.remove_prefix(2);
        std::uint32_t cp = 0;
        auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), cp, 16);
        if (ec == std::errc{} && ptr == sv.data() + sv.size())
            return static_cast<char32_t>(cp);
    }
    throw ValidationError("bad-config",
                          std::string(key) + " must be a codepoint int or U+XXXX string");
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

FilterPolicy filter_policy_from_json(std::string_view json_text) {
    jsonio::ojson j = jsonio::parse(json_text, "filter policy");
    FilterPolicy p;
    if (auto it = j.find("target_script_range"); it != j.end()) {
        if (!it->is_object() || !it->contains("lo") || !it->contains("hi"))
            throw ValidationError("bad-config", "target_script_range needs lo and hi");
        p.target_script_range.lo = parse_codepoint((*it)["lo"], "lo");
        p.target_script_range.hi = parse_codepoint((*it)["hi"], "hi");
    }
    if (j.contains("min_script_ratio")) p.min_script_ratio = j["min_script_ratio"].get<double>();
    if (j.contains("min_doc_chars")) p.min_doc_chars = j["min_doc_chars"].get<std::uint64_t>();
    if (j.contains("max_doc_chars")) p.max_doc_chars = j["max_doc_chars"].get<std::uint64_t>();
    if (j.contains("min_mean_line_chars"))
        p.min_mean_line_chars = j["min_mean_line_chars"].get<double>();
    if (j.contains("max_dup_line_ratio"))
        p.max_dup_line_ratio = j["max_dup_line_ratio"].get<double>();
    if (j.contains("domain_allow"))
        p.domain_allow = j["domain_allow"].get<std::vector<std::string>>();
    if (j.contains("domain_deny"))
        p.domain_deny = j["domain_deny"].get<std::vector<std::string>>();

    if (p.target_script_range.lo > p.target_script_range.hi)
        throw ValidationError("bad-config", "script range lo > hi");
    if (p.min_doc_chars > p.max_doc_chars)
        throw ValidationError("bad-config", "min_doc_chars > max_doc_chars");
    if (p.min_script_ratio < 0.0 || p.min_script_ratio > 1.0 ||
        p.max_dup_line_ratio < 0.0 || p.max_dup_line_ratio > 1.0)
        throw ValidationError("bad-config", "ratios must lie in [0,1]");
    if (p.min_mean_line_chars < 0.0)
        throw ValidationError("bad-config", "min_mean_line_chars must be >= 0");
    return p;
}

double script_ratio(std::string_view text, ScriptRange range) {
    std::size_t letters = 0, in_range = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = uni::decode_at(text, i);
        if (!uni::is_letter(cp)) continue;
        ++letters;
        if (cp >= range.lo && cp <= range.hi) ++in_range;
    }
    if (letters == 0) return 0.0;
    return static_cast<double>(in_range) / static_cast<double>(letters);
}

FilterOutcome apply_filters(const corpus::Document& doc, const FilterPolicy& policy) {
    auto fail = [](const char* rule) { return FilterOutcome{false, rule}; };

    if (domain_matches(doc.domain, policy.domain_deny)) return fail("domain_deny");
    if (!policy.domain_allow.empty() && !domain_matches(doc.domain, policy.domain_allow))
        return fail("domain_allow");
    if (doc.char_len < policy.min_doc_chars) return fail("min_doc_chars");
    if (doc.char_len > policy.max_doc_chars) return fail("max_doc_chars");
    if (script_ratio(doc.text, policy.target_script_range) < policy.min_script_ratio)
        return fail("min_script_ratio");
    if (mean_line_chars(doc.text) < policy.min_mean_line_chars)
        return fail("min_mean_line_chars");
    if (dup_line_ratio(doc.text) > policy.max_dup_line_ratio)
        return fail("max_dup_line_ratio");
    return {true, "pass"};
}

std::string filter_stats_to_json(const FilterStats& stats) {
    jsonio::ojson j;
    j["input_count"] = stats.input_count;
    j["kept_count"] = stats.kept_count;
    jsonio::ojson rej = jsonio::ojson::object();
    for (const auto& [rule, count] : stats.rejections) rej[rule] = count;
    j["rejections"] = rej;
    return j.dump(2) + "\n";
}

std::pair<corpus::ShardManifest, FilterStats> filter_corpus(
    const std::filesystem::path& manifest_path, const FilterPolicy& policy,
    const std::filesystem::path& out_dir, std::uint64_t max_per_shard,
    std::optional<std::int64_t> epoch_s) {
    corpus::CorpusReader reader(manifest_path);
    corpus::ShardWriter writer(out_dir, max_per_shard, epoch_s);
    FilterStats stats;
    while (auto doc = reader.next()) {
        ++stats.input_count;
        FilterOutcome outcome = apply_filters(*doc, policy);
        if (outcome.kept) {
            writer.add(*doc);
            ++stats.kept_count;
        } else {
            ++stats.rejections[outcome.reason];
        }
    }
    return {writer.finish(), stats};
}

std::vector<std::string> load_domain_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io-open", "cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        out.push_back(line.substr(start));
    }
    return out;
}

MixSpec mix_spec_from_json(std::string_view json_text, const std::filesystem::path& base_dir) {
    jsonio::ojson j = jsonio::parse(json_text, "mix spec");
    MixSpec spec;
    if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty())
        throw ValidationError("bad-config", "mix spec needs a non-empty sources array");
    for (const auto& s : j["sources"]) {
        MixSource src;
        std::filesystem::path p = jsonio::get_str(s, "manifest");
        if (p.empty()) throw ValidationError("bad-config", "mix source needs a manifest path");
        src.manifest = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        if (!s.contains("weight"))
            throw ValidationError("bad-config", "mix source needs a weight");
        src.weight = s["weight"].get<double>();
        spec.sources.push_back(std::move(src));
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("target_docs"))
        spec.target_docs = j["target_docs"].get<std::uint64_t>();
    return spec;
}

std::string mix_report_to_json(const MixReport& report) {
    jsonio::ojson j;
    j["total"] = report.total;
    j["per_source"] = report.per_source;
    j["ids_remapped"] = report.ids_remapped;
    return j.dump(2) + "\n";
}

std::pair<corpus::ShardManifest, MixReport> mix_corpora(
    const MixSpec& spec, const std::filesystem::path& out_dir,
    std::uint64_t max_per_shard, std::optional<std::int64_t> epoch_s) {
    if (spec.sources.empty()) throw Error("no-input", "mix spec has no sources");

    double weight_sum = 0.0;
    bool any_positive = false;
    for (const auto& s : spec.sources) {
        if (s.weight < 0.0) throw ValidationError("bad-config", "negative mix weight");
        weight_sum += s.weight;
        any_positive = any_positive || s.weight > 0.0;
    }
    if (!any_positive) throw ValidationError("bad-config", "all mix weights are zero");
    if (std::abs(weight_sum - 1.0) > 1e-9)
        throw ValidationError("bad-config", "mix weights must sum to 1");

    struct Source {
        std::unique_ptr<corpus::CorpusReader> reader;
        std::optional<corpus::Document> buffered;
        double weight;
    };
    std::vector<Source> sources;
    for (const auto& s : spec.sources) {
        Source src;
        src.reader = std::make_unique<corpus::CorpusReader>(s.manifest);
        src.buffered = src.reader->next();
        src.weight = s.weight;
        sources.push_back(std::move(src));
    }
    bool any_docs = std::any_of(sources.begin(), sources.end(),
                                [](const Source& s) { return s.buffered.has_value(); });
    if (!any_docs) throw Error("no-input", "all mix sources are empty");

    MixReport report;
    report.per_source.assign(sources.size(), 0);
    corpus::ShardWriter writer(out_dir, max_per_shard, epoch_s);
    std::mt19937_64 rng(spec.seed);
    std::unordered_set<std::string> emitted_ids;

    const bool single_source = sources.size() == 1;
    while (!spec.target_docs || report.total < *spec.target_docs) {
        double active_weight = 0.0;
        for (const auto& s : sources)
            if (s.buffered) active_weight += s.weight;
        if (active_weight <= 0.0) break;

        double u = uniform01(rng) * active_weight;
        std::size_t pick = sources.size();
        double cum = 0.0;
        for (std::size_t i = 0; i < sources.size(); ++i) {
            if (!sources[i].buffered || sources[i].weight <= 0.0) continue;
            cum += sources[i].weight;
            if (u < cum) {
                pick = i;
                break;
            }
        }
        if (pick == sources.size()) {
            // numerical edge: u landed on the upper boundary; take the last
            // active positive-weight source
            for (std::size_t i = sources.size(); i-- > 0;) {
                if (sources[i].buffered && sources[i].weight > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick == sources.size()) break;
        }

        corpus::Document doc = std::move(*sources[pick].buffered);
        sources[pick].buffered = sources[pick].reader->next();

        if (!single_source && !emitted_ids.insert(doc.id).second) {
            doc.id = "s" + std::to_string(pick) + ":" + doc.id;
            emitted_ids.insert(doc.id);
            ++report.ids_remapped;
        }
        writer.add(doc);
        ++report.total;
        ++report.per_source[pick];
    }
    return {writer.finish(), report};
}

}  // namespace langkit::curate
