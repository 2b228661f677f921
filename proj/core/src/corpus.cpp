#include "langkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <ctime>

#include "corpus_internal.hpp"
#include "jsonio.hpp"
#include "langkit/error.hpp"
#include "langkit/unicode.hpp"

namespace langkit::corpus {

namespace fs = std::filesystem;
using jsonio::ojson;

std::string normalize_text(std::string_view raw) {
    if (raw.empty()) return {};
    if (!uni::utf8_valid(raw)) throw Error("invalid-utf8", "normalize_text input");

    std::string composed = uni::nfc(raw);

    std::string out;
    out.reserve(composed.size());
    std::string line;
    bool pending_space = false;
    bool first_line = true;

    auto flush_line = [&] {
        if (!first_line) out.push_back('\n');
        out += line;
        first_line = false;
        line.clear();
        pending_space = false;
    };

    std::size_t i = 0;
    const std::size_t n = composed.size();
    while (i < n) {
        char32_t cp = uni::decode_at(composed, i);
        if (cp == '\r') {
            if (i < n && composed[i] == '\n') ++i;
            cp = '\n';
        }
        if (cp == '\n') {
            flush_line();
            continue;
        }
        if (cp == ' ' || cp == '\t') {
            // run of spaces/tabs -> single space; leading run dropped
            if (!line.empty()) pending_space = true;
            continue;
        }
        // Cc controls (C0 and C1) other than the handled \n
        if (cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F)) continue;
        if (pending_space) {
            line.push_back(' ');
            pending_space = false;
        }
        uni::append_utf8(line, cp);
    }
    flush_line();
    return out;
}

std::string registered_domain(std::string_view url_or_host,
                              const std::vector<std::string>* public_suffixes) {
    std::string_view s = url_or_host;
    if (auto pos = s.find("://"); pos != std::string_view::npos) s.remove_prefix(pos + 3);
    if (auto pos = s.find('/'); pos != std::string_view::npos) s = s.substr(0, pos);
    if (auto pos = s.find('@'); pos != std::string_view::npos) s.remove_prefix(pos + 1);
    if (auto pos = s.find(':'); pos != std::string_view::npos) s = s.substr(0, pos);
    if (s.empty()) return {};

    std::string host(s);
    std::transform(host.begin(), host.end(), host.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    while (!host.empty() && host.back() == '.') host.pop_back();
    if (host.empty()) return {};

    auto label_start_from_end = [&](int labels) -> std::size_t {
        std::size_t pos = host.size();
        for (int k = 0; k < labels; ++k) {
            auto dot = host.rfind('.', pos == 0 ? 0 : pos - 1);
            if (dot == std::string::npos) return 0;
            pos = dot;
        }
        return pos == host.size() ? 0 : pos + 1;
    };

    if (public_suffixes) {
        for (const auto& suffix : *public_suffixes) {
            if (suffix.empty()) continue;
            if (host == suffix) return host;
            if (host.size() > suffix.size() + 1 &&
                host.compare(host.size() - suffix.size(), suffix.size(), suffix) == 0 &&
                host[host.size() - suffix.size() - 1] == '.') {
                // suffix plus one more label
                std::size_t end = host.size() - suffix.size() - 1;
                auto dot = host.rfind('.', end == 0 ? 0 : end - 1);
                std::size_t start = (dot == std::string::npos) ? 0 : dot + 1;
                return host.substr(start);
            }
        }
    }
    return host.substr(label_start_from_end(2));
}

namespace detail {

void finalize_document(Document& doc) {
    doc.text = normalize_text(doc.text);
    doc.char_len = static_cast<std::uint64_t>(uni::count_codepoints(doc.text));
    if (doc.domain.empty() && !doc.url.empty()) doc.domain = registered_domain(doc.url);
}

}  // namespace detail

IngestStats ingest_jsonl(const fs::path& path, const JsonlFieldMap& map, const DocSink& sink) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path.string());
    IngestStats stats;
    std::string line;
    std::uint64_t line_no = 0;
    const std::string fname = path.filename().string();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            ++stats.skipped;
            continue;
        }
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++stats.errors;
            continue;
        }
        auto text_it = j.find(map.text);
        if (text_it == j.end() || !text_it->is_string() || text_it->get<std::string>().empty()) {
            ++stats.skipped;
            continue;
        }
        Document doc;
        doc.text = text_it->get<std::string>();
        if (!uni::utf8_valid(doc.text)) {
            ++stats.errors;
            continue;
        }
        if (auto it = j.find(map.id); it != j.end() && it->is_string()) doc.id = *it;
        if (doc.id.empty()) doc.id = fname + ":" + std::to_string(line_no);
        if (auto it = j.find(map.url); it != j.end() && it->is_string()) doc.url = *it;
        if (auto it = j.find(map.lang); it != j.end() && it->is_string()) doc.lang = *it;
        if (auto it = j.find("domain"); it != j.end() && it->is_string()) doc.domain = *it;
        if (auto it = j.find("source"); it != j.end() && it->is_string()) doc.source = *it;
        if (doc.source.empty()) doc.source = fname;
        detail::finalize_document(doc);
        ++stats.docs;
        sink(std::move(doc));
    }
    return stats;
}

std::string to_jsonl_line(const Document& doc) {
    ojson j;
    j["id"] = doc.id;
    if (!doc.url.empty()) j["url"] = doc.url;
    if (!doc.domain.empty()) j["domain"] = doc.domain;
    if (!doc.lang.empty()) j["lang"] = doc.lang;
    j["text"] = doc.text;
    if (!doc.source.empty()) j["source"] = doc.source;
    return j.dump();
}

Document from_jsonl_line(std::string_view line) {
    ojson j = ojson::parse(line);
    Document doc;
    doc.id = jsonio::get_str(j, "id");
    doc.url = jsonio::get_str(j, "url");
    doc.domain = jsonio::get_str(j, "domain");
    doc.lang = jsonio::get_str(j, "lang");
    doc.text = jsonio::get_str(j, "text");
    doc.source = jsonio::get_str(j, "source");
    doc.char_len = static_cast<std::uint64_t>(uni::count_codepoints(doc.text));
    return doc;
}

std::string rfc3339_utc(std::int64_t epoch_s) {
    std::time_t t = static_cast<std::time_t>(epoch_s);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::int64_t stamp_epoch() {
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        char* end = nullptr;
        long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0') return static_cast<std::int64_t>(v);
    }
    return static_cast<std::int64_t>(std::time(nullptr));
}

ShardWriter::ShardWriter(fs::path dir, std::uint64_t max_per_shard,
                         std::optional<std::int64_t> epoch_s)
    : dir_(std::move(dir)), max_per_shard_(max_per_shard), epoch_s_(epoch_s) {
    if (max_per_shard_ == 0) throw Error("bad-config", "max_per_shard must be positive");
    fs::create_directories(dir_);
}

ShardWriter::~ShardWriter() = default;

void ShardWriter::open_next_shard() {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%05zu.jsonl", manifest_.shards.size());
    out_.close();
    out_.open(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("io-write", "cannot open shard " + (dir_ / name).string());
    manifest_.shards.emplace_back(name);
    in_current_ = 0;
}

void ShardWriter::add(const Document& doc) {
    if (finished_) throw Error("use-after-finish", "ShardWriter::add");
    if (manifest_.shards.empty() || in_current_ >= max_per_shard_) open_next_shard();
    out_ << to_jsonl_line(doc) << '\n';
    if (!out_) throw Error("io-write", "short write to shard in " + dir_.string());
    ++in_current_;
    ++manifest_.doc_count;
}

ShardManifest ShardWriter::finish() {
    if (finished_) throw Error("use-after-finish", "ShardWriter::finish");
    finished_ = true;
    out_.close();
    manifest_.schema_version = 1;
    manifest_.created_at = rfc3339_utc(epoch_s_.value_or(stamp_epoch()));
    save_manifest(manifest_, dir_ / "manifest.json");
    return manifest_;
}

ShardManifest write_shards(const std::vector<Document>& docs, const fs::path& dir,
                           std::uint64_t max_per_shard, std::optional<std::int64_t> epoch_s) {
    ShardWriter writer(dir, max_per_shard, epoch_s);
    for (const auto& d : docs) writer.add(d);
    return writer.finish();
}

void save_manifest(const ShardManifest& m, const fs::path& manifest_path) {
    ojson j;
    j["schema_version"] = m.schema_version;
    j["doc_count"] = m.doc_count;
    j["shards"] = m.shards;
    j["created_at"] = m.created_at;
    jsonio::save_file(j, manifest_path);
}

ShardManifest load_manifest(const fs::path& manifest_path) {
    ojson j = jsonio::load_file(manifest_path);
    ShardManifest m;
    m.schema_version = j.value("schema_version", 1);
    m.doc_count = j.value("doc_count", std::uint64_t{0});
    if (auto it = j.find("shards"); it != j.end()) {
        for (const auto& s : *it) m.shards.push_back(s.get<std::string>());
    }
    m.created_at = jsonio::get_str(j, "created_at");
    return m;
}

struct CorpusReader::Impl {
    fs::path dir;
    std::vector<std::string> shards;
    std::size_t shard_idx = 0;
    std::ifstream in;
    std::uint64_t seen = 0;

    bool open_next() {
        while (shard_idx < shards.size()) {
            in.close();
            in.clear();
            in.open(dir / shards[shard_idx], std::ios::binary);
            ++shard_idx;
            if (in) return true;
            throw Error("io-open", "cannot open shard " + (dir / shards[shard_idx - 1]).string());
        }
        return false;
    }
};

CorpusReader::CorpusReader(const fs::path& manifest_path) : impl_(std::make_unique<Impl>()) {
    manifest_ = load_manifest(manifest_path);
    impl_->dir = manifest_path.parent_path();
    impl_->shards = manifest_.shards;
}

CorpusReader::~CorpusReader() = default;

std::optional<Document> CorpusReader::next() {
    std::string line;
    for (;;) {
        if (impl_->in.is_open() && std::getline(impl_->in, line)) {
            if (line.empty()) continue;
            ++impl_->seen;
            return from_jsonl_line(line);
        }
        if (!impl_->open_next()) {
            if (impl_->seen != manifest_.doc_count) {
                throw Error("manifest-integrity",
                            "manifest doc_count=" + std::to_string(manifest_.doc_count) +
                                " but shards hold " + std::to_string(impl_->seen));
            }
            return std::nullopt;
        }
    }
}

std::vector<Document> read_all(const fs::path& manifest_path) {
    CorpusReader reader(manifest_path);
    std::vector<Document> docs;
    docs.reserve(reader.manifest().doc_count);
    while (auto d = reader.next()) docs.push_back(std::move(*d));
    return docs;
}

}  // namespace langkit::corpus
