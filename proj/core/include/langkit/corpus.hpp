#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace langkit::corpus {

// One web/text record; the unit flowing through the pipeline.
// Optional string fields use "" for absent. text is normalized on ingest and
// char_len caches its Unicode scalar count.
struct Document {
    std::string id;
    std::string url;
    std::string domain;
    std::string lang;
    std::string text;
    std::string source;
    std::uint64_t char_len = 0;

    bool operator==(const Document&) const = default;
};

// NFC + newline canonicalization (+ CR/LF -> \n), control characters other
// than \n and \t removed, runs of spaces/tabs collapsed to one space, each
// line trimmed. Idempotent. Input must be valid UTF-8.
std::string normalize_text(std::string_view raw);

// Registered domain of a URL or bare host: last two host labels, lowercased
// ("sub.x.th" -> "x.th"). When a public-suffix list is given and a listed
// suffix matches, the registered domain is the suffix plus one more label.
std::string registered_domain(std::string_view url_or_host,
                              const std::vector<std::string>* public_suffixes = nullptr);

struct IngestStats {
    std::uint64_t docs = 0;
    std::uint64_t skipped = 0;    // missing/empty mapped text field, empty payload
    std::uint64_t errors = 0;     // malformed JSON line, invalid UTF-8, truncated record
};

using DocSink = std::function<void(Document&&)>;

// Maps source JSON field names onto Document fields. "text" is required in
// the source object; the others are picked up when present.
struct JsonlFieldMap {
    std::string text = "text";
    std::string id = "id";
    std::string url = "url";
    std::string lang = "lang";
};

// One Document per valid JSONL line, normalize_text applied, ids synthesized
// as "<filename>:<line>" when absent. Malformed lines are counted, not fatal.
IngestStats ingest_jsonl(const std::filesystem::path& path, const JsonlFieldMap& map,
                         const DocSink& sink);

// WET-style crawl extracts: one Document per conversion record, url/domain
// from WARC-Target-URI. ".gz" input is read through zlib.
IngestStats ingest_wet(const std::filesystem::path& path, const DocSink& sink);

struct ShardManifest {
    int schema_version = 1;
    std::uint64_t doc_count = 0;
    std::vector<std::string> shards;   // relative to the manifest directory
    std::string created_at;            // RFC3339 UTC
};

// Streams documents into "shard-%05d.jsonl" files under dir, at most
// max_per_shard records each, then writes "manifest.json" alongside.
class ShardWriter {
public:
    // epoch_s pins created_at for reproducible runs; by default the
    // SOURCE_DATE_EPOCH environment variable is honored, else wall clock.
    ShardWriter(std::filesystem::path dir, std::uint64_t max_per_shard,
                std::optional<std::int64_t> epoch_s = std::nullopt);
    ~ShardWriter();

    ShardWriter(const ShardWriter&) = delete;
    ShardWriter& operator=(const ShardWriter&) = delete;

    void add(const Document& doc);
    ShardManifest finish();

private:
    void open_next_shard();

    std::filesystem::path dir_;
    std::uint64_t max_per_shard_;
    std::optional<std::int64_t> epoch_s_;
    std::ofstream out_;
    std::uint64_t in_current_ = 0;
    ShardManifest manifest_;
    bool finished_ = false;
};

ShardManifest write_shards(const std::vector<Document>& docs, const std::filesystem::path& dir,
                           std::uint64_t max_per_shard,
                           std::optional<std::int64_t> epoch_s = std::nullopt);

ShardManifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const ShardManifest& m, const std::filesystem::path& manifest_path);

// Sequential pull-based reader over a manifest's shards, in manifest order.
class CorpusReader {
public:
    explicit CorpusReader(const std::filesystem::path& manifest_path);
    ~CorpusReader();

    CorpusReader(const CorpusReader&) = delete;
    CorpusReader& operator=(const CorpusReader&) = delete;

    std::optional<Document> next();
    const ShardManifest& manifest() const { return manifest_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ShardManifest manifest_;
};

// Loads every document of a corpus into memory. Test/desk-scale convenience.
std::vector<Document> read_all(const std::filesystem::path& manifest_path);

// Canonical single-line JSON serialization of a document (the shard format).
std::string to_jsonl_line(const Document& doc);
Document from_jsonl_line(std::string_view line);

// RFC3339 UTC timestamp for an epoch-seconds value.
std::string rfc3339_utc(std::int64_t epoch_s);

// SOURCE_DATE_EPOCH when set, else current wall clock.
std::int64_t stamp_epoch();

}  // namespace langkit::corpus
