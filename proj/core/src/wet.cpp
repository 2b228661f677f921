#include "langkit/corpus.hpp"

#include <zlib.h>

#include "corpus_internal.hpp"
#include "langkit/error.hpp"
#include "langkit/unicode.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstring>
#include <map>
#include <optional>
#include <string>

namespace langkit::corpus {
namespace {

// Buffered reader over gzFile. zlib reads plain (uncompressed) files through
// the same handle, so one path serves both ".wet" and ".wet.gz".
// Offsets are positions in the decompressed byte stream.
class GzLineReader {
public:
    explicit GzLineReader(const std::filesystem::path& path) {
        file_ = gzopen(path.string().c_str(), "rb");
        if (!file_) throw Error("io-open", "cannot open " + path.string());
        gzbuffer(file_, 1 << 16);
    }
    ~GzLineReader() {
        if (file_) gzclose(file_);
    }
    GzLineReader(const GzLineReader&) = delete;
    GzLineReader& operator=(const GzLineReader&) = delete;

    std::size_t offset() const { return offset_; }

    // Reads up to and including '\n'; strips "\r\n" or "\n". Returns nullopt at EOF
    // when nothing was read.
    std::optional<std::string> read_line() {
        std::string line;
        while (true) {
            if (pos_ == len_ && !fill()) {
                if (line.empty()) return std::nullopt;
                offset_ += line.size();
                strip_eol(line);
                return line;
            }
            const char* nl = static_cast<const char*>(
                std::memchr(buf_ + pos_, '\n', len_ - pos_));
            if (nl) {
                std::size_t take = static_cast<std::size_t>(nl - (buf_ + pos_)) + 1;
                line.append(buf_ + pos_, take);
                pos_ += take;
                offset_ += take;
                strip_eol(line);
                return line;
            }
            line.append(buf_ + pos_, len_ - pos_);
            offset_ += len_ - pos_;
            pos_ = len_;
        }
    }

    // Reads exactly n bytes; returns the count actually read (short at EOF).
    std::size_t read_exact(std::string& out, std::size_t n) {
        out.clear();
        out.reserve(n);
        while (out.size() < n) {
            if (pos_ == len_ && !fill()) break;
            std::size_t take = std::min(n - out.size(), len_ - pos_);
            out.append(buf_ + pos_, take);
            pos_ += take;
            offset_ += take;
        }
        return out.size();
    }

private:
    static void strip_eol(std::string& s) {
        if (!s.empty() && s.back() == '\n') s.pop_back();
        if (!s.empty() && s.back() == '\r') s.pop_back();
    }

    bool fill() {
        int got = gzread(file_, buf_, sizeof(buf_));
        if (got < 0) {
            int errnum = 0;
            const char* msg = gzerror(file_, &errnum);
            throw Error("io-read", std::string("gzread: ") + (msg ? msg : ""));
        }
        pos_ = 0;
        len_ = static_cast<std::size_t>(got);
        return len_ > 0;
    }

    gzFile file_ = nullptr;
    char buf_[1 << 16];
    std::size_t pos_ = 0;
    std::size_t len_ = 0;
    std::size_t offset_ = 0;
};

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim_ws(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void fatal(const std::filesystem::path& path, std::size_t offset,
                        const std::string& what) {
    throw Error("wet-format", path.filename().string() + ": " + what +
                                  " at byte offset " + std::to_string(offset));
}

}  // namespace

IngestStats ingest_wet(const std::filesystem::path& path, const DocSink& sink) {
    GzLineReader reader(path);
    IngestStats stats;
    const std::string source = path.filename().string();
    std::size_t record_no = 0;

    // one-line pushback, used when a length-less payload scan overreads into
    // the next record's version line
    std::optional<std::string> pushback;
    auto next_line = [&]() -> std::optional<std::string> {
        if (pushback) {
            auto l = std::move(*pushback);
            pushback.reset();
            return l;
        }
        return reader.read_line();
    };

    while (true) {
        // record separator: any run of blank lines
        std::size_t version_offset = reader.offset();
        std::optional<std::string> line;
        while ((line = next_line()) && line->empty())
            version_offset = reader.offset();
        if (!line) break;

        if (!line->starts_with("WARC/"))
            fatal(path, version_offset, "expected record version line, got \"" + *line + '"');
        ++record_no;

        // header block, terminated by a blank line
        std::map<std::string, std::string> headers;
        bool truncated = false;
        while (true) {
            std::size_t header_offset = reader.offset();
            line = next_line();
            if (!line) {
                truncated = true;
                break;
            }
            if (line->empty()) break;
            std::size_t colon = line->find(':');
            if (colon == std::string::npos)
                fatal(path, header_offset, "malformed header line \"" + *line + '"');
            headers[lower_ascii(trim_ws(line->substr(0, colon)))] =
                std::string(trim_ws(std::string_view(*line).substr(colon + 1)));
        }
        if (truncated) {
            ++stats.errors;
            break;
        }

        std::string payload;
        auto cl = headers.find("content-length");
        if (cl != headers.end()) {
            std::size_t want = 0;
            auto [ptr, ec] = std::from_chars(
                cl->second.data(), cl->second.data() + cl->second.size(), want);
            if (ec != std::errc{} || ptr != cl->second.data() + cl->second.size())
                fatal(path, version_offset, "bad Content-Length \"" + cl->second + '"');
            if (reader.read_exact(payload, want) < want) {
                ++stats.errors;
                break;
            }
        } else {
            // no length header: payload runs until the next blank-line + version
            // line boundary or EOF
            bool saw_any = false;
            std::string pending_blanks;
            while ((line = next_line())) {
                if (line->empty()) {
                    pending_blanks += '\n';
                    continue;
                }
                if (line->starts_with("WARC/") && !pending_blanks.empty()) {
                    // next record begins here; hand its version line back
                    pushback = std::move(*line);
                    break;
                }
                if (saw_any) payload += '\n' + pending_blanks;
                pending_blanks.clear();
                payload += *line;
                saw_any = true;
            }
        }

        auto type = headers.find("warc-type");
        if (type != headers.end() && lower_ascii(type->second) != "conversion")
            continue;

        if (trim_ws(payload).empty() ||
            std::all_of(payload.begin(), payload.end(), [](unsigned char c) {
                return std::isspace(c);
            })) {
            ++stats.skipped;
            continue;
        }
        if (!uni::utf8_valid(payload)) {
            ++stats.errors;
            continue;
        }

        Document doc;
        auto rid = headers.find("warc-record-id");
        if (rid != headers.end() && !rid->second.empty()) {
            std::string id = rid->second;
            if (id.front() == '<' && id.back() == '>') id = id.substr(1, id.size() - 2);
            doc.id = id;
        } else {
            doc.id = source + ":" + std::to_string(record_no);
        }
        auto uri = headers.find("warc-target-uri");
        if (uri != headers.end()) doc.url = uri->second;
        doc.text = payload;
        doc.source = source;
        detail::finalize_document(doc);
        sink(std::move(doc));
        ++stats.docs;
    }
    return stats;
}

}  // namespace langkit::corpus
