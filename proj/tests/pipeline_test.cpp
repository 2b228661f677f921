#include "langkit/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "langkit/corpus.hpp"
#include "langkit/error.hpp"
#include "langkit/hash.hpp"
#include "langkit/metrics.hpp"
#include "langkit/tok.hpp"
#include "testutil.hpp"

using namespace langkit;
using testutil::TempDir;
using testutil::error_code_of;
using testutil::read_file;
using testutil::write_file;
namespace fs = std::filesystem;
using njson = nlohmann::ordered_json;

namespace {

// A jsonl file of synthetic Thai documents, long enough to clear the default
// quality filters.
void make_docs(const fs::path& path, std::size_t count, const std::string& tag,
               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        njson row;
        row["text"] = testutil::random_thai_text(rng, 400);
        row["id"] = tag + std::to_string(1000 + i);
        row["url"] = "https://" + tag + std::to_string(i % 7) + ".example.com/" +
                     std::to_string(i);
        out += row.dump() + "\n";
    }
    write_file(path, out);
}

pipeline::PipelineManifest manifest_from(const fs::path& dir, const njson& doc) {
    fs::path path = dir / "manifest.json";
    write_file(path, doc.dump(2));
    return pipeline::load_pipeline_manifest(path);
}

njson stage(const std::string& name, const njson& config,
            const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    njson s;
    s["name"] = name;
    s["config"] = config;
    s["inputs"] = inputs;
    s["outputs"] = outputs;
    return s;
}

// The full curation chain used by several cases.
njson chain_doc() {
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl"}, {"corpus_a"}),
        stage("ingest", njson::object(), {"b.jsonl"}, {"corpus_b"}),
        stage("dedup", {{"tau", 0.8}}, {"corpus_a"}, {"dedup_a"}),
        stage("filter", njson::object(), {"dedup_a"}, {"clean_a"}),
        stage("mix", {{"weights", {0.6, 0.4}}, {"seed", 9}}, {"clean_a", "corpus_b"},
              {"mixed"}),
        stage("tok-train", {{"target_vocab_size", 300}}, {"mixed"}, {"vocab.json"}),
    });
    return doc;
}

// content hash of every file under dir, except runner bookkeeping
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto rel = fs::relative(entry.path(), dir).generic_string();
        if (rel.rfind(".pipeline/", 0) == 0 || rel.rfind(".quarantine/", 0) == 0) continue;
        files[rel] = hash::sha256_hex(read_file(entry.path()));
    }
    return files;
}

}  // namespace

TEST_CASE("stage name registry is the fixed set") {
    const auto& names = pipeline::stage_names();
    std::vector<std::string> expected = {"ingest",    "dedup",     "filter",
                                         "mix",       "tok-train", "tok-merge",
                                         "tok-efficiency", "exam-eval", "judge-eval",
                                         "metrics"};
    CHECK(names == expected);
    for (const auto& n : expected) CHECK(pipeline::is_stage_name(n));
    CHECK_FALSE(pipeline::is_stage_name("compress"));
    CHECK_FALSE(pipeline::is_stage_name(""));
}

TEST_CASE("manifest loading resolves paths and canonicalizes configs") {
    TempDir dir;
    njson doc;
    doc["workspace"] = "work";
    doc["stages"] = njson::array(
        {stage("tok-train", {{"target_vocab_size", 280}}, {"corpus"}, {"v.json"})});
    auto m = manifest_from(dir.path(), doc);
    CHECK(m.workspace == dir.path() / "work");
    CHECK(m.base_dir == dir.path());
    REQUIRE(m.stages.size() == 1);
    CHECK(m.stages[0].name == "tok-train");
    CHECK(njson::parse(m.stages[0].config_json)["target_vocab_size"] == 280);
    CHECK(m.stages[0].inputs == std::vector<std::string>{"corpus"});
    CHECK(m.stages[0].outputs == std::vector<std::string>{"v.json"});

    SUBCASE("absolute workspace is kept") {
        doc["workspace"] = (dir.path() / "elsewhere").string();
        auto m2 = manifest_from(dir.path(), doc);
        CHECK(m2.workspace == dir.path() / "elsewhere");
    }
    SUBCASE("stage without config gets an empty object") {
        doc["stages"][0].erase("config");
        auto m2 = manifest_from(dir.path(), doc);
        CHECK(m2.stages[0].config_json == "{}");
    }
}

TEST_CASE("manifest loading rejects malformed documents") {
    TempDir dir;
    auto path = dir / "m.json";

    CHECK(error_code_of([&] { pipeline::load_pipeline_manifest(dir / "absent.json"); }) ==
          "bad-config");

    write_file(path, "not json at all");
    CHECK(error_code_of([&] { pipeline::load_pipeline_manifest(path); }) == "json-parse");

    write_file(path, "[1,2]");
    CHECK(error_code_of([&] { pipeline::load_pipeline_manifest(path); }) == "bad-config");

    write_file(path, R"({"workspace": "w"})");
    CHECK(error_code_of([&] { pipeline::load_pipeline_manifest(path); }) == "bad-config");

    write_file(path, R"({"workspace": "w", "stages": [{"name": "dedup", "config": 7}]})");
    CHECK(error_code_of([&] { pipeline::load_pipeline_manifest(path); }) == "bad-config");
}

TEST_CASE("validation rejects structural violations") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 5, "a", 1);

    auto validate_err = [&](const njson& stages) {
        njson doc;
        doc["workspace"] = "ws";
        doc["stages"] = stages;
        std::string message;
        try {
            pipeline::validate_manifest(manifest_from(dir.path(), doc));
        } catch (const ValidationError& e) {
            message = e.what();
        }
        return message;
    };

    SUBCASE("no stages") {
        CHECK(validate_err(njson::array()) != "");
    }
    SUBCASE("unknown stage name") {
        auto msg = validate_err(njson::array(
            {stage("compress", njson::object(), {"a.jsonl"}, {"out"})}));
        CHECK(msg.find("unknown stage") != std::string::npos);
        CHECK(msg.find("compress") != std::string::npos);
    }
    SUBCASE("duplicate output names both stages") {
        auto msg = validate_err(njson::array({
            stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"}),
            stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"}),
        }));
        CHECK(msg.find("stage 2") != std::string::npos);
        CHECK(msg.find("stage 1") != std::string::npos);
        CHECK(msg.find("already written") != std::string::npos);
    }
    SUBCASE("output escaping the workspace") {
        CHECK(validate_err(njson::array(
                  {stage("ingest", njson::object(), {"a.jsonl"}, {"../corpus"})}))
                  .find("inside the workspace") != std::string::npos);
        CHECK(validate_err(njson::array(
                  {stage("ingest", njson::object(), {"a.jsonl"}, {"/tmp/corpus"})}))
                  .find("inside the workspace") != std::string::npos);
    }
    SUBCASE("arity violations") {
        CHECK(validate_err(njson::array({stage("mix", {{"weights", {1.0}}}, {"a.jsonl"},
                                               {"out"})}))
                  .find("at least 2") != std::string::npos);
        CHECK(validate_err(njson::array({stage("dedup", njson::object(),
                                               {"a.jsonl", "a.jsonl"}, {"out"})}))
                  .find("takes 1") != std::string::npos);
        CHECK(validate_err(njson::array({stage("exam-eval",
                                               {{"model", "m"},
                                                {"endpoint", njson::object()}},
                                               {"a.jsonl"}, {"out"})}))
                  .find("2 output") != std::string::npos);
    }
    SUBCASE("stage config errors carry the stage label") {
        auto msg = validate_err(njson::array(
            {stage("tok-train", njson::object(), {"a.jsonl"}, {"v.json"})}));
        CHECK(msg.find("stage 1 (tok-train)") != std::string::npos);
        CHECK(msg.find("target_vocab_size") != std::string::npos);

        msg = validate_err(njson::array({stage(
            "mix", {{"weights", {1.0, 2.0, 3.0}}}, {"a.jsonl", "a.jsonl"}, {"out"})}));
        CHECK(msg.find("2 inputs but 3 weights") != std::string::npos);

        msg = validate_err(njson::array(
            {stage("metrics", {{"metric", "meteor"}}, {"a.jsonl", "a.jsonl"}, {"out"})}));
        CHECK(msg.find("metric must be") != std::string::npos);
    }
    SUBCASE("self-consumption is a cycle") {
        auto msg = validate_err(
            njson::array({stage("dedup", njson::object(), {"x"}, {"x"})}));
        CHECK(msg.find("cycle") != std::string::npos);
        CHECK(msg.find("its own output") != std::string::npos);
    }
    SUBCASE("input produced by a later stage is a cycle naming both stages") {
        auto msg = validate_err(njson::array({
            stage("dedup", njson::object(), {"late"}, {"d1"}),
            stage("filter", njson::object(), {"d1"}, {"late"}),
        }));
        CHECK(msg.find("cycle") != std::string::npos);
        CHECK(msg.find("stage 1 (dedup)") != std::string::npos);
        CHECK(msg.find("stage 2 (filter)") != std::string::npos);
        CHECK(msg.find("runs later") != std::string::npos);
    }
    SUBCASE("unresolved input names the missing path") {
        auto msg = validate_err(njson::array(
            {stage("ingest", njson::object(), {"ghost.jsonl"}, {"corpus"})}));
        CHECK(msg.find("ghost.jsonl") != std::string::npos);
        CHECK(msg.find("neither a prior stage output nor an existing path") !=
              std::string::npos);
    }
}

TEST_CASE("digest_path hashes file bytes and directory listings") {
    TempDir dir;
    write_file(dir / "f.txt", "hello");
    CHECK(pipeline::digest_path(dir / "f.txt") == hash::sha256_hex("hello"));

    fs::create_directories(dir / "d1" / "sub");
    write_file(dir / "d1" / "x.txt", "one");
    write_file(dir / "d1" / "sub" / "y.txt", "two");
    fs::create_directories(dir / "d2" / "sub");
    write_file(dir / "d2" / "x.txt", "one");
    write_file(dir / "d2" / "sub" / "y.txt", "two");

    auto d1 = pipeline::digest_path(dir / "d1");
    CHECK(d1 == pipeline::digest_path(dir / "d2"));  // location-independent

    write_file(dir / "d2" / "sub" / "y.txt", "TWO");
    CHECK(d1 != pipeline::digest_path(dir / "d2"));

    write_file(dir / "d1" / "extra.txt", "");
    CHECK(d1 != pipeline::digest_path(dir / "d1"));

    CHECK(error_code_of([&] { pipeline::digest_path(dir / "ghost"); }) == "io-open");
}

TEST_CASE("curation chain runs end to end through the manifest runner") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 40, "a", 11);
    make_docs(dir / "b.jsonl", 30, "b", 22);
    auto m = manifest_from(dir.path(), chain_doc());

    auto result = pipeline::run_manifest(m, false);
    REQUIRE(result.reports.size() == 6);
    for (const auto& r : result.reports) {
        CHECK_FALSE(r.skipped);
        CHECK(njson::parse(r.report_json).is_object());
    }
    CHECK(njson::parse(result.reports[0].report_json)["docs"] == 40);
    CHECK(njson::parse(result.reports[4].report_json)["total"] == 70);

    // every declared output materialized inside the workspace
    for (const auto& s : m.stages)
        for (const auto& out : s.outputs) CHECK(fs::exists(m.workspace / out));

    // downstream corpus is readable and the trained vocabulary loads
    corpus::CorpusReader reader((m.workspace / "mixed" / "manifest.json"));
    std::size_t docs = 0;
    while (reader.next()) ++docs;
    CHECK(docs == 70);
    auto vocab = tok::import_vocab((m.workspace / "vocab.json").string());
    CHECK(vocab.size() == 300);
}

TEST_CASE("resume skips unchanged stages and digest changes cascade") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 25, "a", 31);
    make_docs(dir / "b.jsonl", 25, "b", 32);
    auto m = manifest_from(dir.path(), chain_doc());

    pipeline::run_manifest(m, false);
    auto again = pipeline::run_manifest(m, true);
    REQUIRE(again.reports.size() == 6);
    for (const auto& r : again.reports) CHECK(r.skipped);

    // touching one source re-runs its consumers but not the untouched branch
    make_docs(dir / "a.jsonl", 26, "a", 33);
    auto partial = pipeline::run_manifest(m, true);
    CHECK_FALSE(partial.reports[0].skipped);  // ingest a
    CHECK(partial.reports[1].skipped);        // ingest b untouched
    CHECK_FALSE(partial.reports[2].skipped);  // dedup depends on corpus_a
    CHECK_FALSE(partial.reports[3].skipped);
    CHECK_FALSE(partial.reports[4].skipped);
    CHECK_FALSE(partial.reports[5].skipped);

    // config change alone also invalidates
    auto doc = chain_doc();
    doc["stages"][5]["config"]["target_vocab_size"] = 301;
    auto m2 = manifest_from(dir.path(), doc);
    auto after_cfg = pipeline::run_manifest(m2, true);
    for (std::size_t i = 0; i < 5; ++i) CHECK(after_cfg.reports[i].skipped);
    CHECK_FALSE(after_cfg.reports[5].skipped);

    // deleting a declared output forces that stage despite matching digests
    fs::remove_all(m2.workspace / "vocab.json");
    auto after_rm = pipeline::run_manifest(m2, true);
    CHECK(after_rm.reports[4].skipped);
    CHECK_FALSE(after_rm.reports[5].skipped);
    CHECK(fs::exists(m2.workspace / "vocab.json"));
}

TEST_CASE("reruns are byte-identical across declared outputs") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 30, "a", 41);
    make_docs(dir / "b.jsonl", 20, "b", 42);
    auto m = manifest_from(dir.path(), chain_doc());

    pipeline::run_manifest(m, false);
    auto first = snapshot(m.workspace);
    REQUIRE(first.size() > 5);

    pipeline::run_manifest(m, false);  // no resume: everything re-executes
    auto second = snapshot(m.workspace);
    CHECK(first == second);

    // and a run in a fresh workspace produces the same bytes for corpus data
    njson doc = chain_doc();
    doc["workspace"] = "ws2";
    auto m2 = manifest_from(dir.path(), doc);
    pipeline::run_manifest(m2, false);
    auto third = snapshot(m2.workspace);
    for (const auto& [rel, digest] : first) {
        INFO(rel);
        REQUIRE(third.count(rel) == 1);
        CHECK(third.at(rel) == digest);
    }
}

TEST_CASE("standalone stage run equals its manifest-embedded run") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 30, "a", 51);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"}),
        stage("dedup", {{"tau", 0.8}, {"seed", 777}}, {"corpus"}, {"deduped"}),
    });
    auto m = manifest_from(dir.path(), doc);
    pipeline::run_manifest(m, false);

    // same stage, same config, driven directly
    fs::path alt = dir / "alt";
    pipeline::run_stage("dedup", R"({"tau": 0.8, "seed": 777})",
                        {m.workspace / "corpus"}, {alt / "deduped"}, dir.path(), 1, true);

    auto in_manifest = snapshot(m.workspace / "deduped");
    auto standalone = snapshot(alt / "deduped");
    CHECK(in_manifest == standalone);
    CHECK(in_manifest.size() >= 2);  // manifest.json + at least one shard
}

TEST_CASE("failed stage quarantines partial outputs and aborts") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 15, "a", 61);
    write_file(dir / "broken.wet", "this is not a web archive record\n");

    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl", "broken.wet"}, {"corpus"}),
        stage("dedup", njson::object(), {"corpus"}, {"deduped"}),
    });
    auto m = manifest_from(dir.path(), doc);

    std::string message;
    try {
        pipeline::run_manifest(m, false);
        FAIL("expected stage failure");
    } catch (const Error& e) {
        CHECK(e.code() == "stage-failed");
        message = e.what();
    }
    CHECK(message.find("stage 1 (ingest)") != std::string::npos);

    // partial corpus moved out of the workspace proper
    CHECK_FALSE(fs::exists(m.workspace / "corpus"));
    CHECK(fs::exists(m.workspace / ".quarantine" / "01-ingest" / "corpus"));
    CHECK(fs::exists(m.workspace / ".pipeline" / "01-ingest.error.json"));
    // downstream stage never ran
    CHECK_FALSE(fs::exists(m.workspace / "deduped"));

    // dropping the bad input lets a resume run complete; nothing is skipped
    // since the failed stage never wrote a completion marker
    njson fixed = doc;
    fixed["stages"][0]["inputs"] = njson::array({"a.jsonl"});
    auto m2 = manifest_from(dir.path(), fixed);
    auto result = pipeline::run_manifest(m2, true);
    CHECK_FALSE(result.reports[0].skipped);
    CHECK_FALSE(result.reports[1].skipped);
    CHECK(fs::exists(m2.workspace / "deduped" / "manifest.json"));
}

TEST_CASE("runtime data errors surface as stage failures, not validation errors") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 10, "a", 71);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"}),
        stage("filter", {{"min_doc_chars", 100000}}, {"corpus"}, {"empty"}),
        stage("tok-train", {{"target_vocab_size", 300}}, {"empty"}, {"v.json"}),
    });
    auto m = manifest_from(dir.path(), doc);
    try {
        pipeline::run_manifest(m, false);
        FAIL("expected stage failure");
    } catch (const Error& e) {
        CHECK(e.code() == "stage-failed");
        CHECK(std::string(e.what()).find("stage 3 (tok-train)") != std::string::npos);
        CHECK(std::string(e.what()).find("empty-corpus") != std::string::npos);
    }
    // the two successful stages kept their outputs and markers
    CHECK(fs::exists(m.workspace / "corpus" / "manifest.json"));
    CHECK(fs::exists(m.workspace / "empty" / "manifest.json"));
    // resuming replays the same failure; completed stages stay on disk
    CHECK(error_code_of([&] { pipeline::run_manifest(m, true); }) == "stage-failed");
    CHECK(fs::exists(m.workspace / "corpus" / "manifest.json"));
}

TEST_CASE("run log records stage events as JSON lines") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 10, "a", 81);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] =
        njson::array({stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"})});
    auto m = manifest_from(dir.path(), doc);
    pipeline::run_manifest(m, false);
    pipeline::run_manifest(m, true);

    auto log = read_file(m.workspace / ".pipeline" / "run.log.jsonl");
    std::vector<njson> events;
    std::size_t pos = 0;
    while (pos < log.size()) {
        auto nl = log.find('\n', pos);
        if (nl == std::string::npos) break;
        events.push_back(njson::parse(log.substr(pos, nl - pos)));
        pos = nl + 1;
    }
    REQUIRE(events.size() == 2);
    CHECK(events[0]["event"] == "stage-done");
    CHECK(events[0]["name"] == "ingest");
    CHECK(events[1]["event"] == "stage-skipped");
}

TEST_CASE("tokenizer stages chain inside a manifest") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 25, "a", 91);
    make_docs(dir / "b.jsonl", 25, "b", 92);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl"}, {"corpus_a"}),
        stage("ingest", njson::object(), {"b.jsonl"}, {"corpus_b"}),
        stage("tok-train", {{"target_vocab_size", 300}}, {"corpus_a"}, {"base.json"}),
        stage("tok-train", {{"target_vocab_size", 290}}, {"corpus_b"}, {"addon.json"}),
        stage("tok-merge", njson::object(), {"base.json", "addon.json"}, {"merged.json"}),
        stage("tok-efficiency", njson::object(),
              {"merged.json", "base.json", "corpus_a"}, {"eff.json"}),
    });
    auto m = manifest_from(dir.path(), doc);
    auto result = pipeline::run_manifest(m, false);

    auto base = tok::import_vocab((m.workspace / "base.json").string());
    auto addon = tok::import_vocab((m.workspace / "addon.json").string());
    auto merged = tok::import_vocab((m.workspace / "merged.json").string());
    CHECK(merged.size() >= base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(merged.tokens[i] == base.tokens[i]);  // base ids preserved

    auto eff = njson::parse(read_file(m.workspace / "eff.json"));
    CHECK(eff["token_count_model"].get<std::uint64_t>() > 0);
    CHECK(eff["token_count_reference"].get<std::uint64_t>() > 0);
    // merged vocabulary can only tie or beat its own base on the base corpus
    CHECK(eff["efficiency_pct"].get<double>() >= 100.0);
    auto merge_report = njson::parse(result.reports[4].report_json);
    CHECK(merge_report["merged_tokens"] == merged.size());
}

TEST_CASE("metrics stage writes a report consistent with direct computation") {
    TempDir dir;
    write_file(dir / "hyp.txt", "the cat sat on the mat\nhello wide world\n");
    write_file(dir / "ref.txt", "the cat sat on a mat\nhello world\n");

    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("metrics", {{"metric", "bleu"}, {"smooth", true}}, {"hyp.txt", "ref.txt"},
              {"bleu.json"}),
        stage("metrics", {{"metric", "chrf"}}, {"hyp.txt", "ref.txt"}, {"chrf.json"}),
    });
    auto m = manifest_from(dir.path(), doc);
    pipeline::run_manifest(m, false);

    auto report = njson::parse(read_file(m.workspace / "bleu.json"));
    std::vector<std::vector<std::string>> hyps = {
        tok::whitespace_segment("the cat sat on the mat"),
        tok::whitespace_segment("hello wide world")};
    std::vector<std::vector<std::string>> refs = {
        tok::whitespace_segment("the cat sat on a mat"),
        tok::whitespace_segment("hello world")};
    auto direct = metrics::bleu(hyps, refs, true);
    CHECK(report["bleu"].get<double>() == doctest::Approx(direct.value).epsilon(1e-12));
    CHECK(report["hyp_len"] == direct.hyp_len);

    auto chrf_report = njson::parse(read_file(m.workspace / "chrf.json"));
    auto line1 = metrics::chrf("the cat sat on the mat", "the cat sat on a mat");
    auto line2 = metrics::chrf("hello wide world", "hello world");
    CHECK(chrf_report["mean"].get<double>() ==
          doctest::Approx((line1.value + line2.value) / 2.0).epsilon(1e-12));

    SUBCASE("line count mismatch fails the stage") {
        write_file(dir / "short.txt", "only one line\n");
        njson bad;
        bad["workspace"] = "ws_bad";
        bad["stages"] = njson::array({stage("metrics", {{"metric", "chrf"}},
                                            {"hyp.txt", "short.txt"}, {"r.json"})});
        auto mb = manifest_from(dir.path(), bad);
        CHECK(error_code_of([&] { pipeline::run_manifest(mb, false); }) == "stage-failed");
    }
}

TEST_CASE("shard timestamps are pinned so reruns cannot differ by clock") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 8, "a", 101);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] =
        njson::array({stage("ingest", njson::object(), {"a.jsonl"}, {"corpus"})});
    auto m = manifest_from(dir.path(), doc);
    pipeline::run_manifest(m, false);

    auto manifest = njson::parse(read_file(m.workspace / "corpus" / "manifest.json"));
    CHECK(manifest["created_at"] == "1970-01-01T00:00:00Z");

    SUBCASE("an explicit epoch overrides the default") {
        njson doc2;
        doc2["workspace"] = "ws2";
        doc2["stages"] = njson::array(
            {stage("ingest", {{"epoch", 86400}}, {"a.jsonl"}, {"corpus"})});
        auto m2 = manifest_from(dir.path(), doc2);
        pipeline::run_manifest(m2, false);
        auto manifest2 =
            njson::parse(read_file(m2.workspace / "corpus" / "manifest.json"));
        CHECK(manifest2["created_at"] == "1970-01-02T00:00:00Z");
    }
}

TEST_CASE("mix stage respects sampling weights within tolerance") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 1000, "a", 111);
    make_docs(dir / "b.jsonl", 1000, "b", 112);
    njson doc;
    doc["workspace"] = "ws";
    doc["stages"] = njson::array({
        stage("ingest", njson::object(), {"a.jsonl"}, {"corpus_a"}),
        stage("ingest", njson::object(), {"b.jsonl"}, {"corpus_b"}),
        stage("mix", {{"weights", {0.5, 0.5}}, {"seed", 4}, {"target_docs", 1000}},
              {"corpus_a", "corpus_b"}, {"mixed"}),
    });
    auto m = manifest_from(dir.path(), doc);
    auto result = pipeline::run_manifest(m, false);
    auto report = njson::parse(result.reports[2].report_json);
    CHECK(report["total"] == 1000);
    double frac_a = report["per_source"][0].get<double>() / 1000.0;
    CHECK(frac_a > 0.44);  // binomial sd ~0.016 at n=1000
    CHECK(frac_a < 0.56);
}
