// Drives the installed command-line binary as a subprocess, so flag parsing,
// exit codes and on-disk outputs are tested exactly as a user sees them.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <vector>

#include <json.hpp>

#include "langkit/metrics.hpp"
#include "langkit/tok.hpp"
#include "testutil.hpp"

using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;
namespace fs = std::filesystem;
using njson = nlohmann::ordered_json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CmdResult run_cli(const std::string& args, const fs::path& cwd) {
    static std::atomic<int> counter{0};
    int n = counter++;
    fs::path out_file = cwd / (".stdout." + std::to_string(n));
    fs::path err_file = cwd / (".stderr." + std::to_string(n));
    std::string cmd = "cd '" + cwd.string() + "' && '" + LANGKIT_CLI_BIN + "' " + args +
                      " >'" + out_file.string() + "' 2>'" + err_file.string() + "'";
    int rc = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = read_file(out_file);
    r.err = read_file(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return r;
}

void make_docs(const fs::path& path, std::size_t count, const std::string& tag,
               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
        njson row;
        row["text"] = testutil::random_thai_text(rng, 400);
        row["id"] = tag + std::to_string(1000 + i);
        row["url"] = "https://" + tag + ".example.com/" + std::to_string(i);
        out += row.dump() + "\n";
    }
    write_file(path, out);
}

std::vector<std::string> nonempty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        if (nl > pos) lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

struct MockServer {
    httplib::Server srv;
    int port = 0;
    std::thread worker;

    ~MockServer() { stop(); }
    void start() {
        port = srv.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        worker = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }
    void stop() {
        if (worker.joinable()) {
            srv.stop();
            worker.join();
        }
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::string chat_body(const std::string& text) {
    njson body;
    body["choices"] = njson::array();
    njson choice;
    choice["message"] = {{"role", "assistant"}, {"content", text}};
    choice["finish_reason"] = "stop";
    body["choices"].push_back(choice);
    body["usage"] = {{"prompt_tokens", 3}, {"completion_tokens", 2}, {"total_tokens", 5}};
    return body.dump();
}

}  // namespace

TEST_CASE("help and usage errors") {
    TempDir dir;
    auto help = run_cli("--help", dir.path());
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("ingest") != std::string::npos);
    CHECK(help.out.find("metrics") != std::string::npos);

    CHECK(run_cli("", dir.path()).exit_code == 2);
    CHECK(run_cli("frobnicate", dir.path()).exit_code == 2);
    CHECK(run_cli("tok", dir.path()).exit_code == 2);          // group needs a leaf
    CHECK(run_cli("dedup", dir.path()).exit_code == 2);        // missing args
    CHECK(run_cli("tok train --help", dir.path()).exit_code == 0);
}

TEST_CASE("corpus subcommands chain on disk") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 20, "a", 1);

    auto ing = run_cli("ingest a.jsonl --out corpus", dir.path());
    REQUIRE(ing.exit_code == 0);
    auto report = njson::parse(ing.out);
    CHECK(report["docs"] == 20);
    CHECK(fs::exists(dir / "corpus" / "manifest.json"));

    auto ded = run_cli("dedup corpus --out deduped --seed 99 --tau 0.9", dir.path());
    REQUIRE(ded.exit_code == 0);
    auto dreport = njson::parse(ded.out);
    CHECK(dreport["params"]["tau"] == 0.9);
    CHECK(dreport["params"]["seed"] == 99);
    CHECK(dreport["kept_count"] == 20);  // distinct random docs survive

    auto fil = run_cli("filter deduped --out clean", dir.path());
    REQUIRE(fil.exit_code == 0);
    CHECK(njson::parse(fil.out)["kept_count"] == 20);

    SUBCASE("missing input is a usage error") {
        CHECK(run_cli("dedup ghost --out x", dir.path()).exit_code == 2);
    }
    SUBCASE("config file feeds the stage") {
        write_file(dir / "dd.json", R"({"tau": 0.7, "seed": 5})");
        auto cfg = run_cli("dedup corpus --out d2 --config dd.json", dir.path());
        REQUIRE(cfg.exit_code == 0);
        CHECK(njson::parse(cfg.out)["params"]["tau"] == 0.7);
    }
    SUBCASE("flag overrides config file") {
        write_file(dir / "dd.json", R"({"tau": 0.7})");
        auto cfg = run_cli("dedup corpus --out d3 --config dd.json --tau 0.95", dir.path());
        REQUIRE(cfg.exit_code == 0);
        CHECK(njson::parse(cfg.out)["params"]["tau"] == 0.95);
    }
}

TEST_CASE("manifest run, resume and failure exit codes") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 25, "a", 2);
    make_docs(dir / "b.jsonl", 25, "b", 3);
    njson manifest;
    manifest["workspace"] = "ws";
    manifest["stages"] = njson::array({
        njson{{"name", "ingest"},
              {"config", njson::object()},
              {"inputs", {"a.jsonl"}},
              {"outputs", {"corpus_a"}}},
        njson{{"name", "ingest"},
              {"config", njson::object()},
              {"inputs", {"b.jsonl"}},
              {"outputs", {"corpus_b"}}},
        njson{{"name", "mix"},
              {"config", njson{{"weights", {0.5, 0.5}}, {"seed", 1}}},
              {"inputs", {"corpus_a", "corpus_b"}},
              {"outputs", {"mixed"}}},
    });
    write_file(dir / "pipe.json", manifest.dump(2));

    auto first = run_cli("run pipe.json", dir.path());
    REQUIRE(first.exit_code == 0);
    CHECK(first.out.find("[3/3] mix") != std::string::npos);
    CHECK(first.out.find("pipeline ok") != std::string::npos);

    auto resumed = run_cli("run pipe.json --resume", dir.path());
    REQUIRE(resumed.exit_code == 0);
    CHECK(resumed.out.find("skipped") != std::string::npos);

    SUBCASE("cycle detected before anything runs") {
        njson bad = manifest;
        bad["stages"][0]["inputs"] = njson::array({"mixed"});
        write_file(dir / "cyc.json", bad.dump());
        auto r = run_cli("run cyc.json", dir.path());
        CHECK(r.exit_code == 2);
        CHECK(r.err.find("cycle") != std::string::npos);
    }
    SUBCASE("stage failure exits 1 and names the stage") {
        njson bad = manifest;
        bad["workspace"] = "ws_fail";
        write_file(dir / "broken.wet", "not a record\n");
        bad["stages"][0]["inputs"] = njson::array({"a.jsonl", "broken.wet"});
        write_file(dir / "bad.json", bad.dump());
        auto r = run_cli("run bad.json", dir.path());
        CHECK(r.exit_code == 1);
        CHECK(r.err.find("stage-failed") != std::string::npos);
        CHECK(r.err.find("stage 1 (ingest)") != std::string::npos);
    }
    SUBCASE("missing manifest is a usage error") {
        CHECK(run_cli("run ghost.json", dir.path()).exit_code == 2);
    }
}

TEST_CASE("standalone subcommand output matches the manifest-embedded stage") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 30, "a", 4);
    njson manifest;
    manifest["workspace"] = "ws";
    manifest["stages"] = njson::array({
        njson{{"name", "ingest"},
              {"config", njson::object()},
              {"inputs", {"a.jsonl"}},
              {"outputs", {"corpus"}}},
        njson{{"name", "dedup"},
              {"config", njson{{"tau", 0.8}, {"seed", 777}}},
              {"inputs", {"corpus"}},
              {"outputs", {"deduped"}}},
    });
    write_file(dir / "pipe.json", manifest.dump());
    REQUIRE(run_cli("run pipe.json", dir.path()).exit_code == 0);

    REQUIRE(run_cli("ingest a.jsonl --out alt_corpus", dir.path()).exit_code == 0);
    REQUIRE(run_cli("dedup alt_corpus --out alt_deduped --tau 0.8 --seed 777", dir.path())
                .exit_code == 0);

    for (const char* name : {"manifest.json", "shard-00000.jsonl"}) {
        CAPTURE(name);
        CHECK(read_file(dir / "ws" / "deduped" / name) ==
              read_file(dir / "alt_deduped" / name));
    }
}

TEST_CASE("tokenizer loop: train, encode, round-trip, segment") {
    TempDir dir;
    make_docs(dir / "a.jsonl", 20, "a", 5);
    REQUIRE(run_cli("ingest a.jsonl --out corpus", dir.path()).exit_code == 0);
    REQUIRE(run_cli("tok train corpus --out vocab.json --vocab-size 300", dir.path())
                .exit_code == 0);

    std::string text = "แมวกิน";  // Thai, in every vocab via bytes
    write_file(dir / "in.txt", text + "\n");
    auto enc = run_cli("tok encode vocab.json --file in.txt", dir.path());
    REQUIRE(enc.exit_code == 0);
    auto lines = nonempty_lines(enc.out);
    REQUIRE(lines.size() == 1);
    auto row = njson::parse(lines[0]);
    std::vector<std::uint32_t> ids = row["ids"].get<std::vector<std::uint32_t>>();
    REQUIRE_FALSE(ids.empty());

    auto vocab = langkit::tok::import_vocab((dir / "vocab.json").string());
    CHECK(langkit::tok::decode(vocab, ids) == text);

    write_file(dir / "lex.txt", "แมว\nกิน\n");
    auto seg = run_cli("tok segment lex.txt --file in.txt", dir.path());
    REQUIRE(seg.exit_code == 0);
    CHECK(nonempty_lines(seg.out)[0] == "แมว กิน");
}

TEST_CASE("metrics subcommands reproduce library values") {
    TempDir dir;
    write_file(dir / "hyp.txt", "the cat sat\nhello world\n");
    write_file(dir / "ref.txt", "the cat sat\nhello there world\n");

    auto b = run_cli("metrics bleu hyp.txt ref.txt --out bleu.json --smooth", dir.path());
    REQUIRE(b.exit_code == 0);
    std::vector<std::vector<std::string>> hyps = {{"the", "cat", "sat"},
                                                  {"hello", "world"}};
    std::vector<std::vector<std::string>> refs = {{"the", "cat", "sat"},
                                                  {"hello", "there", "world"}};
    auto direct = langkit::metrics::bleu(hyps, refs, true);
    CHECK(njson::parse(b.out)["bleu"].get<double>() ==
          doctest::Approx(direct.value).epsilon(1e-12));
    CHECK(njson::parse(read_file(dir / "bleu.json"))["bleu"].get<double>() ==
          doctest::Approx(direct.value).epsilon(1e-12));

    auto q = run_cli("metrics qaf1 qa.jsonl --out qa.json", dir.path());
    CHECK(q.exit_code == 2);  // input missing

    write_file(dir / "qa.jsonl",
               R"({"prediction": "the cat", "golds": ["cat"]})" "\n");
    q = run_cli("metrics qaf1 qa.jsonl --out qa.json", dir.path());
    REQUIRE(q.exit_code == 0);
    CHECK(njson::parse(q.out)["mean_f1"].get<double>() ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    SUBCASE("line count mismatch is rejected as bad input") {
        write_file(dir / "short.txt", "one line\n");
        auto r = run_cli("metrics chrf hyp.txt short.txt --out c.json", dir.path());
        CHECK(r.exit_code == 2);
        CHECK(r.err.find("length-mismatch") != std::string::npos);
    }
}

TEST_CASE("perplexity subcommand computes the analytic value") {
    TempDir dir;
    write_file(dir / "lp.txt", "-0.6931471805599453\n-0.6931471805599453\n");
    auto r = run_cli("eval perplexity lp.txt --out ppl.json", dir.path());
    REQUIRE(r.exit_code == 0);
    CHECK(njson::parse(r.out)["perplexity"].get<double>() == 2.0);
    CHECK(njson::parse(read_file(dir / "ppl.json"))["tokens"] == 2);

    write_file(dir / "badlp.txt", "-0.5\nnot-a-number\n");
    CHECK(run_cli("eval perplexity badlp.txt", dir.path()).exit_code == 2);

    // positive log-probabilities violate the precondition: usage error
    write_file(dir / "poslp.txt", "0.25\n");
    CHECK(run_cli("eval perplexity poslp.txt", dir.path()).exit_code == 2);
}

TEST_CASE("exam evaluation against a live local endpoint") {
    TempDir dir;
    MockServer server;
    server.srv.Post("/v1/chat/completions",
                    [](const httplib::Request&, httplib::Response& res) {
                        res.set_content(chat_body("A"), "application/json");
                    });
    server.start();

    njson endpoint;
    endpoint["name"] = "local-mock";
    endpoint["base_url"] = server.url();
    endpoint["requests_per_minute"] = 6000;
    endpoint["max_attempts"] = 2;
    endpoint["timeout_s"] = 5;
    write_file(dir / "endpoint.json", endpoint.dump());

    std::string items;
    for (int i = 0; i < 3; ++i) {
        njson item;
        item["id"] = "q" + std::to_string(i);
        item["subject"] = "general";
        item["question"] = "Question " + std::to_string(i) + "?";
        item["choices"] = {"first", "second", "third", "fourth"};
        item["answer_index"] = (i == 1) ? 1 : 0;  // always-A gets 2 of 3
        items += item.dump() + "\n";
    }
    write_file(dir / "items.jsonl", items);

    auto r = run_cli(
        "eval exam items.jsonl --out exam.json --model m --endpoint-file endpoint.json "
        "--cache-dir cache",
        dir.path());
    REQUIRE(r.exit_code == 0);
    auto report = njson::parse(read_file(dir / "exam.json"));
    CHECK(report["macro_average"].get<double>() ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(nonempty_lines(read_file(dir / "exam.log.jsonl")).size() == 3);

    // cached responses answer a rerun even with the endpoint gone
    server.stop();
    auto offline = run_cli(
        "eval exam items.jsonl --out exam2.json --model m --endpoint-file endpoint.json "
        "--cache-dir cache",
        dir.path());
    REQUIRE(offline.exit_code == 0);
    CHECK(njson::parse(read_file(dir / "exam2.json"))["macro_average"].get<double>() ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    SUBCASE("bypassing the cache makes the dead endpoint fatal") {
        auto broken = run_cli(
            "eval exam items.jsonl --out exam3.json --model m --endpoint-file "
            "endpoint.json --cache-dir cache --no-cache",
            dir.path());
        CHECK(broken.exit_code == 1);
    }
    SUBCASE("missing model flag is a usage error") {
        CHECK(run_cli("eval exam items.jsonl --out e.json --endpoint-file endpoint.json",
                      dir.path())
                  .exit_code == 2);
    }
}
