#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "langkit/client.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "langkit/error.hpp"
#include "testutil.hpp"

using namespace langkit;
using namespace std::chrono_literals;
using testutil::error_code_of;
using testutil::TempDir;

namespace {

struct FakeClock final : client::Clock {
    std::chrono::steady_clock::time_point t{};
    std::vector<std::chrono::milliseconds> sleeps;

    std::chrono::steady_clock::time_point now() override { return t; }
    void sleep_for(std::chrono::milliseconds d) override {
        sleeps.push_back(d);
        t += d;
    }
};

struct MockServer {
    httplib::Server srv;
    int port = 0;
    std::thread worker;

    MockServer() = default;
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

std::string ok_body(const std::string& text) {
    return R"({"choices":[{"message":{"role":"assistant","content":")" + text +
           R"("},"finish_reason":"stop"}],"usage":{"prompt_tokens":3,"completion_tokens":2,"total_tokens":5}})";
}

client::CompletionRequest simple_request(const std::string& content = "hi") {
    client::CompletionRequest req;
    req.model = "test-model";
    req.messages = {{"user", content}};
    return req;
}

client::EndpointConfig local_config(const std::string& base_url, int attempts = 3) {
    client::EndpointConfig cfg;
    cfg.name = "mock";
    cfg.base_url = base_url;
    cfg.max_attempts = attempts;
    cfg.requests_per_minute = 6000;
    cfg.timeout_s = 5;
    return cfg;
}

}  // namespace

TEST_CASE("cache keys identify the logical request") {
    auto cfg = local_config("http://example.test");
    auto a = simple_request();
    CHECK(client::cache_key(a, cfg) == client::cache_key(simple_request(), cfg));
    CHECK(client::cache_key(a, cfg).size() == 64);

    auto warmer = simple_request();
    warmer.temperature = 0.7;
    CHECK(client::cache_key(warmer, cfg) != client::cache_key(a, cfg));

    auto seeded = simple_request();
    seeded.request_seed = 7;
    CHECK(client::cache_key(seeded, cfg) != client::cache_key(a, cfg));

    // assembly order of the fields is irrelevant
    client::CompletionRequest x, y;
    x.model = "m";
    x.messages = {{"system", "s"}, {"user", "u"}};
    x.max_tokens = 9;
    y.max_tokens = 9;
    y.messages = {{"system", "s"}, {"user", "u"}};
    y.model = "m";
    CHECK(client::cache_key(x, cfg) == client::cache_key(y, cfg));

    auto other = local_config("http://other.test");
    CHECK(client::cache_key(a, other) != client::cache_key(a, cfg));
}

TEST_CASE("backoff doubles per attempt with bounded jitter") {
    client::RetryPolicy policy;
    CHECK(client::backoff_delay(policy, 1, 0).count() == 250);  // base 500 halved at zero jitter
    // jitter factor stays within [0.5, 1.0)
    std::mt19937_64 rng(3);
    for (int attempt = 1; attempt <= 4; ++attempt) {
        for (int i = 0; i < 50; ++i) {
            auto d = client::backoff_delay(policy, attempt, rng());
            double base = 500.0 * std::pow(2.0, attempt - 1);
            CHECK(d.count() >= std::int64_t(base * 0.5));
            CHECK(d.count() <= std::int64_t(base));
        }
    }
    // cap applies
    CHECK(client::backoff_delay(policy, 12, 0).count() == 15000);  // max_delay halved
}

TEST_CASE("token bucket paces grants to the configured rate") {
    FakeClock clock;
    client::TokenBucket bucket(120.0, 2.0, clock);  // 2 per second, burst 2
    std::vector<std::int64_t> grant_ms;
    for (int i = 0; i < 20; ++i) {
        bucket.acquire();
        grant_ms.push_back(
            std::chrono::duration_cast<std::chrono::milliseconds>(clock.t.time_since_epoch())
                .count());
    }
    CHECK(grant_ms[0] == 0);
    CHECK(grant_ms[1] == 0);  // burst
    CHECK(grant_ms[2] >= 500);
    // sustained rate: any sliding 1s window holds at most rate + 1 grants
    for (std::size_t i = 0; i < grant_ms.size(); ++i) {
        int in_window = 0;
        for (auto t : grant_ms)
            if (t >= grant_ms[i] && t < grant_ms[i] + 1000) ++in_window;
        REQUIRE(in_window <= 3);
    }
}

TEST_CASE("transient failures are retried until success") {
    MockServer server;
    std::atomic<int> hits{0};
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int n = ++hits;
        if (n <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
        } else {
            res.set_content(ok_body("recovered"), "application/json");
        }
    });
    server.start();

    FakeClock clock;
    client::ClientOptions opts;
    opts.clock = &clock;
    client::HttpChatClient chat(local_config(server.url()), opts);
    auto resp = chat.complete(simple_request());

    CHECK(resp.text == "recovered");
    CHECK(resp.finish_reason == "stop");
    CHECK(resp.usage.total_tokens == 5);
    CHECK_FALSE(resp.cached);
    CHECK(resp.attempt_log == std::vector<std::string>{"429", "429", "200"});
    REQUIRE(clock.sleeps.size() == 2);
    CHECK(clock.sleeps[0] >= 250ms);
    CHECK(clock.sleeps[0] <= 500ms);
    CHECK(clock.sleeps[1] >= 500ms);
    CHECK(clock.sleeps[1] <= 1000ms);
}

TEST_CASE("client errors are not retried") {
    MockServer server;
    std::atomic<int> hits{0};
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    server.start();

    FakeClock clock;
    client::ClientOptions opts;
    opts.clock = &clock;
    client::HttpChatClient chat(local_config(server.url()), opts);
    try {
        chat.complete(simple_request());
        FAIL("expected http-status");
    } catch (const Error& e) {
        CHECK(e.code() == "http-status");
        CHECK(std::string(e.what()).find("401") != std::string::npos);
        CHECK(std::string(e.what()).find("bad key") != std::string::npos);
    }
    CHECK(hits == 1);
    CHECK(clock.sleeps.empty());
}

TEST_CASE("exhausted retries surface the last cause") {
    MockServer server;
    std::atomic<int> hits{0};
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    server.start();

    FakeClock clock;
    client::ClientOptions opts;
    opts.clock = &clock;
    client::HttpChatClient chat(local_config(server.url(), 2), opts);
    try {
        chat.complete(simple_request());
        FAIL("expected retries-exhausted");
    } catch (const Error& e) {
        CHECK(e.code() == "retries-exhausted");
        CHECK(std::string(e.what()).find("503") != std::string::npos);
    }
    CHECK(hits == 2);
}

TEST_CASE("responses are cached and replayed without the network") {
    TempDir dir;
    MockServer server;
    std::atomic<int> hits{0};
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.set_content(ok_body("answer " + std::to_string(hits.load())), "application/json");
    });
    server.start();

    client::ClientOptions opts;
    opts.cache_dir = (dir / "cache").string();
    auto cfg = local_config(server.url());
    {
        client::HttpChatClient chat(cfg, opts);
        auto first = chat.complete(simple_request());
        CHECK(first.text == "answer 1");
        CHECK_FALSE(first.cached);
        auto second = chat.complete(simple_request());
        CHECK(second.cached);
        CHECK(second.text == "answer 1");
        CHECK(hits == 1);

        auto other = chat.complete(simple_request("different prompt"));
        CHECK_FALSE(other.cached);
        CHECK(hits == 2);
    }
    server.stop();

    // offline replay from a fresh client against a dead endpoint
    client::HttpChatClient offline(cfg, opts);
    auto replay = offline.complete(simple_request());
    CHECK(replay.cached);
    CHECK(replay.text == "answer 1");

    // disabling the cache forces a live call, which now fails
    FakeClock clock;
    auto fresh_opts = opts;
    fresh_opts.use_cache = false;
    fresh_opts.clock = &clock;
    client::HttpChatClient no_cache(cfg, fresh_opts);
    CHECK(error_code_of([&] { no_cache.complete(simple_request()); }) ==
          "retries-exhausted");
}

TEST_CASE("in-flight requests never exceed the configured bound") {
    MockServer server;
    std::atomic<int> current{0}, peak{0};
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int now = ++current;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(25ms);
        --current;
        res.set_content(ok_body("ok"), "application/json");
    });
    server.start();

    auto cfg = local_config(server.url());
    cfg.max_in_flight = 2;
    client::HttpChatClient chat(cfg, {});
    std::vector<std::thread> callers;
    std::atomic<int> done{0};
    for (int i = 0; i < 8; ++i)
        callers.emplace_back([&chat, &done, i] {
            auto resp = chat.complete(simple_request("caller " + std::to_string(i)));
            if (resp.text == "ok") ++done;
        });
    for (auto& t : callers) t.join();

    CHECK(done == 8);
    CHECK(peak.load() <= 2);
}

TEST_CASE("credentials come from the environment and reach the wire") {
    MockServer server;
    std::string seen_auth;
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content(ok_body("authed"), "application/json");
    });
    server.start();

    auto cfg = local_config(server.url());
    cfg.api_key_env = "LANGKIT_TEST_API_KEY";
    ::unsetenv("LANGKIT_TEST_API_KEY");
    client::HttpChatClient chat(cfg, {});
    CHECK(error_code_of([&] { chat.complete(simple_request()); }) == "missing-credential");

    ::setenv("LANGKIT_TEST_API_KEY", "sekrit", 1);
    auto resp = chat.complete(simple_request());
    CHECK(resp.text == "authed");
    CHECK(seen_auth == "Bearer sekrit");
    ::unsetenv("LANGKIT_TEST_API_KEY");
}

TEST_CASE("logprobs pass through only when requested") {
    MockServer server;
    server.srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        bool want = body.value("logprobs", false);
        std::string payload =
            R"({"choices":[{"message":{"content":"x"},"finish_reason":"stop")";
        if (want)
            payload += R"(,"logprobs":{"content":[{"token":"x","logprob":-0.5},{"token":"y","logprob":-1.25}]})";
        payload += "}]}";
        res.set_content(payload, "application/json");
    });
    server.start();

    client::HttpChatClient chat(local_config(server.url()), {});
    auto plain = chat.complete(simple_request());
    CHECK_FALSE(plain.token_logprobs.has_value());

    auto req = simple_request();
    req.logprobs = true;
    auto with = chat.complete(req);
    REQUIRE(with.token_logprobs.has_value());
    CHECK(*with.token_logprobs == std::vector<double>{-0.5, -1.25});
}

TEST_CASE("request validation rejects malformed requests") {
    client::HttpChatClient chat(local_config("http://localhost:1"), {});
    client::CompletionRequest req;
    req.model = "m";
    CHECK(error_code_of([&] { chat.complete(req); }) == "bad-request");

    req.messages = {{"narrator", "hi"}};
    CHECK(error_code_of([&] { chat.complete(req); }) == "bad-request");

    req.messages = {{"user", "hi"}};
    req.temperature = -0.5;
    CHECK(error_code_of([&] { chat.complete(req); }) == "bad-request");
}

TEST_CASE("endpoint config parses and validates") {
    auto cfg = client::endpoint_config_from_json(R"({
        "name": "prod", "base_url": "https://api.example.test/extra/",
        "api_key_env": "KEY", "max_in_flight": 8,
        "requests_per_minute": 90, "timeout_s": 12.5, "max_attempts": 5})");
    CHECK(cfg.name == "prod");
    CHECK(cfg.base_url == "https://api.example.test/extra/");
    CHECK(cfg.max_in_flight == 8);
    CHECK(cfg.requests_per_minute == 90);
    CHECK(cfg.timeout_s == 12.5);
    CHECK(cfg.max_attempts == 5);

    auto defaults = client::endpoint_config_from_json(R"({"base_url": "http://x.test"})");
    CHECK(defaults.name == "http://x.test");
    CHECK(defaults.max_in_flight == 4);
    CHECK(defaults.max_attempts == 3);

    CHECK(error_code_of([] { client::endpoint_config_from_json("{}"); }) == "bad-config");
    CHECK(error_code_of([] {
              client::endpoint_config_from_json(R"({"base_url": "ftp.example"})");
          }) == "bad-config");
    CHECK(error_code_of([] {
              client::endpoint_config_from_json(
                  R"({"base_url": "http://x.test", "requests_per_minute": 0})");
          }) == "bad-config");
    CHECK(error_code_of([] { client::endpoint_config_from_json("not json"); }) ==
          "json-parse");
}

TEST_CASE("concurrent writers of one cache key leave an intact file") {
    TempDir dir;
    client::ResponseCache cache((dir / "cache").string());
    auto req = simple_request();
    std::vector<std::thread> writers;
    for (int i = 0; i < 8; ++i)
        writers.emplace_back([&cache, &req, i] {
            client::CompletionResponse resp;
            resp.text = "writer " + std::to_string(i);
            resp.finish_reason = "stop";
            cache.store("samekey", req, resp);
        });
    for (auto& t : writers) t.join();

    auto loaded = cache.load("samekey");
    REQUIRE(loaded.has_value());
    CHECK(loaded->cached);
    CHECK(loaded->text.substr(0, 7) == "writer ");
    CHECK_FALSE(cache.load("otherkey").has_value());
}
