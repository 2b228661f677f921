#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "langkit/client.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include "jsonio.hpp"
#include "langkit/error.hpp"
#include "langkit/hash.hpp"

namespace langkit::client {

namespace {

using jsonio::ojson;

ojson request_to_json(const CompletionRequest& req) {
    ojson j;
    j["model"] = req.model;
    auto msgs = ojson::array();
    for (const auto& m : req.messages) {
        ojson msg;
        msg["role"] = m.role;
        msg["content"] = m.content;
        msgs.push_back(std::move(msg));
    }
    j["messages"] = std::move(msgs);
    j["temperature"] = req.temperature;
    j["top_p"] = req.top_p;
    j["max_tokens"] = req.max_tokens;
    if (req.logprobs) j["logprobs"] = true;
    if (req.request_seed) j["seed"] = *req.request_seed;
    return j;
}

ojson response_to_json(const CompletionResponse& resp) {
    ojson j;
    j["text"] = resp.text;
    if (resp.token_logprobs) j["token_logprobs"] = *resp.token_logprobs;
    j["finish_reason"] = resp.finish_reason;
    j["usage"] = {{"prompt_tokens", resp.usage.prompt_tokens},
                  {"completion_tokens", resp.usage.completion_tokens},
                  {"total_tokens", resp.usage.total_tokens}};
    return j;
}

CompletionResponse response_from_json(const ojson& j) {
    CompletionResponse resp;
    resp.text = jsonio::get_str(j, "text");
    if (auto it = j.find("token_logprobs"); it != j.end() && it->is_array())
        resp.token_logprobs = it->get<std::vector<double>>();
    resp.finish_reason = jsonio::get_str(j, "finish_reason");
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
        resp.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
        resp.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
        resp.usage.total_tokens = it->value("total_tokens", std::int64_t{0});
    }
    return resp;
}

void validate_request(const CompletionRequest& req) {
    if (req.messages.empty())
        throw ValidationError("bad-request", "messages must be non-empty");
    for (const auto& m : req.messages)
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw ValidationError("bad-request", "unknown role \"" + m.role + "\"");
    if (req.temperature < 0)
        throw ValidationError("bad-request", "temperature must be >= 0");
    if (req.max_tokens < 1)
        throw ValidationError("bad-request", "max_tokens must be positive");
}

// OpenAI response shape: choices[0].message.content et al.
CompletionResponse parse_wire_response(const std::string& body, bool want_logprobs) {
    auto j = jsonio::parse(body, "completion response");
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
        throw Error("bad-response", "no choices in completion response");
    const auto& first = (*choices)[0];

    CompletionResponse resp;
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object())
        resp.text = msg->value("content", std::string{});
    resp.finish_reason = first.value("finish_reason", std::string{});
    if (want_logprobs) {
        if (auto lp = first.find("logprobs"); lp != first.end() && lp->is_object())
            if (auto content = lp->find("content");
                content != lp->end() && content->is_array()) {
                std::vector<double> probs;
                for (const auto& entry : *content)
                    probs.push_back(entry.value("logprob", 0.0));
                resp.token_logprobs = std::move(probs);
            }
    }
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
        resp.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
        resp.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
        resp.usage.total_tokens = usage->value("total_tokens", std::int64_t{0});
    }
    return resp;
}

// "https://host:port/prefix" -> origin + path prefix
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ValidationError("bad-config", "base_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

class Gate {
  public:
    explicit Gate(int slots) : free_(slots) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++free_;
        }
        cv_.notify_one();
    }

  private:
    int free_;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct GateHold {
    Gate* gate;
    explicit GateHold(Gate& g) : gate(&g) { gate->acquire(); }
    ~GateHold() { gate->release(); }
};

class RealClock final : public Clock {
  public:
    std::chrono::steady_clock::time_point now() override {
        return std::chrono::steady_clock::now();
    }
    void sleep_for(std::chrono::milliseconds d) override {
        std::this_thread::sleep_for(d);
    }
};

}  // namespace

Clock& steady_clock() {
    static RealClock clock;
    return clock;
}

EndpointConfig endpoint_config_from_json(std::string_view text) {
    auto j = jsonio::parse(text, "endpoint config");
    EndpointConfig cfg;
    cfg.name = jsonio::get_str(j, "name");
    cfg.base_url = jsonio::get_str(j, "base_url");
    cfg.api_key_env = jsonio::get_str(j, "api_key_env");
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.requests_per_minute = j.value("requests_per_minute", cfg.requests_per_minute);
    cfg.timeout_s = j.value("timeout_s", cfg.timeout_s);
    cfg.max_attempts = j.value("max_attempts", cfg.max_attempts);

    if (cfg.base_url.empty()) throw ValidationError("bad-config", "base_url is required");
    if (cfg.name.empty()) cfg.name = cfg.base_url;
    if (cfg.max_in_flight < 1)
        throw ValidationError("bad-config", "max_in_flight must be >= 1");
    if (cfg.requests_per_minute <= 0)
        throw ValidationError("bad-config", "requests_per_minute must be positive");
    if (cfg.timeout_s <= 0) throw ValidationError("bad-config", "timeout_s must be positive");
    if (cfg.max_attempts < 1) throw ValidationError("bad-config", "max_attempts must be >= 1");
    split_url(cfg.base_url);  // validates the scheme early
    return cfg;
}

EndpointConfig load_endpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return endpoint_config_from_json(ss.str());
}

std::string cache_key(const CompletionRequest& req, const EndpointConfig& endpoint) {
    std::string canonical = endpoint.name + "\n" + endpoint.base_url + "\n" +
                            request_to_json(req).dump();
    return hash::sha256_hex(canonical);
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt,
                                        std::uint64_t jitter_draw) {
    double base = static_cast<double>(policy.base_delay.count());
    double exp = base * std::pow(2.0, attempt - 1);
    exp = std::min(exp, static_cast<double>(policy.max_delay.count()));
    double unit = static_cast<double>(jitter_draw >> 11) * 0x1.0p-53;  // [0,1)
    return std::chrono::milliseconds(
        static_cast<std::int64_t>(std::llround(exp * (0.5 + 0.5 * unit))));
}

TokenBucket::TokenBucket(double per_minute, double burst, Clock& clock)
    : rate_per_ms_(per_minute / 60000.0),
      capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      clock_(&clock),
      last_(clock.now()) {}

void TokenBucket::acquire() {
    for (;;) {
        std::chrono::milliseconds wait{0};
        {
            std::lock_guard lock(mu_);
            auto now = clock_->now();
            auto elapsed =
                std::chrono::duration_cast<std::chrono::milliseconds>(now - last_);
            last_ = now;
            tokens_ = std::min(capacity_,
                               tokens_ + static_cast<double>(elapsed.count()) * rate_per_ms_);
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = std::chrono::milliseconds(
                static_cast<std::int64_t>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
        }
        clock_->sleep_for(std::max(wait, std::chrono::milliseconds(1)));
    }
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / (key + ".json");
}

std::optional<CompletionResponse> ResponseCache::load(const std::string& key) const {
    auto path = path_for(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    auto j = jsonio::load_file(path);
    auto it = j.find("response");
    if (it == j.end() || !it->is_object())
        throw Error("cache-corrupt", path.string() + " has no response object");
    auto resp = response_from_json(*it);
    resp.cached = true;
    return resp;
}

void ResponseCache::store(const std::string& key, const CompletionRequest& req,
                          const CompletionResponse& resp) const {
    ojson j;
    j["key"] = key;
    j["request"] = request_to_json(req);
    j["response"] = response_to_json(resp);
    // unique temp name per writer; rename keeps concurrent same-key writes atomic
    static std::atomic<std::uint64_t> counter{0};
    auto tmp = dir_ / (key + ".tmp" + std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io-write", "cannot write " + tmp.string());
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path_for(key));
}

struct HttpChatClient::Impl {
    EndpointConfig cfg;
    ClientOptions opts;
    Clock* clock;
    Gate gate;
    TokenBucket bucket;
    std::optional<ResponseCache> cache;
    std::string origin;
    std::string path_prefix;
    std::mt19937_64 jitter;
    std::mutex jitter_mu;

    Impl(EndpointConfig c, ClientOptions o)
        : cfg(std::move(c)),
          opts(std::move(o)),
          clock(opts.clock ? opts.clock : &steady_clock()),
          gate(cfg.max_in_flight),
          bucket(cfg.requests_per_minute, std::max(1.0, cfg.requests_per_minute / 60.0),
                 *clock),
          jitter(opts.retry.jitter_seed) {
        if (opts.cache_dir) cache.emplace(*opts.cache_dir);
        std::tie(origin, path_prefix) = split_url(cfg.base_url);
    }
};

HttpChatClient::HttpChatClient(EndpointConfig config, ClientOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {}

HttpChatClient::~HttpChatClient() = default;

const EndpointConfig& HttpChatClient::config() const { return impl_->cfg; }

CompletionResponse HttpChatClient::complete(const CompletionRequest& req) {
    validate_request(req);
    auto& im = *impl_;

    std::string key;
    if (im.cache) {
        key = cache_key(req, im.cfg);
        if (im.opts.use_cache)
            if (auto hit = im.cache->load(key)) return *hit;
    }

    std::string api_key;
    if (!im.cfg.api_key_env.empty()) {
        const char* v = std::getenv(im.cfg.api_key_env.c_str());
        if (!v || !*v)
            throw Error("missing-credential",
                        "environment variable " + im.cfg.api_key_env + " is not set");
        api_key = v;
    }

    GateHold hold(im.gate);
    im.bucket.acquire();

    std::string body = request_to_json(req).dump();
    std::string path = im.path_prefix + "/v1/chat/completions";
    std::vector<std::string> attempts;

    for (int attempt = 1; attempt <= im.cfg.max_attempts; ++attempt) {
        httplib::Client http(im.origin);
        auto timeout = std::chrono::milliseconds(
            static_cast<std::int64_t>(im.cfg.timeout_s * 1000));
        http.set_connection_timeout(timeout);
        http.set_read_timeout(timeout);
        http.set_write_timeout(timeout);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

        auto res = http.Post(path, headers, body, "application/json");
        bool retryable;
        if (!res) {
            attempts.push_back(httplib::to_string(res.error()));
            retryable = true;
        } else if (res->status == 200) {
            attempts.push_back("200");
            auto resp = parse_wire_response(res->body, req.logprobs);
            resp.attempt_log = std::move(attempts);
            if (im.cache) im.cache->store(key, req, resp);
            return resp;
        } else if (res->status == 429 || res->status >= 500) {
            attempts.push_back(std::to_string(res->status));
            retryable = true;
        } else {
            throw Error("http-status",
                        "HTTP " + std::to_string(res->status) + ": " + res->body);
        }

        if (retryable && attempt < im.cfg.max_attempts) {
            std::uint64_t draw;
            {
                std::lock_guard lock(im.jitter_mu);
                draw = im.jitter();
            }
            im.clock->sleep_for(backoff_delay(im.opts.retry, attempt, draw));
        }
    }
    throw Error("retries-exhausted", "after " + std::to_string(im.cfg.max_attempts) +
                                         " attempts, last: " + attempts.back());
}

}  // namespace langkit::client
