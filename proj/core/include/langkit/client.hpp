#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace langkit::client {

struct Message {
    std::string role;  // system | user | assistant
    std::string content;
    bool operator==(const Message&) const = default;
};

struct CompletionRequest {
    std::string model;
    std::vector<Message> messages;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 256;
    bool logprobs = false;
    std::optional<std::int64_t> request_seed;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t total_tokens = 0;
};

struct CompletionResponse {
    std::string text;
    std::optional<std::vector<double>> token_logprobs;
    std::string finish_reason;
    Usage usage;
    bool cached = false;
    // one entry per HTTP attempt ("429", "timeout", "200", ...); empty on a cache hit
    std::vector<std::string> attempt_log;
};

// Anything that can answer a chat completion: the HTTP client below, or a
// scripted stand-in inside tests and evaluations.
class ChatModel {
  public:
    virtual ~ChatModel() = default;
    virtual CompletionResponse complete(const CompletionRequest& req) = 0;
};

struct EndpointConfig {
    std::string name;
    std::string base_url;
    std::string api_key_env;  // environment variable holding the key; empty = no auth
    int max_in_flight = 4;
    double requests_per_minute = 60.0;
    double timeout_s = 30.0;
    int max_attempts = 3;
};

EndpointConfig endpoint_config_from_json(std::string_view text);
EndpointConfig load_endpoint_config(const std::string& path);

// Digest identifying one logical request against one endpoint. Canonical field
// order makes it independent of how the request was assembled.
std::string cache_key(const CompletionRequest& req, const EndpointConfig& endpoint);

// Injectable time source so retry and rate-limit behavior is testable without
// real waiting.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual std::chrono::steady_clock::time_point now() = 0;
    virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

Clock& steady_clock();

struct RetryPolicy {
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{30000};
    std::uint64_t jitter_seed = 0;
};

// Exponential backoff with jitter in [0.5, 1.0) of the doubled base, capped.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt,
                                        std::uint64_t jitter_draw);

// Client-side rate limiter: tokens refill continuously at per_minute / 60 per
// second up to `burst`; acquire blocks (via the clock) until one is available.
class TokenBucket {
  public:
    TokenBucket(double per_minute, double burst, Clock& clock);
    void acquire();

  private:
    double rate_per_ms_;
    double capacity_;
    double tokens_;
    Clock* clock_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

// One JSON file per request digest; human-inspectable and diff-able. Writes go
// through a temp file and rename, so concurrent writers of the same key end
// with one intact winner.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<CompletionResponse> load(const std::string& key) const;
    void store(const std::string& key, const CompletionRequest& req,
               const CompletionResponse& resp) const;
    std::filesystem::path path_for(const std::string& key) const;

  private:
    std::filesystem::path dir_;
};

struct ClientOptions {
    std::optional<std::string> cache_dir;
    bool use_cache = true;  // false forces fresh sampling even with a cache dir
    RetryPolicy retry;
    Clock* clock = nullptr;  // defaults to the real steady clock
};

// OpenAI-compatible chat-completion client: POST {base_url}/v1/chat/completions
// with bearer auth from the configured environment variable, bounded in-flight
// requests, token-bucket rate limiting, exponential-backoff retries on
// transient failures (transport errors, 429, 5xx) and a persistent response
// cache keyed by cache_key().
class HttpChatClient final : public ChatModel {
  public:
    explicit HttpChatClient(EndpointConfig config, ClientOptions options = {});
    ~HttpChatClient() override;

    CompletionResponse complete(const CompletionRequest& req) override;
    const EndpointConfig& config() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace langkit::client
