#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace clipper {

struct ChatRequest {
    std::string model_id;
    std::optional<std::string> system;
    std::string user;
    double temperature = 0.0;
    std::size_t max_tokens = 4096;
    std::string request_tag;  // pipeline stage label; excluded from the cache key
};

struct ChatResponse {
    std::string text;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    bool cached = false;
};

/// Canonical cache key: hash of (model_id, system, user, temperature,
/// max_tokens). The same prompt reused across stages hits cache.
std::string request_hash(const ChatRequest& request);

// --- clock -------------------------------------------------------------

/// Injectable time source so rate-limit and backoff behavior is testable
/// without wall-clock sleeps.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::milliseconds now() = 0;
    virtual void sleep_for(std::chrono::milliseconds duration) = 0;
};

class SystemClock : public Clock {
public:
    std::chrono::milliseconds now() override;
    void sleep_for(std::chrono::milliseconds duration) override;
};

/// Sleeping advances virtual time instantly.
class VirtualClock : public Clock {
public:
    std::chrono::milliseconds now() override;
    void sleep_for(std::chrono::milliseconds duration) override;

private:
    std::mutex mutex_;
    std::chrono::milliseconds now_{0};
};

// --- rate limiting -----------------------------------------------------

/// Request-per-minute limiter. Each dispatch consumes a token that regenerates
/// 60s after it was taken, so in any sliding 60s window at most `rpm` requests
/// go out.
class RateLimiter {
public:
    RateLimiter(std::size_t rpm, Clock& clock);

    /// Blocks (via the clock) until a dispatch slot is free.
    void acquire();

private:
    std::size_t rpm_;
    Clock& clock_;
    std::mutex mutex_;
    std::deque<std::chrono::milliseconds> dispatch_times_;
};

// --- cost metering -----------------------------------------------------

struct ModelPrice {
    double input_usd_per_million = 0.0;
    double output_usd_per_million = 0.0;
};

struct PriceTable {
    std::map<std::string, ModelPrice> prices;

    bool has(const std::string& model_id) const { return prices.count(model_id) > 0; }
};

struct LedgerEntry {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    double usd = 0.0;
    // Cache hits add zero USD; their token volume is tracked separately.
    std::size_t cached_prompt_tokens = 0;
    std::size_t cached_completion_tokens = 0;
};

class CostLedger {
public:
    void add(const std::string& request_tag, std::size_t prompt_tokens,
             std::size_t completion_tokens, double usd);
    void add_cached(const std::string& request_tag, std::size_t prompt_tokens,
                    std::size_t completion_tokens);

    std::map<std::string, LedgerEntry> snapshot() const;
    double total_usd() const;
    void merge(const CostLedger& other);

private:
    mutable std::mutex mutex_;
    std::map<std::string, LedgerEntry> entries_;
};

/// usd = (prompt·input_price + completion·output_price) / 1e6.
/// Throws UnknownModelPriceError when the model has no configured price.
void meter_cost(const std::string& model_id, const std::string& request_tag,
                std::size_t prompt_tokens, std::size_t completion_tokens,
                const PriceTable& prices, CostLedger& ledger);

// --- response cache ----------------------------------------------------

/// On-disk content-addressed store, one JSON file per entry.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    /// Hit returns the stored response with its original usage numbers.
    /// A corrupted entry raises CacheError rather than reading as a miss.
    std::optional<ChatResponse> lookup(const std::string& key) const;

    /// Write is atomic: temp file then rename.
    void store(const std::string& key, const ChatResponse& response) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

// --- backends ----------------------------------------------------------

class Backend {
public:
    virtual ~Backend() = default;
    /// Throws ProviderError (retryable judged by status) or AuthError.
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic scripted backend for offline runs and tests. Rules are
/// evaluated in order; a rule matches when its tag, substring, and hash
/// constraints (those that are set) all hold against the request.
struct MockRule {
    std::string tag;       // empty matches any request_tag
    std::string contains;  // empty matches any user prompt
    std::string hash;      // empty matches any request hash
    std::string text;
    int fail_status = 0;  // when set, the first fail_times matches throw instead
    int fail_times = 0;
};

class MockBackend : public Backend {
public:
    explicit MockBackend(std::vector<MockRule> rules,
                         std::optional<std::string> default_text = std::nullopt);

    /// Script file format: {"rules": [{tag, contains, hash, text|text_file,
    /// fail_status, fail_times}], "default_text": "..."}.
    static std::unique_ptr<MockBackend> from_script_file(const std::filesystem::path& path);

    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "mock"; }

    std::size_t calls() const;

private:
    mutable std::mutex mutex_;
    std::vector<MockRule> rules_;
    std::vector<int> failures_left_;
    std::optional<std::string> default_text_;
    std::size_t calls_ = 0;
};

enum class ProviderStyle { OpenAi, Anthropic };

struct ProviderConfig {
    std::string name;
    ProviderStyle style = ProviderStyle::OpenAi;
    std::string base_url;
    std::string api_key_env;  // e.g. OPENAI_API_KEY; resolved at first use
    int timeout_seconds = 120;
};

/// Thin adapter over a chat-completion HTTP endpoint (OpenAI- or
/// Anthropic-style JSON shapes).
class HttpBackend : public Backend {
public:
    explicit HttpBackend(ProviderConfig config);

    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return config_.name; }

    /// Exposed for tests: the JSON body sent for a request.
    std::string build_body(const ChatRequest& request) const;

private:
    ProviderConfig config_;
};

// --- gateway -----------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
    double jitter = 0.2;  // +/- fraction of the delay
};

struct GatewayConfig {
    std::size_t rpm = 600;
    std::size_t max_concurrency = 8;
    RetryPolicy retry;
    std::uint64_t seed = 0;  // drives backoff jitter; fixed seed => reproducible runs
};

/// Uniform access to one model backend: rate limiting, bounded concurrency,
/// retries with exponential backoff, response caching, and cost metering.
/// Safe for concurrent use from many workers.
class Gateway {
public:
    Gateway(std::unique_ptr<Backend> backend, GatewayConfig config,
            std::shared_ptr<Clock> clock = nullptr,
            std::optional<PriceTable> prices = std::nullopt);

    /// Transient failures (timeouts, 429, 5xx) retry with backoff up to the
    /// attempt cap; AuthError propagates immediately.
    ChatResponse complete(const ChatRequest& request);

    /// Hit returns the stored response (cached=true, zero new USD); miss
    /// delegates to complete() and stores the result.
    ChatResponse cached_complete(const ChatRequest& request, const ResponseCache& cache);

    CostLedger& ledger() { return ledger_; }
    const CostLedger& ledger() const { return ledger_; }
    Backend& backend() { return *backend_; }

private:
    std::chrono::milliseconds backoff_delay(int attempt);

    std::unique_ptr<Backend> backend_;
    GatewayConfig config_;
    std::shared_ptr<Clock> clock_;
    std::optional<PriceTable> prices_;
    RateLimiter limiter_;
    CostLedger ledger_;
    std::mutex jitter_mutex_;
    std::mt19937_64 jitter_rng_;
    std::mutex slots_mutex_;
    std::condition_variable_any slots_cv_;
    std::size_t slots_in_use_ = 0;
};

}  // namespace clipper
