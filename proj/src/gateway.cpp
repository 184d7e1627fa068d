#include "clipper/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "clipper/errors.hpp"
#include "clipper/util/hash.hpp"

namespace clipper {

namespace {

using nlohmann::json;

std::string format_temperature(double t) {
    std::ostringstream out;
    out.precision(6);
    out << t;
    return out.str();
}

bool is_retryable_status(int status) {
    return status == 0 || status == 408 || status == 429 || status >= 500;
}

std::size_t whitespace_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

std::string request_hash(const ChatRequest& request) {
    std::string key = request.model_id;
    key.push_back('\x1f');
    key += request.system.value_or("");
    key.push_back('\x1f');
    key += request.user;
    key.push_back('\x1f');
    key += format_temperature(request.temperature);
    key.push_back('\x1f');
    key += std::to_string(request.max_tokens);
    return util::sha256_hex(key);
}

// --- clocks --------------------------------------------------------------

std::chrono::milliseconds SystemClock::now() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::milliseconds duration) {
    std::this_thread::sleep_for(duration);
}

std::chrono::milliseconds VirtualClock::now() {
    std::lock_guard lock(mutex_);
    return now_;
}

void VirtualClock::sleep_for(std::chrono::milliseconds duration) {
    std::lock_guard lock(mutex_);
    now_ += duration;
}

// --- rate limiter ---------------------------------------------------------

RateLimiter::RateLimiter(std::size_t rpm, Clock& clock) : rpm_(rpm), clock_(clock) {}

void RateLimiter::acquire() {
    constexpr auto kWindow = std::chrono::milliseconds(60'000);
    while (true) {
        std::chrono::milliseconds wait{0};
        {
            std::lock_guard lock(mutex_);
            auto now = clock_.now();
            while (!dispatch_times_.empty() && now - dispatch_times_.front() >= kWindow) {
                dispatch_times_.pop_front();
            }
            if (dispatch_times_.size() < rpm_) {
                dispatch_times_.push_back(now);
                return;
            }
            wait = dispatch_times_.front() + kWindow - now;
        }
        clock_.sleep_for(wait);
    }
}

// --- cost ledger ----------------------------------------------------------

void CostLedger::add(const std::string& request_tag, std::size_t prompt_tokens,
                     std::size_t completion_tokens, double usd) {
    std::lock_guard lock(mutex_);
    auto& entry = entries_[request_tag];
    entry.prompt_tokens += prompt_tokens;
    entry.completion_tokens += completion_tokens;
    entry.usd += usd;
}

void CostLedger::add_cached(const std::string& request_tag, std::size_t prompt_tokens,
                            std::size_t completion_tokens) {
    std::lock_guard lock(mutex_);
    auto& entry = entries_[request_tag];
    entry.cached_prompt_tokens += prompt_tokens;
    entry.cached_completion_tokens += completion_tokens;
}

std::map<std::string, LedgerEntry> CostLedger::snapshot() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

double CostLedger::total_usd() const {
    std::lock_guard lock(mutex_);
    double total = 0.0;
    for (const auto& [tag, entry] : entries_) total += entry.usd;
    return total;
}

void CostLedger::merge(const CostLedger& other) {
    auto theirs = other.snapshot();
    std::lock_guard lock(mutex_);
    for (const auto& [tag, entry] : theirs) {
        auto& mine = entries_[tag];
        mine.prompt_tokens += entry.prompt_tokens;
        mine.completion_tokens += entry.completion_tokens;
        mine.usd += entry.usd;
        mine.cached_prompt_tokens += entry.cached_prompt_tokens;
        mine.cached_completion_tokens += entry.cached_completion_tokens;
    }
}

void meter_cost(const std::string& model_id, const std::string& request_tag,
                std::size_t prompt_tokens, std::size_t completion_tokens,
                const PriceTable& prices, CostLedger& ledger) {
    auto it = prices.prices.find(model_id);
    if (it == prices.prices.end()) {
        throw UnknownModelPriceError("no price configured for model: " + model_id);
    }
    double usd = (static_cast<double>(prompt_tokens) * it->second.input_usd_per_million +
                  static_cast<double>(completion_tokens) * it->second.output_usd_per_million) /
                 1e6;
    ledger.add(request_tag, prompt_tokens, completion_tokens, usd);
}

// --- response cache ---------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<ChatResponse> ResponseCache::lookup(const std::string& key) const {
    auto path = dir_ / (key + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    json body;
    try {
        body = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw CacheError("corrupted cache entry " + path.string() + ": " + ex.what());
    }
    if (!body.contains("response") || !body.contains("usage")) {
        throw CacheError("corrupted cache entry " + path.string() + ": missing fields");
    }
    ChatResponse response;
    response.text = body.at("response").get<std::string>();
    response.prompt_tokens = body.at("usage").value("prompt_tokens", 0U);
    response.completion_tokens = body.at("usage").value("completion_tokens", 0U);
    response.cached = true;
    return response;
}

void ResponseCache::store(const std::string& key, const ChatResponse& response) const {
    json body;
    body["request_hash"] = key;
    body["response"] = response.text;
    body["usage"] = {{"prompt_tokens", response.prompt_tokens},
                     {"completion_tokens", response.completion_tokens}};
    body["timestamp"] = static_cast<std::int64_t>(std::time(nullptr));

    auto final_path = dir_ / (key + ".json");
    auto tmp_path = dir_ / (key + ".tmp");
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError("cannot write cache entry " + tmp_path.string());
        out << body.dump(2) << '\n';
    }
    std::filesystem::rename(tmp_path, final_path);
}

// --- mock backend ------------------------------------------------------------

MockBackend::MockBackend(std::vector<MockRule> rules, std::optional<std::string> default_text)
    : rules_(std::move(rules)), default_text_(std::move(default_text)) {
    failures_left_.reserve(rules_.size());
    for (const auto& rule : rules_) failures_left_.push_back(rule.fail_times);
}

std::unique_ptr<MockBackend> MockBackend::from_script_file(const std::filesystem::path& path) {
    json script;
    try {
        script = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw ConfigError("bad mock script " + path.string() + ": " + ex.what());
    }
    std::vector<MockRule> rules;
    for (const auto& entry : script.value("rules", json::array())) {
        MockRule rule;
        rule.tag = entry.value("tag", "");
        rule.contains = entry.value("contains", "");
        rule.hash = entry.value("hash", "");
        if (entry.contains("text_file")) {
            rule.text = read_file(path.parent_path() / entry.at("text_file").get<std::string>());
        } else {
            rule.text = entry.value("text", "");
        }
        rule.fail_status = entry.value("fail_status", 0);
        rule.fail_times = entry.value("fail_times", 0);
        rules.push_back(std::move(rule));
    }
    std::optional<std::string> default_text;
    if (script.contains("default_text")) {
        default_text = script.at("default_text").get<std::string>();
    }
    return std::make_unique<MockBackend>(std::move(rules), std::move(default_text));
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    ++calls_;
    const std::string hash = request_hash(request);
    const std::string* text = nullptr;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const MockRule& rule = rules_[i];
        if (!rule.tag.empty() && rule.tag != request.request_tag) continue;
        if (!rule.contains.empty() && request.user.find(rule.contains) == std::string::npos)
            continue;
        if (!rule.hash.empty() && rule.hash != hash) continue;
        if (rule.fail_status != 0 && failures_left_[i] != 0) {
            if (failures_left_[i] > 0) --failures_left_[i];
            if (rule.fail_status == 401 || rule.fail_status == 403) {
                throw AuthError("mock auth failure");
            }
            throw ProviderError("mock failure status " + std::to_string(rule.fail_status),
                                rule.fail_status);
        }
        text = &rule.text;
        break;
    }
    if (text == nullptr) {
        if (!default_text_) {
            throw ProviderError("no scripted mock response for tag '" + request.request_tag +
                                    "' hash " + hash,
                                404);
        }
        text = &*default_text_;
    }
    ChatResponse response;
    response.text = *text;
    response.prompt_tokens =
        whitespace_count(request.system.value_or("")) + whitespace_count(request.user);
    response.completion_tokens = whitespace_count(response.text);
    response.cached = false;
    return response;
}

std::size_t MockBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

// --- http backend -------------------------------------------------------------

HttpBackend::HttpBackend(ProviderConfig config) : config_(std::move(config)) {}

std::string HttpBackend::build_body(const ChatRequest& request) const {
    json body;
    if (config_.style == ProviderStyle::OpenAi) {
        body["model"] = request.model_id;
        json messages = json::array();
        if (request.system) {
            messages.push_back({{"role", "system"}, {"content", *request.system}});
        }
        messages.push_back({{"role", "user"}, {"content", request.user}});
        body["messages"] = std::move(messages);
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
    } else {
        body["model"] = request.model_id;
        if (request.system) body["system"] = *request.system;
        body["messages"] = json::array({{{"role", "user"}, {"content", request.user}}});
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
    }
    return body.dump();
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    const char* key = config_.api_key_env.empty() ? nullptr : std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthError("missing credential: set " + config_.api_key_env);
    }

    // Header shape differs per provider style.
    httplib::Client client(config_.base_url);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    std::string path;
    if (config_.style == ProviderStyle::OpenAi) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
        path = "/v1/chat/completions";
    } else {
        headers.emplace("x-api-key", key);
        headers.emplace("anthropic-version", "2023-06-01");
        path = "/v1/messages";
    }

    auto result = client.Post(path, headers, build_body(request), "application/json");
    if (!result) {
        throw ProviderError("network error talking to " + config_.name, 0);
    }
    if (result->status == 401 || result->status == 403) {
        throw AuthError("authentication rejected by " + config_.name);
    }
    if (result->status >= 400) {
        throw ProviderError("provider " + config_.name + " returned status " +
                                std::to_string(result->status),
                            result->status);
    }

    json payload;
    try {
        payload = json::parse(result->body);
    } catch (const json::exception& ex) {
        throw ProviderError(std::string("unparseable provider response: ") + ex.what(), 0);
    }

    ChatResponse response;
    try {
        if (config_.style == ProviderStyle::OpenAi) {
            response.text = payload.at("choices").at(0).at("message").at("content").get<std::string>();
            const auto& usage = payload.at("usage");
            response.prompt_tokens = usage.value("prompt_tokens", 0U);
            response.completion_tokens = usage.value("completion_tokens", 0U);
        } else {
            response.text = payload.at("content").at(0).at("text").get<std::string>();
            const auto& usage = payload.at("usage");
            response.prompt_tokens = usage.value("input_tokens", 0U);
            response.completion_tokens = usage.value("output_tokens", 0U);
        }
    } catch (const json::exception& ex) {
        throw ProviderError(std::string("unexpected provider response shape: ") + ex.what(), 0);
    }
    return response;
}

// --- gateway --------------------------------------------------------------------

Gateway::Gateway(std::unique_ptr<Backend> backend, GatewayConfig config,
                 std::shared_ptr<Clock> clock, std::optional<PriceTable> prices)
    : backend_(std::move(backend)),
      config_(config),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()),
      prices_(std::move(prices)),
      limiter_(config.rpm, *clock_),
      jitter_rng_(config.seed) {}

std::chrono::milliseconds Gateway::backoff_delay(int attempt) {
    double delay = static_cast<double>(config_.retry.base_delay.count()) *
                   std::pow(config_.retry.factor, attempt);
    double jitter_span = config_.retry.jitter;
    double factor;
    {
        std::lock_guard lock(jitter_mutex_);
        std::uniform_real_distribution<double> dist(1.0 - jitter_span, 1.0 + jitter_span);
        factor = dist(jitter_rng_);
    }
    return std::chrono::milliseconds(static_cast<std::int64_t>(delay * factor));
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    if (request.user.empty()) throw Error("ChatRequest.user must be non-empty");
    if (request.max_tokens == 0) throw Error("ChatRequest.max_tokens must be >= 1");

    std::unique_lock slots_lock(slots_mutex_);
    slots_cv_.wait(slots_lock, [&] { return slots_in_use_ < config_.max_concurrency; });
    ++slots_in_use_;
    slots_lock.unlock();

    struct SlotRelease {
        Gateway& gw;
        ~SlotRelease() {
            {
                std::lock_guard lock(gw.slots_mutex_);
                --gw.slots_in_use_;
            }
            gw.slots_cv_.notify_one();
        }
    } release{*this};

    int attempt = 0;
    while (true) {
        limiter_.acquire();
        try {
            ChatResponse response = backend_->complete(request);
            if (prices_) {
                meter_cost(request.model_id, request.request_tag, response.prompt_tokens,
                           response.completion_tokens, *prices_, ledger_);
            } else {
                ledger_.add(request.request_tag, response.prompt_tokens,
                            response.completion_tokens, 0.0);
            }
            return response;
        } catch (const ProviderError& error) {
            ++attempt;
            if (!is_retryable_status(error.status_code) || attempt >= config_.retry.max_attempts) {
                throw;
            }
            clock_->sleep_for(backoff_delay(attempt - 1));
        }
        // AuthError propagates without retry.
    }
}

ChatResponse Gateway::cached_complete(const ChatRequest& request, const ResponseCache& cache) {
    const std::string key = request_hash(request);
    if (auto hit = cache.lookup(key)) {
        ledger_.add_cached(request.request_tag, hit->prompt_tokens, hit->completion_tokens);
        return *hit;
    }
    ChatResponse response = complete(request);
    cache.store(key, response);
    return response;
}

}  // namespace clipper
