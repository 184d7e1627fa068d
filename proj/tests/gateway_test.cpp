#include <doctest.h>

#include <random>

#include "clipper/errors.hpp"
#include "clipper/gateway.hpp"
#include "test_util.hpp"

using namespace clipper;

namespace {

ChatRequest basic_request(std::string user = "hello there", std::string tag = "test") {
    ChatRequest request;
    request.model_id = "mock-model";
    request.user = std::move(user);
    request.temperature = 0.0;
    request.max_tokens = 64;
    request.request_tag = std::move(tag);
    return request;
}

}  // namespace

TEST_CASE("request_hash covers the cache key fields and excludes the tag") {
    ChatRequest a = basic_request();
    ChatRequest b = basic_request();
    CHECK(request_hash(a) == request_hash(b));

    b.request_tag = "other_stage";
    CHECK(request_hash(a) == request_hash(b));  // same prompt reused across stages hits cache

    b = basic_request();
    b.temperature = 0.5;
    CHECK(request_hash(a) != request_hash(b));

    b = basic_request();
    b.max_tokens = 65;
    CHECK(request_hash(a) != request_hash(b));

    b = basic_request();
    b.system = "sys";
    CHECK(request_hash(a) != request_hash(b));
}

TEST_CASE("mock backend matches scripted rules in order") {
    ChatRequest request = basic_request();
    MockRule by_hash{"", "", request_hash(request), "hello", 0, 0};
    MockBackend backend({by_hash});
    ChatResponse response = backend.complete(request);
    CHECK(response.text == "hello");
    CHECK_FALSE(response.cached);
    CHECK(response.prompt_tokens == 2);  // "hello there"
    CHECK(response.completion_tokens == 1);

    MockBackend no_match({MockRule{"other_tag", "", "", "x", 0, 0}});
    CHECK_THROWS_AS(no_match.complete(request), ProviderError);
}

TEST_CASE("retry contract: two 429s then success within a cap of 3") {
    std::vector<MockRule> rules{
        {"", "", "", "ok", 429, 2},
    };
    GatewayConfig config;
    config.retry.max_attempts = 3;
    config.retry.base_delay = std::chrono::milliseconds(10);
    auto clock = std::make_shared<VirtualClock>();
    Gateway gateway(std::make_unique<MockBackend>(rules), config, clock);
    ChatResponse response = gateway.complete(basic_request());
    CHECK(response.text == "ok");
}

TEST_CASE("retries exhausted surfaces ProviderError") {
    std::vector<MockRule> rules{
        {"", "", "", "never", 503, -1},  // fails forever
    };
    GatewayConfig config;
    config.retry.max_attempts = 2;
    config.retry.base_delay = std::chrono::milliseconds(1);
    auto clock = std::make_shared<VirtualClock>();
    auto backend = std::make_unique<MockBackend>(rules);
    MockBackend* backend_ptr = backend.get();
    Gateway gateway(std::move(backend), config, clock);
    CHECK_THROWS_AS(gateway.complete(basic_request()), ProviderError);
    CHECK(backend_ptr->calls() == 2);
}

TEST_CASE("auth errors are not retried") {
    std::vector<MockRule> rules{
        {"", "", "", "", 401, -1},
    };
    auto clock = std::make_shared<VirtualClock>();
    auto backend = std::make_unique<MockBackend>(rules);
    MockBackend* backend_ptr = backend.get();
    Gateway gateway(std::move(backend), GatewayConfig{}, clock);
    CHECK_THROWS_AS(gateway.complete(basic_request()), AuthError);
    CHECK(backend_ptr->calls() == 1);
}

TEST_CASE("rate limiter: at most rpm dispatches in any sliding 60s window") {
    auto clock = std::make_shared<VirtualClock>();
    RateLimiter limiter(5, *clock);
    std::vector<std::chrono::milliseconds> dispatch_times;
    for (int i = 0; i < 23; ++i) {
        limiter.acquire();
        dispatch_times.push_back(clock->now());
    }
    // Window property: the 6th dispatch after any given one is >= 60s later.
    for (std::size_t i = 0; i + 5 < dispatch_times.size(); ++i) {
        CHECK((dispatch_times[i + 5] - dispatch_times[i]).count() >= 60'000);
    }
}

TEST_CASE("cached_complete: hit carries original usage and adds zero USD") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    PriceTable prices;
    prices.prices["mock-model"] = {3.0, 15.0};
    auto gateway = testutil::mock_gateway({MockRule{"", "", "", "canned reply text", 0, 0}},
                                          std::nullopt, prices);

    ChatResponse first = gateway->cached_complete(basic_request(), cache);
    CHECK_FALSE(first.cached);
    double usd_after_first = gateway->ledger().total_usd();
    CHECK(usd_after_first > 0.0);

    ChatResponse second = gateway->cached_complete(basic_request(), cache);
    CHECK(second.cached);
    CHECK(second.text == first.text);
    CHECK(second.prompt_tokens == first.prompt_tokens);
    CHECK(second.completion_tokens == first.completion_tokens);
    CHECK(gateway->ledger().total_usd() == doctest::Approx(usd_after_first));

    auto snapshot = gateway->ledger().snapshot();
    CHECK(snapshot.at("test").cached_prompt_tokens == first.prompt_tokens);
    CHECK(snapshot.at("test").cached_completion_tokens == first.completion_tokens);
}

TEST_CASE("cache misses on any key field change") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    auto gateway = testutil::mock_gateway({}, std::string("reply"));
    gateway->cached_complete(basic_request(), cache);

    ChatRequest warmer = basic_request();
    warmer.temperature = 0.7;
    ChatResponse response = gateway->cached_complete(warmer, cache);
    CHECK_FALSE(response.cached);
}

TEST_CASE("corrupted cache entries surface CacheError, not a silent miss") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    ChatRequest request = basic_request();
    const std::string key = request_hash(request);
    cache.store(key, ChatResponse{"fine", 1, 1, false});
    testutil::spit(tmp.path / "cache" / (key + ".json"), "{not json");
    CHECK_THROWS_AS(cache.lookup(key), CacheError);

    testutil::spit(tmp.path / "cache" / (key + ".json"), R"({"request_hash": "x"})");
    CHECK_THROWS_AS(cache.lookup(key), CacheError);
}

TEST_CASE("meter_cost applies the price formula") {
    PriceTable prices;
    prices.prices["m"] = {3.0, 15.0};
    CostLedger ledger;
    meter_cost("m", "stage", 1'000'000, 0, prices, ledger);
    CHECK(ledger.total_usd() == doctest::Approx(3.0));
    meter_cost("m", "stage", 0, 1'000'000, prices, ledger);
    CHECK(ledger.total_usd() == doctest::Approx(18.0));

    CHECK_THROWS_AS(meter_cost("unknown", "stage", 1, 1, prices, ledger),
                    UnknownModelPriceError);
}

TEST_CASE("per-claim stage costs sum to the published pipeline total") {
    // Six per-claim stage costs; their sum is $0.0514.
    CostLedger ledger;
    ledger.add("summary", 0, 0, 0.0021);
    ledger.add("outline", 0, 0, 0.0107);
    ledger.add("claim_book", 0, 0, 0.0129);
    ledger.add("claim_chapter", 0, 0, 0.0172);
    ledger.add("dedup", 0, 0, 0.0021);
    ledger.add("validate", 0, 0, 0.0064);
    CHECK(ledger.total_usd() == doctest::Approx(0.0514).epsilon(1e-9));
}

TEST_CASE("ledger additivity over disjoint request sets") {
    std::mt19937 rng(3);
    CostLedger combined;
    CostLedger part_a;
    CostLedger part_b;
    const char* tags[] = {"outline", "summary", "claim_book"};
    for (int i = 0; i < 200; ++i) {
        std::string tag = tags[rng() % 3];
        std::size_t prompt = rng() % 1000;
        std::size_t completion = rng() % 1000;
        double usd = static_cast<double>(rng() % 100) / 1000.0;
        combined.add(tag, prompt, completion, usd);
        (i % 2 == 0 ? part_a : part_b).add(tag, prompt, completion, usd);
    }
    part_a.merge(part_b);
    auto merged = part_a.snapshot();
    auto expected = combined.snapshot();
    REQUIRE(merged.size() == expected.size());
    for (const auto& [tag, entry] : expected) {
        CHECK(merged.at(tag).prompt_tokens == entry.prompt_tokens);
        CHECK(merged.at(tag).completion_tokens == entry.completion_tokens);
        CHECK(merged.at(tag).usd == doctest::Approx(entry.usd));
    }
}

TEST_CASE("http backend builds provider-specific bodies") {
    ProviderConfig openai;
    openai.name = "openai";
    openai.style = ProviderStyle::OpenAi;
    HttpBackend openai_backend(openai);
    ChatRequest request = basic_request();
    request.system = "be brief";
    auto body = nlohmann::json::parse(openai_backend.build_body(request));
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages").at(0).at("role") == "system");
    CHECK(body.at("max_tokens") == 64);

    ProviderConfig anthropic;
    anthropic.name = "anthropic";
    anthropic.style = ProviderStyle::Anthropic;
    HttpBackend anthropic_backend(anthropic);
    auto body2 = nlohmann::json::parse(anthropic_backend.build_body(request));
    CHECK(body2.at("system") == "be brief");
    CHECK(body2.at("messages").size() == 1);
}

TEST_CASE("http backend requires a credential before any network traffic") {
    ProviderConfig config;
    config.name = "openai";
    config.api_key_env = "CLIPPER_TEST_MISSING_KEY";
    HttpBackend backend(config);
    CHECK_THROWS_AS(backend.complete(basic_request()), AuthError);
}

TEST_CASE("gateway validates request invariants") {
    auto gateway = testutil::mock_gateway({}, std::string("x"));
    ChatRequest empty_user = basic_request("");
    CHECK_THROWS_AS(gateway->complete(empty_user), Error);
    ChatRequest zero_tokens = basic_request();
    zero_tokens.max_tokens = 0;
    CHECK_THROWS_AS(gateway->complete(zero_tokens), Error);
}
