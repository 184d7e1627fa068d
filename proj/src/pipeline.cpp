#include "clipper/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "clipper/errors.hpp"
#include "clipper/util/hash.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw ConfigError("bad JSON in " + path.string() + ": " + ex.what());
    }
}

fs::path resolve(const fs::path& base_dir, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() ? p : base_dir / p;
}

/// Runs fn(i) for i in [0, n) across `workers` threads; the first exception
/// wins and is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

// --- config ------------------------------------------------------------------

PipelineConfig PipelineConfig::load(const fs::path& path) {
    json body = parse_json_file(path);
    try {
        return from_parsed(body, path.parent_path());
    } catch (const json::exception& ex) {
        throw ConfigError("bad config " + path.string() + ": " + ex.what());
    }
}

PipelineConfig PipelineConfig::from_parsed(const json& body, const fs::path& base) {
    PipelineConfig config;
    config.run_id = body.value("run_id", "");
    config.seed = body.value("seed", 0ULL);
    config.tokenizer = body.value("tokenizer", "whitespace");
    if (body.contains("tokenizer_vocab")) {
        config.tokenizer_vocab = resolve(base, body.at("tokenizer_vocab").get<std::string>());
    }

    const auto& input = body.at("input");
    config.input_dir = resolve(base, input.at("dir").get<std::string>());
    config.input_manifest = resolve(base, input.at("manifest").get<std::string>());
    config.out_dir = resolve(base, body.at("out_dir").get<std::string>());
    config.cache_dir = resolve(base, body.value("cache_dir", "cache"));
    config.templates_dir = resolve(base, body.at("templates_dir").get<std::string>());

    config.strict_cleaning = body.value("strict_cleaning", true);
    config.limit_tokens = body.value("limit_tokens", kDefaultTokenLimit);
    config.cleaning.strict = config.strict_cleaning;
    if (body.contains("front_matter_markers")) {
        config.cleaning.front_matter_markers =
            body.at("front_matter_markers").get<std::vector<std::string>>();
    }
    if (body.contains("heading_patterns")) {
        config.segmentation.heading_patterns =
            body.at("heading_patterns").get<std::vector<std::string>>();
    }
    config.segmentation.whole_book_as_single_chapter =
        body.value("single_chapter_fallback", false);

    config.mode = body.value("mode", "clipper");
    config.scope = body.value("scope", "both");
    config.pairs_per_book = body.value("pairs_per_book", 5U);
    config.pairs_per_chapter = body.value("pairs_per_chapter", 2U);
    if (config.mode != "clipper" && config.mode != "naive") {
        throw ConfigError("mode must be clipper or naive");
    }
    if (config.scope != "book" && config.scope != "chapter" && config.scope != "both") {
        throw ConfigError("scope must be book, chapter, or both");
    }

    const auto& provider = body.at("provider");
    config.provider.backend = provider.value("backend", "mock");
    if (provider.contains("mock_script")) {
        config.provider.mock_script = resolve(base, provider.at("mock_script").get<std::string>());
    }
    config.provider.base_url = provider.value("base_url", "");
    config.provider.api_key_env = provider.value("api_key_env", "");
    config.provider.outline_model = provider.value("outline_model", "outliner");
    config.provider.summary_model = provider.value("summary_model", "summarizer");
    config.provider.claim_model = provider.value("claim_model", "claimer");
    config.provider.dedup_model = provider.value("dedup_model", "deduper");
    config.provider.validate_model = provider.value("validate_model", "validator");
    config.provider.ground_model = provider.value("ground_model", "judge");
    config.provider.rpm = provider.value("rpm", 600U);
    config.provider.concurrency = provider.value("concurrency", 4U);
    if (provider.contains("retry")) {
        const auto& retry = provider.at("retry");
        config.provider.retry.max_attempts = retry.value("max_attempts", 5);
        config.provider.retry.base_delay =
            std::chrono::milliseconds(retry.value("base_delay_ms", 1000));
        config.provider.retry.factor = retry.value("factor", 2.0);
        config.provider.retry.jitter = retry.value("jitter", 0.2);
    }

    const json prices_json = body.value("prices", json::object());
    for (const auto& [model, price] : prices_json.items()) {
        ModelPrice p;
        p.input_usd_per_million = price.value("input_per_1m", 0.0);
        p.output_usd_per_million = price.value("output_per_1m", 0.0);
        config.prices.prices[model] = p;
    }

    if (body.contains("split")) {
        const auto& split = body.at("split");
        config.split.train = split.value("train", 0U);
        config.split.val = split.value("val", 0U);
        config.split.test = split.value("test", 0U);
        config.split.unit =
            split.value("unit", "pairs") == "claims" ? SplitUnit::Claims : SplitUnit::Pairs;
        config.split.seed = split.value("seed", config.seed);
    }

    if (config.run_id.empty()) {
        config.run_id = util::sha256_hex_prefix(config.to_json().dump(), 12);
    }
    return config;
}

json PipelineConfig::to_json() const {
    json prices_json = json::object();
    for (const auto& [model, price] : prices.prices) {
        prices_json[model] = {{"input_per_1m", price.input_usd_per_million},
                              {"output_per_1m", price.output_usd_per_million}};
    }
    return json{
        {"seed", seed},
        {"tokenizer", tokenizer},
        {"strict_cleaning", strict_cleaning},
        {"limit_tokens", limit_tokens},
        {"heading_patterns", segmentation.heading_patterns},
        {"single_chapter_fallback", segmentation.whole_book_as_single_chapter},
        {"front_matter_markers", cleaning.front_matter_markers},
        {"mode", mode},
        {"scope", scope},
        {"pairs_per_book", pairs_per_book},
        {"pairs_per_chapter", pairs_per_chapter},
        {"provider",
         {{"backend", provider.backend},
          {"outline_model", provider.outline_model},
          {"summary_model", provider.summary_model},
          {"claim_model", provider.claim_model},
          {"dedup_model", provider.dedup_model},
          {"validate_model", provider.validate_model},
          {"ground_model", provider.ground_model},
          {"rpm", provider.rpm},
          {"concurrency", provider.concurrency}}},
        {"prices", std::move(prices_json)},
        {"split",
         {{"train", split.train},
          {"val", split.val},
          {"test", split.test},
          {"unit", split.unit == SplitUnit::Claims ? "claims" : "pairs"},
          {"seed", split.seed}}}};
}

// --- manifest -------------------------------------------------------------------

json RunManifest::to_json() const {
    json stages_json = json::object();
    for (const auto& [name, record] : stages) {
        stages_json[name] = {{"input_hash", record.input_hash},
                             {"output_hashes", record.output_hashes},
                             {"status", record.status},
                             {"executed_last_run", record.executed_last_run},
                             {"cost_usd", record.cost_usd}};
    }
    return json{{"run_id", run_id},
                {"seed", seed},
                {"stage_order", stage_order},
                {"stages", std::move(stages_json)},
                {"cost", cost}};
}

RunManifest RunManifest::from_json(const json& body) {
    RunManifest manifest;
    manifest.run_id = body.value("run_id", "");
    manifest.seed = body.value("seed", 0ULL);
    manifest.stage_order = body.value("stage_order", std::vector<std::string>{});
    const json stages_json = body.value("stages", json::object());
    for (const auto& [name, record] : stages_json.items()) {
        StageRecord stage;
        stage.input_hash = record.value("input_hash", "");
        stage.output_hashes =
            record.value("output_hashes", std::map<std::string, std::string>{});
        stage.status = record.value("status", "pending");
        stage.executed_last_run = record.value("executed_last_run", false);
        stage.cost_usd = record.value("cost_usd", 0.0);
        manifest.stages[name] = std::move(stage);
    }
    manifest.cost = body.value("cost", json::object());
    return manifest;
}

void RunManifest::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << to_json().dump(2) << '\n';
}

std::optional<RunManifest> RunManifest::load(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    return from_json(parse_json_file(path));
}

std::size_t RunManifest::executed_count() const {
    std::size_t n = 0;
    for (const auto& [name, record] : stages) {
        if (record.executed_last_run) ++n;
    }
    return n;
}

// --- wiring ----------------------------------------------------------------------

TokenizerRegistry make_tokenizer_registry(const PipelineConfig& config) {
    TokenizerRegistry registry;
    if (config.tokenizer_vocab) {
        registry.register_tokenizer(
            config.tokenizer,
            std::make_shared<BpeTokenizer>(config.tokenizer, config.tokenizer_vocab->string()));
    }
    if (!registry.has(config.tokenizer)) {
        throw ConfigError("tokenizer '" + config.tokenizer +
                          "' is not registered (missing tokenizer_vocab?)");
    }
    return registry;
}

std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config, std::shared_ptr<Clock> clock) {
    std::unique_ptr<Backend> backend;
    if (config.provider.backend == "mock") {
        if (config.provider.mock_script.empty()) {
            throw ConfigError("mock backend needs provider.mock_script");
        }
        backend = MockBackend::from_script_file(config.provider.mock_script);
    } else if (config.provider.backend == "openai" || config.provider.backend == "anthropic") {
        ProviderConfig provider;
        provider.name = config.provider.backend;
        provider.style = config.provider.backend == "openai" ? ProviderStyle::OpenAi
                                                             : ProviderStyle::Anthropic;
        provider.base_url = config.provider.base_url;
        provider.api_key_env = config.provider.api_key_env;
        backend = std::make_unique<HttpBackend>(provider);
    } else {
        throw ConfigError("unknown provider backend: " + config.provider.backend);
    }

    GatewayConfig gateway_config;
    gateway_config.rpm = config.provider.rpm;
    gateway_config.max_concurrency = config.provider.concurrency;
    gateway_config.retry = config.provider.retry;
    gateway_config.seed = config.seed;

    std::optional<PriceTable> prices;
    if (!config.prices.prices.empty()) prices = config.prices;
    return std::make_unique<Gateway>(std::move(backend), gateway_config, std::move(clock),
                                     std::move(prices));
}

// --- artifact files ------------------------------------------------------------------

void write_books_jsonl(const std::vector<Book>& books, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& book : books) {
        json chapters = json::array();
        for (const auto& ch : book.chapters) {
            json entry{{"index", ch.index}, {"text", ch.text}, {"token_count", ch.token_count}};
            if (ch.heading) entry["heading"] = *ch.heading;
            chapters.push_back(std::move(entry));
        }
        json body{{"book_id", book.book_id},   {"title", book.title},
                  {"author", book.author},     {"token_count", book.token_count},
                  {"preamble", book.preamble}, {"chapters", std::move(chapters)}};
        out << body.dump() << '\n';
    }
}

std::vector<Book> read_books_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<Book> books;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json body;
        try {
            body = json::parse(line);
            Book book;
            book.book_id = body.at("book_id").get<std::string>();
            book.title = body.at("title").get<std::string>();
            book.author = body.at("author").get<std::string>();
            book.token_count = body.at("token_count").get<std::size_t>();
            book.preamble = body.value("preamble", "");
            for (const auto& entry : body.at("chapters")) {
                Chapter ch;
                ch.index = entry.at("index").get<std::size_t>();
                if (entry.contains("heading")) ch.heading = entry.at("heading").get<std::string>();
                ch.text = entry.at("text").get<std::string>();
                ch.token_count = entry.at("token_count").get<std::size_t>();
                book.chapters.push_back(std::move(ch));
            }
            books.push_back(std::move(book));
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad book record: ") + ex.what(), line_number);
        }
    }
    return books;
}

void write_outlines_jsonl(const std::vector<ChapterOutline>& outlines,
                          const std::map<std::size_t, std::string>& book_by_index,
                          const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < outlines.size(); ++i) {
        const auto& outline = outlines[i];
        json body{{"book_id", book_by_index.at(i)},
                  {"chapter_index", outline.chapter_index},
                  {"synopsis", outline.synopsis},
                  {"events", outline.events},
                  {"characters", outline.characters},
                  {"token_count", outline.token_count},
                  {"events_out_of_range", outline.events_out_of_range}};
        out << body.dump() << '\n';
    }
}

std::map<std::string, std::vector<ChapterOutline>> read_outlines_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::map<std::string, std::vector<ChapterOutline>> by_book;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            json body = json::parse(line);
            ChapterOutline outline;
            outline.chapter_index = body.at("chapter_index").get<std::size_t>();
            outline.synopsis = body.at("synopsis").get<std::string>();
            outline.events = body.at("events").get<std::vector<std::string>>();
            outline.characters = body.at("characters").get<std::vector<std::string>>();
            outline.token_count = body.at("token_count").get<std::size_t>();
            outline.events_out_of_range = body.value("events_out_of_range", false);
            by_book[body.at("book_id").get<std::string>()].push_back(std::move(outline));
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad outline record: ") + ex.what(), line_number);
        }
    }
    for (auto& [book_id, outlines] : by_book) {
        std::sort(outlines.begin(), outlines.end(),
                  [](const auto& a, const auto& b) { return a.chapter_index < b.chapter_index; });
    }
    return by_book;
}

void write_summaries_jsonl(const std::vector<BookSummary>& summaries, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& summary : summaries) {
        json body{{"book_id", summary.book_id},
                  {"summary", summary.text},
                  {"token_count", summary.token_count},
                  {"oversized", summary.oversized}};
        out << body.dump() << '\n';
    }
}

std::map<std::string, BookSummary> read_summaries_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::map<std::string, BookSummary> by_book;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            json body = json::parse(line);
            BookSummary summary;
            summary.book_id = body.at("book_id").get<std::string>();
            summary.text = body.at("summary").get<std::string>();
            summary.token_count = body.at("token_count").get<std::size_t>();
            summary.oversized = body.value("oversized", false);
            by_book[summary.book_id] = std::move(summary);
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad summary record: ") + ex.what(), line_number);
        }
    }
    return by_book;
}

void write_pairs_jsonl(const std::vector<ClaimPair>& pairs, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& pair : pairs) out << pair_to_json(pair).dump() << '\n';
}

std::vector<ClaimPair> read_pairs_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<ClaimPair> pairs;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            pairs.push_back(pair_from_json(json::parse(line)));
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad pair record: ") + ex.what(), line_number);
        }
    }
    return pairs;
}

void write_outcomes_jsonl(const std::vector<EvalOutcome>& outcomes, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& outcome : outcomes) out << outcome_to_json(outcome).dump() << '\n';
}

std::vector<EvalOutcome> read_outcomes_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<EvalOutcome> outcomes;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            outcomes.push_back(outcome_from_json(json::parse(line)));
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad outcome record: ") + ex.what(), line_number);
        }
    }
    return outcomes;
}

json make_cost_report(const std::map<std::string, LedgerEntry>& ledger, std::size_t claim_count) {
    json stages = json::object();
    double total = 0.0;
    for (const auto& [tag, entry] : ledger) {
        json stage{{"usd", entry.usd},
                   {"prompt_tokens", entry.prompt_tokens},
                   {"completion_tokens", entry.completion_tokens},
                   {"cached_prompt_tokens", entry.cached_prompt_tokens},
                   {"cached_completion_tokens", entry.cached_completion_tokens}};
        if (claim_count > 0) {
            stage["per_claim_usd"] = entry.usd / static_cast<double>(claim_count);
        }
        stages[tag] = std::move(stage);
        total += entry.usd;
    }
    json report{{"stages", std::move(stages)}, {"total_usd", total}, {"claims", claim_count}};
    if (claim_count > 0) {
        report["per_claim_total_usd"] = total / static_cast<double>(claim_count);
    }
    return report;
}

std::string file_content_hash(const fs::path& path) {
    if (!fs::exists(path)) return "missing";
    return util::sha256_hex(read_file(path));
}

// --- pipeline ---------------------------------------------------------------------------

namespace {

struct Stage {
    std::string name;
    std::vector<fs::path> inputs;
    std::string config_slice;
    std::vector<fs::path> outputs;
    std::function<void()> execute;
};

std::string stage_input_hash(const Stage& stage) {
    std::string blob = stage.config_slice;
    for (const auto& input : stage.inputs) {
        blob += "\x1e";
        blob += input.filename().string();
        blob += "\x1f";
        blob += file_content_hash(input);
    }
    return util::sha256_hex(blob);
}

bool outputs_intact(const Stage& stage, const StageRecord& record) {
    for (const auto& output : stage.outputs) {
        auto it = record.output_hashes.find(output.filename().string());
        if (it == record.output_hashes.end()) return false;
        if (file_content_hash(output) != it->second) return false;
    }
    return true;
}

struct ManifestEntry {
    std::string source_id;
    std::string title;
    std::string author;
    fs::path path;
};

std::vector<ManifestEntry> read_input_manifest(const fs::path& manifest_path,
                                               const fs::path& input_dir) {
    json body = parse_json_file(manifest_path);
    const json& list = body.is_array() ? body : body.at("books");
    std::vector<ManifestEntry> entries;
    for (const auto& item : list) {
        ManifestEntry entry;
        entry.source_id = item.at("source_id").get<std::string>();
        entry.title = item.at("title").get<std::string>();
        entry.author = item.at("author").get<std::string>();
        fs::path p(item.at("path").get<std::string>());
        entry.path = p.is_absolute() ? p : input_dir / p;
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::string book_full_text(const Book& book) {
    std::string text = book.preamble;
    for (const auto& ch : book.chapters) {
        if (ch.heading) {
            text += *ch.heading;
            text.push_back('\n');
        }
        text += ch.text;
    }
    return text;
}

}  // namespace

StagePaths StagePaths::defaults(const fs::path& out_dir) {
    StagePaths paths;
    paths.books = out_dir / "books.jsonl";
    paths.rejected = out_dir / "rejected.jsonl";
    paths.outlines = out_dir / "outlines.jsonl";
    paths.summaries = out_dir / "summaries.jsonl";
    paths.compression = out_dir / "compression.json";
    paths.claims = out_dir / "claims.jsonl";
    paths.quarantine = out_dir / "quarantine.jsonl";
    paths.curated = out_dir / "curated.jsonl";
    paths.decisions = out_dir / "decisions.jsonl";
    paths.verdicts = out_dir / "verdicts.jsonl";
    paths.groundedness = out_dir / "groundedness.jsonl";
    paths.curate_quarantine = out_dir / "curate_quarantine.jsonl";
    paths.sft_train = out_dir / "sft_train.jsonl";
    paths.sft_val = out_dir / "sft_val.jsonl";
    paths.sft_test = out_dir / "sft_test.jsonl";
    paths.split_summary = out_dir / "split_summary.json";
    paths.cost_report = out_dir / "cost_report.json";
    paths.manifest = out_dir / "manifest.json";
    return paths;
}

void stage_ingest(const PipelineConfig& config, const StagePaths& paths) {
    TokenizerRegistry registry = make_tokenizer_registry(config);
    std::vector<ManifestEntry> entries =
        read_input_manifest(config.input_manifest, config.input_dir);

    std::vector<Book> admitted;
    std::ofstream rejected(paths.rejected, std::ios::binary | std::ios::trunc);
    for (const auto& entry : entries) {
        RawBook raw{entry.source_id, entry.title, entry.author, read_file(entry.path)};
        Book book =
            build_book(raw, registry, config.tokenizer, config.cleaning, config.segmentation);
        AdmissionVerdict verdict = admit_book(book, config.limit_tokens);
        if (is_admitted(verdict)) {
            admitted.push_back(std::move(book));
        } else {
            rejected << json{{"book_id", book.book_id},
                             {"title", book.title},
                             {"reason", std::get<Rejected>(verdict).reason}}
                            .dump()
                     << '\n';
        }
    }
    if (admitted.empty()) throw EmptyCorpusError("no book admitted");
    write_books_jsonl(admitted, paths.books);
}

void stage_compress(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                    const ResponseCache& cache) {
    TokenizerRegistry registry = make_tokenizer_registry(config);
    const Tokenizer& tokenizer = registry.get(config.tokenizer);
    std::vector<Book> books = read_books_jsonl(paths.books);
    PromptTemplate outline_tmpl = PromptTemplate::from_file(config.template_path("outline"));
    PromptTemplate summary_tmpl = PromptTemplate::from_file(config.template_path("summary"));

    struct OutlineJob {
        const Book* book;
        const Chapter* chapter;
    };
    std::vector<OutlineJob> jobs;
    for (const auto& book : books) {
        for (const auto& chapter : book.chapters) jobs.push_back({&book, &chapter});
    }
    std::vector<ChapterOutline> outlines(jobs.size());
    parallel_for(jobs.size(), config.provider.concurrency, [&](std::size_t i) {
        outlines[i] = outline_chapter(*jobs[i].chapter, outline_tmpl, gateway, cache, tokenizer,
                                      config.provider.outline_model);
    });
    std::map<std::size_t, std::string> book_by_index;
    for (std::size_t i = 0; i < jobs.size(); ++i) book_by_index[i] = jobs[i].book->book_id;
    write_outlines_jsonl(outlines, book_by_index, paths.outlines);

    std::vector<BookSummary> summaries(books.size());
    parallel_for(books.size(), config.provider.concurrency, [&](std::size_t i) {
        summaries[i] = summarize_book(books[i], summary_tmpl, gateway, cache, tokenizer,
                                      config.provider.summary_model);
    });
    write_summaries_jsonl(summaries, paths.summaries);

    // Per-book compression ratios and the corpus mean.
    std::map<std::string, std::vector<ChapterOutline>> outlines_by_book;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        outlines_by_book[jobs[i].book->book_id].push_back(outlines[i]);
    }
    std::vector<std::pair<const Book*, const std::vector<ChapterOutline>*>> report_input;
    for (const auto& book : books) {
        report_input.emplace_back(&book, &outlines_by_book.at(book.book_id));
    }
    CompressionReport report = compression_report(report_input);
    json per_book = json::array();
    for (const auto& entry : report.per_book) {
        per_book.push_back(
            {{"book_id", entry.book_id}, {"ratio", entry.ratio}, {"anomaly", entry.anomaly}});
    }
    std::ofstream out(paths.compression, std::ios::binary | std::ios::trunc);
    out << json{{"per_book", std::move(per_book)}, {"mean_ratio", report.mean_ratio}}.dump(2)
        << '\n';
}

void stage_generate(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                    const ResponseCache& cache) {
    std::vector<Book> books = read_books_jsonl(paths.books);
    std::vector<ClaimPair> clean;
    std::vector<ClaimPair> quarantined;

    auto absorb = [&](GenerationResult result, const Book& book) {
        const std::string text = book_full_text(book);
        for (auto& pair : result.pairs) {
            auto true_lints = lint_claim(pair.true_claim, text);
            auto false_lints = lint_claim(pair.false_claim, text);
            pair.lints.insert(pair.lints.end(), true_lints.begin(), true_lints.end());
            pair.lints.insert(pair.lints.end(), false_lints.begin(), false_lints.end());
            if (pair.lints.empty()) {
                clean.push_back(std::move(pair));
            } else {
                quarantined.push_back(std::move(pair));
            }
        }
        for (auto& pair : result.quarantined) quarantined.push_back(std::move(pair));
    };

    if (config.mode == "naive") {
        PromptTemplate naive_tmpl = PromptTemplate::from_file(config.template_path("claim_naive"));
        for (const auto& book : books) {
            absorb(naive_generate(book_full_text(book), naive_tmpl, gateway, cache,
                                  config.provider.claim_model, book.book_id,
                                  config.pairs_per_book, book.chapters.size()),
                   book);
        }
    } else {
        auto outlines_by_book = read_outlines_jsonl(paths.outlines);
        auto summaries_by_book = read_summaries_jsonl(paths.summaries);
        PromptTemplate book_tmpl = PromptTemplate::from_file(config.template_path("claim_book"));
        PromptTemplate chapter_tmpl =
            PromptTemplate::from_file(config.template_path("claim_chapter"));
        for (const auto& book : books) {
            const auto& outlines = outlines_by_book.at(book.book_id);
            const auto& summary = summaries_by_book.at(book.book_id);
            if (config.scope != "chapter" && outlines.size() >= 2) {
                absorb(gen_book_level_pairs(outlines, summary, config.pairs_per_book, book_tmpl,
                                            gateway, cache, config.provider.claim_model,
                                            book.book_id, book.chapters.size()),
                       book);
            }
            if (config.scope != "book") {
                for (const auto& outline : outlines) {
                    absorb(gen_chapter_level_pairs(summary, outline, config.pairs_per_chapter,
                                                   chapter_tmpl, gateway, cache,
                                                   config.provider.claim_model, book.book_id),
                           book);
                }
            }
        }
    }
    if (clean.empty() && quarantined.empty()) {
        throw BatchEmptyError("generation produced no pairs");
    }
    write_pairs_jsonl(clean, paths.claims);
    write_pairs_jsonl(quarantined, paths.quarantine);
}

void stage_curate(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                  const ResponseCache& cache) {
    std::vector<ClaimPair> pairs = read_pairs_jsonl(paths.claims);
    auto outlines_by_book = read_outlines_jsonl(paths.outlines);
    PromptTemplate dedup_tmpl = PromptTemplate::from_file(config.template_path("dedup"));
    PromptTemplate validate_tmpl = PromptTemplate::from_file(config.template_path("validate"));
    PromptTemplate ground_tmpl = PromptTemplate::from_file(config.template_path("ground"));

    // Exact pass first, then the LLM pass per book.
    DedupResult exact = dedup_exact(pairs);
    std::map<std::string, std::vector<ClaimPair>> by_book;
    for (const auto& pair : exact.kept) by_book[pair.book_id].push_back(pair);

    std::vector<ClaimPair> deduped;
    std::vector<DedupDecision> decisions = exact.decisions;
    for (auto& [book_id, book_pairs] : by_book) {
        DedupResult llm =
            dedup_llm(book_pairs, dedup_tmpl, gateway, cache, config.provider.dedup_model);
        for (auto& pair : llm.kept) deduped.push_back(std::move(pair));
        decisions.insert(decisions.end(), llm.decisions.begin(), llm.decisions.end());
    }

    {
        std::ofstream out(paths.decisions, std::ios::binary | std::ios::trunc);
        for (const auto& decision : decisions) {
            out << json{{"kept_pair_id", decision.kept_pair_id},
                        {"removed_pair_ids", decision.removed_pair_ids},
                        {"method", decision.method == DedupMethod::Exact ? "EXACT" : "LLM"}}
                       .dump()
                << '\n';
        }
    }

    // Validation; INVALID and UNKNOWN verdicts quarantine the pair.
    std::vector<ValidationVerdict> verdicts(deduped.size());
    parallel_for(deduped.size(), config.provider.concurrency, [&](std::size_t i) {
        const auto& pair = deduped[i];
        std::vector<ChapterOutline> cited;
        auto it = outlines_by_book.find(pair.book_id);
        if (it != outlines_by_book.end()) {
            for (const auto& outline : it->second) {
                if (std::find(pair.true_claim.source_chapters.begin(),
                              pair.true_claim.source_chapters.end(),
                              outline.chapter_index) != pair.true_claim.source_chapters.end()) {
                    cited.push_back(outline);
                }
            }
        }
        verdicts[i] = validate_claim(pair, cited, validate_tmpl, gateway, cache,
                                     config.provider.validate_model);
    });

    std::vector<ClaimPair> valid;
    std::vector<ClaimPair> invalid;
    {
        std::ofstream out(paths.verdicts, std::ios::binary | std::ios::trunc);
        for (std::size_t i = 0; i < deduped.size(); ++i) {
            out << json{{"pair_id", verdicts[i].pair_id},
                        {"verdict", to_string(verdicts[i].verdict)},
                        {"rationale", verdicts[i].rationale}}
                       .dump()
                << '\n';
            if (verdicts[i].verdict == Validity::Valid) {
                valid.push_back(deduped[i]);
            } else {
                invalid.push_back(deduped[i]);
            }
        }
    }
    write_pairs_jsonl(invalid, paths.curate_quarantine);

    // CoT groundedness over the TRUE claims of the surviving pairs.
    std::vector<ClaimGroundedness> groundedness(valid.size());
    parallel_for(valid.size(), config.provider.concurrency, [&](std::size_t i) {
        const auto& pair = valid[i];
        auto it = outlines_by_book.find(pair.book_id);
        std::vector<ChapterOutline> outlines =
            it != outlines_by_book.end() ? it->second : std::vector<ChapterOutline>{};
        groundedness[i] = ground_cot(pair, outlines, ground_tmpl, gateway, cache,
                                     config.provider.ground_model, outlines.size());
    });
    GroundednessReport report = aggregate_groundedness(groundedness);
    {
        std::ofstream out(paths.groundedness, std::ios::binary | std::ios::trunc);
        for (const auto& claim : report.per_claim) {
            out << json{{"pair_id", claim.pair_id},
                        {"events_total", claim.events_total},
                        {"events_grounded", claim.events_grounded},
                        {"events_unjudged", claim.events_unjudged},
                        {"citations_correct", claim.citations_correct}}
                       .dump()
                << '\n';
        }
        out << json{{"fully_grounded_fraction", report.fully_grounded_fraction},
                    {"claims_counted", report.claims_counted}}
                   .dump()
            << '\n';
    }
    if (valid.empty()) throw BatchEmptyError("curation removed every pair");
    write_pairs_jsonl(valid, paths.curated);
}

void stage_export(const PipelineConfig& config, const StagePaths& paths) {
    std::vector<ClaimPair> pairs = read_pairs_jsonl(paths.curated);
    std::vector<Book> books = read_books_jsonl(paths.books);
    std::map<std::string, const Book*> books_by_id;
    for (const auto& book : books) books_by_id[book.book_id] = &book;

    SplitResult result = split(pairs, config.split);

    SftTemplates templates{
        "You are a careful reader. Verify the claim against the book and answer TRUE or FALSE "
        "with your reasoning.",
        PromptTemplate::from_file(config.template_path("sft_user"))};

    auto write_split = [&](const std::vector<ClaimPair>& split_pairs, const fs::path& path) {
        std::vector<SftRecord> records;
        for (const auto& pair : split_pairs) {
            auto two = to_sft_records(pair, *books_by_id.at(pair.book_id), templates);
            records.insert(records.end(), std::make_move_iterator(two.begin()),
                           std::make_move_iterator(two.end()));
        }
        export_jsonl(records, path);
        return records.size();
    };
    std::size_t train_records = write_split(result.train, paths.sft_train);
    std::size_t val_records = write_split(result.val, paths.sft_val);
    std::size_t test_records = write_split(result.test, paths.sft_test);

    std::ofstream out(paths.split_summary, std::ios::binary | std::ios::trunc);
    out << json{{"train_pairs", result.train.size()},
                {"val_pairs", result.val.size()},
                {"test_pairs", result.test.size()},
                {"train_records", train_records},
                {"val_records", val_records},
                {"test_records", test_records},
                {"test_books", result.test_books},
                {"seed", config.split.seed}}
               .dump(2)
        << '\n';
}

RunManifest run_pipeline(const PipelineConfig& config, bool dry_run) {
    fs::create_directories(config.out_dir);
    const StagePaths paths = StagePaths::defaults(config.out_dir);

    RunManifest manifest;
    if (auto existing = RunManifest::load(paths.manifest)) {
        manifest = *existing;
    }
    manifest.run_id = config.run_id;
    manifest.seed = config.seed;
    for (auto& [name, record] : manifest.stages) record.executed_last_run = false;

    auto gateway = make_gateway(config);
    ResponseCache cache(config.cache_dir);

    std::vector<ManifestEntry> input_entries =
        read_input_manifest(config.input_manifest, config.input_dir);
    std::vector<fs::path> ingest_inputs{config.input_manifest};
    for (const auto& entry : input_entries) ingest_inputs.push_back(entry.path);

    json provider_slice = config.to_json().at("provider");
    // The scripted mock is part of the model surface: hash it like an input.
    std::vector<fs::path> provider_files;
    if (!config.provider.mock_script.empty()) {
        provider_files.push_back(config.provider.mock_script);
    }
    auto with_provider_files = [&](std::vector<fs::path> inputs) {
        inputs.insert(inputs.end(), provider_files.begin(), provider_files.end());
        return inputs;
    };

    std::vector<Stage> stages;
    stages.push_back({"ingest",
                      ingest_inputs,
                      json{{"tokenizer", config.tokenizer},
                           {"strict", config.strict_cleaning},
                           {"limit", config.limit_tokens},
                           {"patterns", config.segmentation.heading_patterns},
                           {"single_chapter", config.segmentation.whole_book_as_single_chapter},
                           {"markers", config.cleaning.front_matter_markers}}
                          .dump(),
                      {paths.books, paths.rejected},
                      [&] { stage_ingest(config, paths); }});
    stages.push_back({"compress",
                      with_provider_files({paths.books, config.template_path("outline"),
                                           config.template_path("summary")}),
                      provider_slice.dump(),
                      {paths.outlines, paths.summaries, paths.compression},
                      [&] { stage_compress(config, paths, *gateway, cache); }});
    {
        std::vector<fs::path> generate_inputs{paths.books};
        if (config.mode == "naive") {
            generate_inputs.push_back(config.template_path("claim_naive"));
        } else {
            generate_inputs.push_back(paths.outlines);
            generate_inputs.push_back(paths.summaries);
            generate_inputs.push_back(config.template_path("claim_book"));
            generate_inputs.push_back(config.template_path("claim_chapter"));
        }
        stages.push_back({"generate",
                          with_provider_files(generate_inputs),
                          json{{"mode", config.mode},
                               {"scope", config.scope},
                               {"pairs_per_book", config.pairs_per_book},
                               {"pairs_per_chapter", config.pairs_per_chapter},
                               {"provider", provider_slice}}
                              .dump(),
                          {paths.claims, paths.quarantine},
                          [&] { stage_generate(config, paths, *gateway, cache); }});
    }
    stages.push_back({"curate",
                      with_provider_files({paths.claims, paths.outlines,
                                           config.template_path("dedup"),
                                           config.template_path("validate"),
                                           config.template_path("ground")}),
                      provider_slice.dump(),
                      {paths.curated, paths.decisions, paths.verdicts, paths.groundedness,
                       paths.curate_quarantine},
                      [&] { stage_curate(config, paths, *gateway, cache); }});
    stages.push_back({"export",
                      {paths.curated, paths.books, config.template_path("sft_user")},
                      json{{"train", config.split.train},
                           {"val", config.split.val},
                           {"test", config.split.test},
                           {"unit", config.split.unit == SplitUnit::Claims ? "claims" : "pairs"},
                           {"seed", config.split.seed}}
                          .dump(),
                      {paths.sft_train, paths.sft_val, paths.sft_test, paths.split_summary},
                      [&] { stage_export(config, paths); }});

    manifest.stage_order.clear();
    for (const auto& stage : stages) manifest.stage_order.push_back(stage.name);

    for (const auto& stage : stages) {
        const std::string input_hash = stage_input_hash(stage);
        auto it = manifest.stages.find(stage.name);
        bool fresh = it != manifest.stages.end() && it->second.status == "complete" &&
                     it->second.input_hash == input_hash && outputs_intact(stage, it->second);

        if (dry_run) {
            std::cout << stage.name << ": " << (fresh ? "up-to-date" : "would run") << "\n";
            continue;
        }
        if (fresh) {
            manifest.stages[stage.name].executed_last_run = false;
            continue;
        }

        StageRecord record;
        record.input_hash = input_hash;
        record.status = "failed";
        record.executed_last_run = true;
        double usd_before = gateway->ledger().total_usd();
        try {
            stage.execute();
        } catch (...) {
            manifest.stages[stage.name] = record;
            manifest.cost = make_cost_report(gateway->ledger().snapshot(), 0);
            manifest.save(paths.manifest);
            throw;
        }
        record.status = "complete";
        record.cost_usd = gateway->ledger().total_usd() - usd_before;
        for (const auto& output : stage.outputs) {
            record.output_hashes[output.filename().string()] = file_content_hash(output);
        }
        manifest.stages[stage.name] = record;
    }

    if (!dry_run) {
        // Claim count for the per-claim cost rows: two claims per surviving pair.
        std::size_t claims = 0;
        if (fs::exists(paths.curated)) claims = 2 * read_pairs_jsonl(paths.curated).size();
        json cost_report = make_cost_report(gateway->ledger().snapshot(), claims);
        {
            std::ofstream out(paths.cost_report, std::ios::binary | std::ios::trunc);
            out << cost_report.dump(2) << '\n';
        }
        manifest.cost = cost_report;
        manifest.save(paths.manifest);
    }
    return manifest;
}

}  // namespace clipper
