#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clipper/compress.hpp"
#include "clipper/corpus.hpp"
#include "clipper/curate.hpp"
#include "clipper/dataset.hpp"
#include "clipper/evalbench.hpp"
#include "clipper/gateway.hpp"

#include <json.hpp>

namespace clipper {

struct ProviderSection {
    std::string backend = "mock";  // mock | openai | anthropic
    std::filesystem::path mock_script;
    std::string base_url;
    std::string api_key_env;
    std::string outline_model = "outliner";
    std::string summary_model = "summarizer";
    std::string claim_model = "claimer";
    std::string dedup_model = "deduper";
    std::string validate_model = "validator";
    std::string ground_model = "judge";
    std::size_t rpm = 600;
    std::size_t concurrency = 4;
    RetryPolicy retry;
};

struct PipelineConfig {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string tokenizer = "whitespace";
    std::optional<std::filesystem::path> tokenizer_vocab;  // registers a BPE tokenizer

    std::filesystem::path input_dir;
    std::filesystem::path input_manifest;
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;
    std::filesystem::path templates_dir;

    bool strict_cleaning = true;
    std::size_t limit_tokens = kDefaultTokenLimit;
    SegmentationConfig segmentation;
    CleaningConfig cleaning;

    std::string mode = "clipper";  // clipper | naive
    std::string scope = "both";    // book | chapter | both
    std::size_t pairs_per_book = 5;
    std::size_t pairs_per_chapter = 2;

    ProviderSection provider;
    PriceTable prices;
    SplitSpec split;

    // CLI flags may point individual templates somewhere else.
    std::map<std::string, std::filesystem::path> template_overrides;

    static PipelineConfig load(const std::filesystem::path& path);
    static PipelineConfig from_parsed(const nlohmann::json& body,
                                      const std::filesystem::path& base_dir);
    nlohmann::json to_json() const;

    std::filesystem::path template_path(const std::string& name) const {
        auto it = template_overrides.find(name);
        if (it != template_overrides.end()) return it->second;
        return templates_dir / (name + ".md");
    }
};

/// Every artifact the pipeline reads or writes, so stages can run standalone
/// with paths overridden from the command line.
struct StagePaths {
    std::filesystem::path books, rejected;
    std::filesystem::path outlines, summaries, compression;
    std::filesystem::path claims, quarantine;
    std::filesystem::path curated, decisions, verdicts, groundedness, curate_quarantine;
    std::filesystem::path sft_train, sft_val, sft_test, split_summary;
    std::filesystem::path cost_report, manifest;

    static StagePaths defaults(const std::filesystem::path& out_dir);
};

// Standalone stage runners; run_pipeline sequences them with staleness checks.
void stage_ingest(const PipelineConfig& config, const StagePaths& paths);
void stage_compress(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                    const ResponseCache& cache);
void stage_generate(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                    const ResponseCache& cache);
void stage_curate(const PipelineConfig& config, const StagePaths& paths, Gateway& gateway,
                  const ResponseCache& cache);
void stage_export(const PipelineConfig& config, const StagePaths& paths);

struct StageRecord {
    std::string input_hash;
    std::map<std::string, std::string> output_hashes;  // path (relative) -> sha256
    std::string status;                                // complete | failed | pending
    bool executed_last_run = false;
    double cost_usd = 0.0;
};

struct RunManifest {
    std::string run_id;
    std::uint64_t seed = 0;
    std::vector<std::string> stage_order;
    std::map<std::string, StageRecord> stages;
    nlohmann::json cost;  // ledger snapshot; totals equal the gateway ledger

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& body);
    void save(const std::filesystem::path& path) const;
    static std::optional<RunManifest> load(const std::filesystem::path& path);

    std::size_t executed_count() const;
};

/// Builds the gateway described by the config (mock or HTTP backend, limits,
/// retry policy, prices).
std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config,
                                      std::shared_ptr<Clock> clock = nullptr);

TokenizerRegistry make_tokenizer_registry(const PipelineConfig& config);

/// Executes ingest -> compress -> generate -> curate -> export, skipping
/// stages whose inputs and outputs are unchanged (content hashes, not
/// timestamps). Any stage error halts the run with partial progress recorded.
RunManifest run_pipeline(const PipelineConfig& config, bool dry_run = false);

// --- artifact files ------------------------------------------------------

void write_books_jsonl(const std::vector<Book>& books, const std::filesystem::path& path);
std::vector<Book> read_books_jsonl(const std::filesystem::path& path);

void write_outlines_jsonl(const std::vector<ChapterOutline>& outlines,
                          const std::map<std::size_t, std::string>& book_by_index,
                          const std::filesystem::path& path);
/// Returns outlines grouped per book id, ordered by chapter index.
std::map<std::string, std::vector<ChapterOutline>> read_outlines_jsonl(
    const std::filesystem::path& path);

void write_summaries_jsonl(const std::vector<BookSummary>& summaries,
                           const std::filesystem::path& path);
std::map<std::string, BookSummary> read_summaries_jsonl(const std::filesystem::path& path);

void write_pairs_jsonl(const std::vector<ClaimPair>& pairs, const std::filesystem::path& path);
std::vector<ClaimPair> read_pairs_jsonl(const std::filesystem::path& path);

void write_outcomes_jsonl(const std::vector<EvalOutcome>& outcomes,
                          const std::filesystem::path& path);
std::vector<EvalOutcome> read_outcomes_jsonl(const std::filesystem::path& path);

/// Cost report: per-stage USD and per-claim USD plus the grand total.
nlohmann::json make_cost_report(const std::map<std::string, LedgerEntry>& ledger,
                                std::size_t claim_count);

/// sha256 over a file's bytes; missing files hash as "missing".
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace clipper
