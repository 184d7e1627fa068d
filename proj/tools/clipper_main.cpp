// clipper: book-claims pipeline CLI.
//
// Subcommands cover each stage (ingest, compress, generate, curate, export,
// eval) plus `run`, which executes the whole pipeline with hash-based stage
// skipping. Exit codes: 0 success, 2 config error, 3 stage failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clipper/errors.hpp"
#include "clipper/pipeline.hpp"
#include "clipper/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw clipper::IoError("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw clipper::IoError("cannot write " + path.string());
    out << text;
}

// Shared options for the stage subcommands that need a provider.
struct StageContext {
    clipper::PipelineConfig config;
    std::unique_ptr<clipper::Gateway> gateway;
    std::unique_ptr<clipper::ResponseCache> cache;
    clipper::StagePaths paths;

    explicit StageContext(const std::string& config_path)
        : config(clipper::PipelineConfig::load(config_path)),
          paths(clipper::StagePaths::defaults(config.out_dir)) {
        fs::create_directories(config.out_dir);
        gateway = clipper::make_gateway(config);
        cache = std::make_unique<clipper::ResponseCache>(config.cache_dir);
    }
};

int cmd_ingest(const std::string& in_dir, const std::string& manifest, const std::string& out,
               std::size_t limit_tokens, bool strict, const std::string& tokenizer_id) {
    clipper::TokenizerRegistry registry;
    clipper::CleaningConfig cleaning;
    cleaning.strict = strict;
    clipper::SegmentationConfig segmentation;
    segmentation.whole_book_as_single_chapter = true;

    json body = json::parse(read_file(manifest));
    const json& list = body.is_array() ? body : body.at("books");
    std::vector<clipper::Book> admitted;
    std::size_t rejected = 0;
    for (const auto& item : list) {
        fs::path p(item.at("path").get<std::string>());
        if (!p.is_absolute()) p = fs::path(in_dir) / p;
        clipper::RawBook raw{item.at("source_id").get<std::string>(),
                             item.at("title").get<std::string>(),
                             item.at("author").get<std::string>(), read_file(p)};
        clipper::Book book =
            clipper::build_book(raw, registry, tokenizer_id, cleaning, segmentation);
        if (clipper::is_admitted(clipper::admit_book(book, limit_tokens))) {
            admitted.push_back(std::move(book));
        } else {
            ++rejected;
        }
    }
    clipper::write_books_jsonl(admitted, out);
    std::cout << "admitted " << admitted.size() << " book(s), rejected " << rejected << "\n";
    if (!admitted.empty()) {
        clipper::CorpusStats stats = clipper::corpus_stats(admitted);
        std::cout << stats.book_count << " books, mean " << stats.mean_token_count
                  << " tokens, mean " << stats.mean_chapter_count << " chapters\n";
    }
    return kExitOk;
}

int cmd_run(const std::string& config_path, bool dry_run) {
    clipper::PipelineConfig config = clipper::PipelineConfig::load(config_path);
    clipper::RunManifest manifest = clipper::run_pipeline(config, dry_run);
    if (!dry_run) {
        std::cout << "run " << manifest.run_id << ": " << manifest.executed_count()
                  << " stage(s) executed, "
                  << manifest.stage_order.size() - manifest.executed_count() << " skipped\n";
        for (const auto& name : manifest.stage_order) {
            const auto& record = manifest.stages.at(name);
            std::cout << "  " << name << ": "
                      << (record.executed_last_run ? "executed" : "skipped") << " ("
                      << record.status << ")\n";
        }
    }
    return kExitOk;
}

int cmd_eval_run(const std::string& config_path, const std::string& model,
                 const std::string& condition_str, const std::string& claims_file,
                 const std::string& books_file, const std::string& template_file,
                 const std::string& out_file) {
    clipper::PipelineConfig config = clipper::PipelineConfig::load(config_path);
    auto gateway = clipper::make_gateway(config);
    clipper::ResponseCache cache(config.cache_dir);
    clipper::EvalCondition condition = clipper::condition_from_string(condition_str);
    clipper::PromptTemplate tmpl = clipper::PromptTemplate::from_file(template_file);

    auto pairs = clipper::read_pairs_jsonl(claims_file);
    auto books = clipper::read_books_jsonl(books_file);
    std::map<std::string, clipper::Book> books_by_id;
    for (auto& book : books) books_by_id[book.book_id] = std::move(book);

    std::vector<clipper::EvalOutcome> outcomes;
    for (const auto& pair : pairs) {
        auto it = books_by_id.find(pair.book_id);
        if (it == books_by_id.end()) {
            throw clipper::UnknownPairIdError("pair " + pair.pair_id + " cites unknown book " +
                                              pair.book_id);
        }
        outcomes.push_back(
            clipper::evaluate_pair(pair, it->second, condition, tmpl, *gateway, cache, model));
    }
    clipper::write_outcomes_jsonl(outcomes, out_file);
    clipper::RunReport report = clipper::summarize_run(outcomes, model);
    std::cout << clipper::render_report_text(report);
    return kExitOk;
}

int cmd_eval_report(const std::string& outcomes_file, const std::string& out_file,
                    const std::string& claims_file, const std::string& books_file,
                    const std::string& bucket_key) {
    auto outcomes = clipper::read_outcomes_jsonl(outcomes_file);
    clipper::RunReport report = clipper::summarize_run(outcomes, "");

    json body = clipper::report_to_json(report);
    std::ostringstream text;
    text << clipper::render_report_text(report);

    // Per-condition rows when the run mixes conditions.
    std::map<std::string, std::vector<clipper::EvalOutcome>> by_condition;
    for (const auto& outcome : outcomes) by_condition[outcome.condition].push_back(outcome);
    if (by_condition.size() > 1) {
        json rows = json::array();
        text << "per-condition:\n";
        for (const auto& [condition, subset] : by_condition) {
            clipper::RunReport sub = clipper::summarize_run(subset, "");
            rows.push_back({{"condition", condition},
                            {"pairs", sub.pairs},
                            {"accuracy", sub.accuracy}});
            text << "  " << condition << ": " << sub.accuracy * 100.0 << "% over " << sub.pairs
                 << " pairs\n";
        }
        body["per_condition"] = std::move(rows);
    }

    // Bucketed series when claims and books are supplied.
    if (!claims_file.empty() && !books_file.empty()) {
        std::map<std::string, clipper::ClaimPair> pairs_by_id;
        for (auto& pair : clipper::read_pairs_jsonl(claims_file)) {
            pairs_by_id[pair.pair_id] = std::move(pair);
        }
        std::map<std::string, clipper::Book> books_by_id;
        for (auto& book : clipper::read_books_jsonl(books_file)) {
            books_by_id[book.book_id] = std::move(book);
        }
        clipper::BucketKey key = clipper::bucket_key_from_string(bucket_key);
        auto buckets = clipper::accuracy_by_bucket(outcomes, pairs_by_id, books_by_id, key);
        json series = json::array();
        text << "buckets (" << bucket_key << "):\n";
        for (const auto& bucket : buckets) {
            series.push_back({{"lower", bucket.lower},
                              {"upper", bucket.upper},
                              {"pairs", bucket.pairs},
                              {"accuracy", bucket.accuracy}});
            text << "  [" << bucket.lower << ", " << bucket.upper << "): "
                 << bucket.accuracy * 100.0 << "% over " << bucket.pairs << " pairs\n";
        }
        body["buckets"] = {{"key", bucket_key}, {"series", std::move(series)}};
    }

    if (!out_file.empty()) write_text(out_file, body.dump(2) + "\n");
    std::cout << text.str();
    return kExitOk;
}

int cmd_eval_compare(const std::string& a_file, const std::string& b_file,
                     const std::string& test) {
    clipper::SignificanceResult result;
    if (test == "mcnemar") {
        auto run_a = clipper::read_outcomes_jsonl(a_file);
        auto run_b = clipper::read_outcomes_jsonl(b_file);
        auto [b, c] = clipper::discordant_counts(run_a, run_b);
        result = clipper::mcnemar(b, c);
        std::cout << "discordant: only-a=" << b << " only-b=" << c << "\n";
    } else if (test == "wilcoxon") {
        // Score files: one number per line, aligned by row.
        auto parse_scores = [](const std::string& path) {
            std::vector<double> scores;
            std::istringstream in(read_file(path));
            double value;
            while (in >> value) scores.push_back(value);
            return scores;
        };
        auto a = parse_scores(a_file);
        auto b = parse_scores(b_file);
        if (a.size() != b.size()) {
            throw clipper::ConfigError("score files differ in length");
        }
        std::vector<double> diffs(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) diffs[i] = a[i] - b[i];
        result = clipper::wilcoxon(diffs);
    } else {
        throw clipper::ConfigError("test must be mcnemar or wilcoxon");
    }
    std::cout << clipper::to_string(result.test) << " statistic=" << result.statistic
              << " p=" << result.p_value << "\n";
    return kExitOk;
}

int cmd_curate_dedup(StageContext& ctx, const std::string& claims_file,
                     const std::string& out_file, const std::string& decisions_file) {
    auto pairs = clipper::read_pairs_jsonl(claims_file);
    clipper::PromptTemplate dedup_tmpl =
        clipper::PromptTemplate::from_file(ctx.config.template_path("dedup"));

    clipper::DedupResult exact = clipper::dedup_exact(pairs);
    std::map<std::string, std::vector<clipper::ClaimPair>> by_book;
    for (const auto& pair : exact.kept) by_book[pair.book_id].push_back(pair);

    std::vector<clipper::ClaimPair> kept;
    std::vector<clipper::DedupDecision> decisions = exact.decisions;
    for (auto& [book_id, book_pairs] : by_book) {
        clipper::DedupResult llm = clipper::dedup_llm(book_pairs, dedup_tmpl, *ctx.gateway,
                                                      *ctx.cache, ctx.config.provider.dedup_model);
        for (auto& warning : llm.warnings) std::cerr << "warning: " << warning << "\n";
        for (auto& pair : llm.kept) kept.push_back(std::move(pair));
        decisions.insert(decisions.end(), llm.decisions.begin(), llm.decisions.end());
    }
    clipper::write_pairs_jsonl(kept, out_file);
    std::ofstream out(decisions_file, std::ios::binary | std::ios::trunc);
    for (const auto& decision : decisions) {
        out << json{{"kept_pair_id", decision.kept_pair_id},
                    {"removed_pair_ids", decision.removed_pair_ids},
                    {"method",
                     decision.method == clipper::DedupMethod::Exact ? "EXACT" : "LLM"}}
                   .dump()
            << '\n';
    }
    std::cout << "kept " << kept.size() << " of " << pairs.size() << " pairs\n";
    return kExitOk;
}

int cmd_curate_validate(StageContext& ctx, const std::string& claims_file,
                        const std::string& outlines_file, const std::string& verdicts_file,
                        const std::string& valid_file, const std::string& quarantine_file) {
    auto pairs = clipper::read_pairs_jsonl(claims_file);
    auto outlines_by_book = clipper::read_outlines_jsonl(outlines_file);
    clipper::PromptTemplate tmpl =
        clipper::PromptTemplate::from_file(ctx.config.template_path("validate"));

    std::vector<clipper::ClaimPair> valid;
    std::vector<clipper::ClaimPair> quarantined;
    std::ofstream verdicts_out(verdicts_file, std::ios::binary | std::ios::trunc);
    for (const auto& pair : pairs) {
        std::vector<clipper::ChapterOutline> cited;
        auto it = outlines_by_book.find(pair.book_id);
        if (it != outlines_by_book.end()) {
            for (const auto& outline : it->second) {
                for (std::size_t index : pair.true_claim.source_chapters) {
                    if (outline.chapter_index == index) cited.push_back(outline);
                }
            }
        }
        clipper::ValidationVerdict verdict = clipper::validate_claim(
            pair, cited, tmpl, *ctx.gateway, *ctx.cache, ctx.config.provider.validate_model);
        verdicts_out << json{{"pair_id", verdict.pair_id},
                             {"verdict", clipper::to_string(verdict.verdict)},
                             {"rationale", verdict.rationale}}
                            .dump()
                     << '\n';
        (verdict.verdict == clipper::Validity::Valid ? valid : quarantined).push_back(pair);
    }
    clipper::write_pairs_jsonl(valid, valid_file);
    clipper::write_pairs_jsonl(quarantined, quarantine_file);
    std::cout << valid.size() << " valid, " << quarantined.size() << " quarantined\n";
    return kExitOk;
}

int cmd_curate_ground(StageContext& ctx, const std::string& claims_file,
                      const std::string& outlines_file, const std::string& out_file) {
    auto pairs = clipper::read_pairs_jsonl(claims_file);
    auto outlines_by_book = clipper::read_outlines_jsonl(outlines_file);
    clipper::PromptTemplate tmpl =
        clipper::PromptTemplate::from_file(ctx.config.template_path("ground"));

    std::vector<clipper::ClaimGroundedness> per_claim;
    for (const auto& pair : pairs) {
        auto it = outlines_by_book.find(pair.book_id);
        std::vector<clipper::ChapterOutline> outlines =
            it != outlines_by_book.end() ? it->second : std::vector<clipper::ChapterOutline>{};
        per_claim.push_back(clipper::ground_cot(pair, outlines, tmpl, *ctx.gateway, *ctx.cache,
                                                ctx.config.provider.ground_model,
                                                outlines.size()));
    }
    clipper::GroundednessReport report = clipper::aggregate_groundedness(per_claim);
    std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
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
    std::cout << "fully grounded: " << report.fully_grounded_fraction * 100.0 << "% of "
              << report.claims_counted << " judged claims\n";
    return kExitOk;
}

int cmd_curate_report(const std::string& annotations_file, const std::string& tags_file,
                      const std::string& claims_file, const std::string& out_file) {
    std::vector<std::string> known_ids;
    if (!claims_file.empty()) {
        for (const auto& pair : clipper::read_pairs_jsonl(claims_file)) {
            known_ids.push_back(pair.pair_id);
        }
    }
    json body = json::object();
    std::ostringstream text;

    if (!annotations_file.empty()) {
        auto annotations = clipper::load_annotations_csv(read_file(annotations_file), known_ids);
        clipper::ErrorReport report = clipper::annotate_errors(annotations);
        json counts = json::object();
        text << "error categories (" << report.total << " annotations):\n";
        for (const auto& [category, count] : report.counts) {
            double pct = report.total ? 100.0 * static_cast<double>(count) /
                                            static_cast<double>(report.total)
                                      : 0.0;
            counts[clipper::to_string(category)] = count;
            text << "  " << clipper::to_string(category) << ": " << count << " (" << pct
                 << "%)\n";
        }
        text << "  any error: " << report.any_error_rate * 100.0 << "%\n";
        body["errors"] = {{"counts", std::move(counts)},
                          {"total", report.total},
                          {"any_error_rate", report.any_error_rate}};
    }
    if (!tags_file.empty()) {
        auto tags = clipper::load_tags_csv(read_file(tags_file), known_ids);
        clipper::PerturbationDistribution distribution = clipper::tag_perturbations(tags);
        json frequencies = json::object();
        text << "perturbation kinds (" << distribution.tagged_pairs << " tagged pairs):\n";
        for (const auto& [kind, frequency] : distribution.frequencies) {
            frequencies[clipper::to_string(kind)] = frequency;
            text << "  " << clipper::to_string(kind) << ": " << frequency * 100.0 << "%\n";
        }
        body["perturbations"] = {{"tagged_pairs", distribution.tagged_pairs},
                                 {"frequencies", std::move(frequencies)}};
    }
    if (body.empty()) {
        throw clipper::ConfigError("curate report needs --annotations and/or --tags");
    }
    if (!out_file.empty()) write_text(out_file, body.dump(2) + "\n");
    std::cout << text.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"book-claims pipeline"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "clean, segment, and admit books");
    std::string in_dir, manifest_file, books_out = "books.jsonl", tokenizer_id = "whitespace";
    std::size_t limit_tokens = clipper::kDefaultTokenLimit;
    bool strict = false;
    ingest->add_option("--in", in_dir, "directory of .txt files")->required();
    ingest->add_option("--manifest", manifest_file, "metadata manifest JSON")->required();
    ingest->add_option("--out", books_out, "output books.jsonl");
    ingest->add_option("--limit-tokens", limit_tokens, "admission limit");
    ingest->add_flag("--strict", strict, "fail on missing Gutenberg markers");
    ingest->add_option("--tokenizer", tokenizer_id, "tokenizer id");

    // run
    auto* run = app.add_subcommand("run", "execute the full pipeline");
    std::string run_config;
    bool dry_run = false;
    run->add_option("--config", run_config, "pipeline config JSON")->required();
    run->add_flag("--dry-run", dry_run, "print the plan without executing");

    // compress
    auto* compress = app.add_subcommand("compress", "chapter outlines and book summaries");
    std::string compress_config, compress_books, out_outlines, out_summaries;
    std::string outline_template, summary_template;
    compress->add_option("--config", compress_config)->required();
    compress->add_option("--books", compress_books, "books.jsonl (default: out_dir)");
    compress->add_option("--out-outlines", out_outlines);
    compress->add_option("--out-summaries", out_summaries);
    compress->add_option("--outline-template", outline_template);
    compress->add_option("--summary-template", summary_template);

    // generate
    auto* generate = app.add_subcommand("generate", "true/false claim pairs");
    std::string generate_config, gen_mode, gen_scope, gen_outlines, gen_summaries, gen_books;
    std::string gen_out;
    generate->add_option("--config", generate_config)->required();
    generate->add_option("--mode", gen_mode, "clipper | naive");
    generate->add_option("--scope", gen_scope, "book | chapter | both");
    generate->add_option("--outlines", gen_outlines);
    generate->add_option("--summaries", gen_summaries);
    generate->add_option("--books", gen_books);
    generate->add_option("--out", gen_out, "claims.jsonl");

    // curate with its four subcommands
    auto* curate = app.add_subcommand("curate", "dedup, validate, ground, report");
    curate->require_subcommand(1);
    auto* curate_dedup = curate->add_subcommand("dedup", "exact then LLM deduplication");
    std::string cd_config, cd_claims, cd_out = "deduped.jsonl", cd_decisions = "decisions.jsonl";
    curate_dedup->add_option("--config", cd_config)->required();
    curate_dedup->add_option("--claims", cd_claims)->required();
    curate_dedup->add_option("--out", cd_out);
    curate_dedup->add_option("--decisions", cd_decisions);

    auto* curate_validate = curate->add_subcommand("validate", "judge claims against outlines");
    std::string cv_config, cv_claims, cv_outlines, cv_verdicts = "verdicts.jsonl";
    std::string cv_out = "valid.jsonl", cv_quarantine = "curate_quarantine.jsonl";
    curate_validate->add_option("--config", cv_config)->required();
    curate_validate->add_option("--claims", cv_claims)->required();
    curate_validate->add_option("--outlines", cv_outlines)->required();
    curate_validate->add_option("--verdicts", cv_verdicts);
    curate_validate->add_option("--out", cv_out);
    curate_validate->add_option("--quarantine", cv_quarantine);

    auto* curate_ground = curate->add_subcommand("ground", "judge CoT groundedness");
    std::string cg_config, cg_claims, cg_outlines, cg_out = "groundedness.jsonl";
    curate_ground->add_option("--config", cg_config)->required();
    curate_ground->add_option("--claims", cg_claims)->required();
    curate_ground->add_option("--outlines", cg_outlines)->required();
    curate_ground->add_option("--out", cg_out);

    auto* curate_report = curate->add_subcommand("report", "replay annotation and tag audits");
    std::string cr_annotations, cr_tags, cr_claims, cr_out;
    curate_report->add_option("--annotations", cr_annotations, "CSV: pair_id,category,note");
    curate_report->add_option("--tags", cr_tags, "CSV: pair_id,kind;kind");
    curate_report->add_option("--claims", cr_claims, "validate pair ids against this file");
    curate_report->add_option("--out", cr_out, "write report JSON here");

    // export
    auto* export_cmd = app.add_subcommand("export", "split pairs and write SFT records");
    std::string ex_config, ex_claims, ex_books, ex_spec, ex_out_dir;
    export_cmd->add_option("--config", ex_config)->required();
    export_cmd->add_option("--claims", ex_claims);
    export_cmd->add_option("--books", ex_books);
    export_cmd->add_option("--spec", ex_spec, "split spec JSON {train,val,test,unit,seed}");
    export_cmd->add_option("--out-dir", ex_out_dir);

    // eval
    auto* eval = app.add_subcommand("eval", "claim-verification evaluation");
    eval->require_subcommand(1);
    auto* eval_run = eval->add_subcommand("run", "evaluate a model over claim pairs");
    std::string eval_config, eval_model, eval_condition = "full_text";
    std::string eval_claims, eval_books, eval_template, eval_out = "outcomes.jsonl";
    eval_run->add_option("--config", eval_config)->required();
    eval_run->add_option("--model", eval_model)->required();
    eval_run->add_option("--condition", eval_condition,
                         "full_text | title_author_only | no_context | rag_k50_w256");
    eval_run->add_option("--claims", eval_claims)->required();
    eval_run->add_option("--books", eval_books)->required();
    eval_run->add_option("--template", eval_template)->required();
    eval_run->add_option("--out", eval_out);

    auto* eval_report = eval->add_subcommand("report", "summarize an outcomes file");
    std::string report_outcomes, report_out, report_claims, report_books;
    std::string report_bucket_key = "book_token_length";
    eval_report->add_option("--outcomes", report_outcomes)->required();
    eval_report->add_option("--out", report_out, "also write report JSON");
    eval_report->add_option("--claims", report_claims, "enables bucketed series");
    eval_report->add_option("--books", report_books, "enables bucketed series");
    eval_report->add_option("--key", report_bucket_key,
                            "chapter_token_distance | book_token_length | "
                            "event_placement_quantile");

    auto* eval_compare = eval->add_subcommand("compare", "significance test between two runs");
    std::string compare_a, compare_b, compare_test = "mcnemar";
    eval_compare->add_option("--a", compare_a)->required();
    eval_compare->add_option("--b", compare_b)->required();
    eval_compare->add_option("--test", compare_test, "mcnemar | wilcoxon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*ingest) {
            return cmd_ingest(in_dir, manifest_file, books_out, limit_tokens, strict,
                              tokenizer_id);
        }
        if (*run) return cmd_run(run_config, dry_run);
        if (*compress) {
            StageContext ctx(compress_config);
            if (!compress_books.empty()) ctx.paths.books = compress_books;
            if (!out_outlines.empty()) ctx.paths.outlines = out_outlines;
            if (!out_summaries.empty()) ctx.paths.summaries = out_summaries;
            if (!outline_template.empty()) ctx.config.template_overrides["outline"] = outline_template;
            if (!summary_template.empty()) ctx.config.template_overrides["summary"] = summary_template;
            clipper::stage_compress(ctx.config, ctx.paths, *ctx.gateway, *ctx.cache);
            std::cout << "wrote " << ctx.paths.outlines.string() << " and "
                      << ctx.paths.summaries.string() << "\n";
            return kExitOk;
        }
        if (*generate) {
            StageContext ctx(generate_config);
            if (!gen_mode.empty()) ctx.config.mode = gen_mode;
            if (!gen_scope.empty()) ctx.config.scope = gen_scope;
            if (ctx.config.mode != "clipper" && ctx.config.mode != "naive") {
                throw clipper::ConfigError("--mode must be clipper or naive");
            }
            if (ctx.config.scope != "book" && ctx.config.scope != "chapter" &&
                ctx.config.scope != "both") {
                throw clipper::ConfigError("--scope must be book, chapter, or both");
            }
            if (!gen_books.empty()) ctx.paths.books = gen_books;
            if (!gen_outlines.empty()) ctx.paths.outlines = gen_outlines;
            if (!gen_summaries.empty()) ctx.paths.summaries = gen_summaries;
            if (!gen_out.empty()) ctx.paths.claims = gen_out;
            clipper::stage_generate(ctx.config, ctx.paths, *ctx.gateway, *ctx.cache);
            std::cout << "wrote " << ctx.paths.claims.string() << " (quarantine: "
                      << ctx.paths.quarantine.string() << ")\n";
            return kExitOk;
        }
        if (*curate) {
            if (*curate_dedup) {
                StageContext ctx(cd_config);
                return cmd_curate_dedup(ctx, cd_claims, cd_out, cd_decisions);
            }
            if (*curate_validate) {
                StageContext ctx(cv_config);
                return cmd_curate_validate(ctx, cv_claims, cv_outlines, cv_verdicts, cv_out,
                                           cv_quarantine);
            }
            if (*curate_ground) {
                StageContext ctx(cg_config);
                return cmd_curate_ground(ctx, cg_claims, cg_outlines, cg_out);
            }
            if (*curate_report) {
                return cmd_curate_report(cr_annotations, cr_tags, cr_claims, cr_out);
            }
        }
        if (*export_cmd) {
            StageContext ctx(ex_config);
            if (!ex_claims.empty()) ctx.paths.curated = ex_claims;
            if (!ex_books.empty()) ctx.paths.books = ex_books;
            if (!ex_out_dir.empty()) {
                fs::create_directories(ex_out_dir);
                ctx.paths.sft_train = fs::path(ex_out_dir) / "sft_train.jsonl";
                ctx.paths.sft_val = fs::path(ex_out_dir) / "sft_val.jsonl";
                ctx.paths.sft_test = fs::path(ex_out_dir) / "sft_test.jsonl";
                ctx.paths.split_summary = fs::path(ex_out_dir) / "split_summary.json";
            }
            if (!ex_spec.empty()) {
                json spec = json::parse(read_file(ex_spec));
                ctx.config.split.train = spec.value("train", 0U);
                ctx.config.split.val = spec.value("val", 0U);
                ctx.config.split.test = spec.value("test", 0U);
                ctx.config.split.unit = spec.value("unit", "pairs") == "claims"
                                            ? clipper::SplitUnit::Claims
                                            : clipper::SplitUnit::Pairs;
                ctx.config.split.seed = spec.value("seed", ctx.config.seed);
            }
            clipper::stage_export(ctx.config, ctx.paths);
            std::cout << "wrote " << ctx.paths.sft_train.string() << ", "
                      << ctx.paths.sft_val.string() << ", " << ctx.paths.sft_test.string()
                      << "\n";
            return kExitOk;
        }
        if (*eval) {
            if (*eval_run) {
                return cmd_eval_run(eval_config, eval_model, eval_condition, eval_claims,
                                    eval_books, eval_template, eval_out);
            }
            if (*eval_report) {
                return cmd_eval_report(report_outcomes, report_out, report_claims, report_books,
                                       report_bucket_key);
            }
            if (*eval_compare) return cmd_eval_compare(compare_a, compare_b, compare_test);
        }
    } catch (const clipper::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const clipper::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitOk;
}
