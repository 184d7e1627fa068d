// End-to-end exercises of the installed CLI surface: subcommands, file
// formats, and exit codes. Spawns the real binary named by CLIPPER_BIN.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "clipper/pipeline.hpp"
#include "test_util.hpp"

using namespace clipper;
namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* bin = std::getenv("CLIPPER_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "CLIPPER_BIN must be set (ctest does this)");
    return std::string("\"") + bin + "\"";
}

int run_cli(const std::string& args, const fs::path& log) {
    std::string command = binary() + " " + args + " >> " + log.string() + " 2>&1";
    int raw = std::system(command.c_str());
    return WEXITSTATUS(raw);
}

}  // namespace

TEST_CASE("cli: ingest, full run, rerun, and eval lifecycle") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    PipelineConfig config = testutil::fixture_pipeline_config(tmp.path);
    const fs::path config_path = tmp.path / "config.json";

    // ingest as a standalone command
    CHECK(run_cli("ingest --in " + (testutil::fixtures_dir() / "books").string() +
                      " --manifest " +
                      (testutil::fixtures_dir() / "books" / "manifest.json").string() +
                      " --out " + (tmp.path / "books.jsonl").string(),
                  log) == 0);
    CHECK(read_books_jsonl(tmp.path / "books.jsonl").size() == 2);

    // A tiny admission limit rejects everything.
    CHECK(run_cli("ingest --in " + (testutil::fixtures_dir() / "books").string() +
                      " --manifest " +
                      (testutil::fixtures_dir() / "books" / "manifest.json").string() +
                      " --out " + (tmp.path / "none.jsonl").string() + " --limit-tokens 10",
                  log) == 0);
    CHECK(read_books_jsonl(tmp.path / "none.jsonl").empty());

    // dry run plans without side effects
    CHECK(run_cli("run --dry-run --config " + config_path.string(), log) == 0);
    CHECK_FALSE(fs::exists(config.out_dir / "books.jsonl"));

    // full run, then a no-op rerun
    CHECK(run_cli("run --config " + config_path.string(), log) == 0);
    CHECK(run_cli("run --config " + config_path.string(), log) == 0);
    auto manifest = RunManifest::load(config.out_dir / "manifest.json");
    REQUIRE(manifest.has_value());
    CHECK(manifest->executed_count() == 0);

    // eval with the default scripted verdict (always TRUE): plumbing works,
    // accuracy lands at zero because false claims come back wrong.
    const fs::path outcomes_true = tmp.path / "outcomes_true.jsonl";
    CHECK(run_cli("eval run --config " + config_path.string() + " --model mock-claimer" +
                      " --condition full_text --claims " +
                      (config.out_dir / "curated.jsonl").string() + " --books " +
                      (config.out_dir / "books.jsonl").string() + " --template " +
                      (testutil::templates_dir() / "eval.md").string() + " --out " +
                      outcomes_true.string(),
                  log) == 0);
    auto outcomes = read_outcomes_jsonl(outcomes_true);
    CHECK(outcomes.size() == 8);
    CHECK(paired_accuracy(outcomes) == 0.0);

    // Build a per-claim script from the curated pairs: every verdict correct.
    auto pairs = read_pairs_jsonl(config.out_dir / "curated.jsonl");
    nlohmann::json script;
    script["rules"] = nlohmann::json::array();
    for (const auto& pair : pairs) {
        script["rules"].push_back({{"tag", "eval"},
                                   {"contains", "Claim: " + pair.true_claim.text},
                                   {"text", "<answer>TRUE</answer>"}});
        script["rules"].push_back({{"tag", "eval"},
                                   {"contains", "Claim: " + pair.false_claim.text},
                                   {"text", "<answer>FALSE</answer>"}});
    }
    const fs::path eval_script = tmp.path / "eval_script.json";
    testutil::spit(eval_script, script.dump(2));
    auto body = nlohmann::json::parse(testutil::slurp(config_path));
    body["provider"]["mock_script"] = eval_script.string();
    body["cache_dir"] = (tmp.path / "eval_cache").string();
    const fs::path eval_config = tmp.path / "eval_config.json";
    testutil::spit(eval_config, body.dump(2));

    const fs::path outcomes_scripted = tmp.path / "outcomes_scripted.jsonl";
    CHECK(run_cli("eval run --config " + eval_config.string() + " --model mock-claimer" +
                      " --condition full_text --claims " +
                      (config.out_dir / "curated.jsonl").string() + " --books " +
                      (config.out_dir / "books.jsonl").string() + " --template " +
                      (testutil::templates_dir() / "eval.md").string() + " --out " +
                      outcomes_scripted.string(),
                  log) == 0);
    CHECK(paired_accuracy(read_outcomes_jsonl(outcomes_scripted)) == 1.0);

    // report
    const fs::path report_path = tmp.path / "report.json";
    CHECK(run_cli("eval report --outcomes " + outcomes_scripted.string() + " --out " +
                      report_path.string(),
                  log) == 0);
    auto report = nlohmann::json::parse(testutil::slurp(report_path));
    CHECK(report.at("accuracy").get<double>() == 1.0);
    CHECK(report.at("pairs").get<std::size_t>() == 8);

    // compare: all 8 pairs discordant in one direction -> chi2 = 49/8
    CHECK(run_cli("eval compare --a " + outcomes_true.string() + " --b " +
                      outcomes_scripted.string() + " --test mcnemar",
                  log) == 0);
    std::string log_text = testutil::slurp(log);
    CHECK(log_text.find("McNemar statistic=6.125") != std::string::npos);
}

TEST_CASE("cli: rag condition retrieves passages end to end") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    PipelineConfig config = testutil::fixture_pipeline_config(tmp.path);
    const fs::path config_path = tmp.path / "config.json";
    CHECK(run_cli("run --config " + config_path.string(), log) == 0);

    const fs::path outcomes = tmp.path / "outcomes_rag.jsonl";
    CHECK(run_cli("eval run --config " + config_path.string() + " --model mock-claimer" +
                      " --condition rag_k5_w64 --claims " +
                      (config.out_dir / "curated.jsonl").string() + " --books " +
                      (config.out_dir / "books.jsonl").string() + " --template " +
                      (testutil::templates_dir() / "eval.md").string() + " --out " +
                      outcomes.string(),
                  log) == 0);
    CHECK(read_outcomes_jsonl(outcomes).size() == 8);
}

TEST_CASE("cli: exit codes distinguish config errors from stage failures") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    PipelineConfig config = testutil::fixture_pipeline_config(tmp.path);

    // Invalid enum in the config -> exit 2.
    auto body = nlohmann::json::parse(testutil::slurp(tmp.path / "config.json"));
    body["mode"] = "telepathy";
    testutil::spit(tmp.path / "bad_config.json", body.dump());
    CHECK(run_cli("run --config " + (tmp.path / "bad_config.json").string(), log) == 2);

    // A mock script with no claim rules -> generate stage fails -> exit 3.
    nlohmann::json script =
        nlohmann::json::parse(testutil::slurp(testutil::fixtures_dir() / "mock_script.json"));
    nlohmann::json pruned = nlohmann::json::array();
    for (auto& rule : script.at("rules")) {
        std::string tag = rule.value("tag", "");
        if (tag == "claim_book" || tag == "claim_chapter") continue;
        if (rule.contains("text_file")) {
            rule["text_file"] =
                (testutil::fixtures_dir() / rule.at("text_file").get<std::string>()).string();
        }
        pruned.push_back(rule);
    }
    script["rules"] = pruned;
    testutil::spit(tmp.path / "broken_script.json", script.dump());
    body = nlohmann::json::parse(testutil::slurp(tmp.path / "config.json"));
    body["provider"]["mock_script"] = (tmp.path / "broken_script.json").string();
    testutil::spit(tmp.path / "broken_config.json", body.dump());
    CHECK(run_cli("run --config " + (tmp.path / "broken_config.json").string(), log) == 3);

    // Unknown subcommand -> CLI parse error -> exit 2.
    CHECK(run_cli("frobnicate", log) == 2);

    // A structurally incomplete config (missing "input") -> exit 2.
    testutil::spit(tmp.path / "incomplete.json", "{\"out_dir\": \"x\"}");
    CHECK(run_cli("run --config " + (tmp.path / "incomplete.json").string(), log) == 2);
}

TEST_CASE("cli: per-stage subcommands chain through explicit paths") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    PipelineConfig config = testutil::fixture_pipeline_config(tmp.path);
    const std::string cfg = " --config " + (tmp.path / "config.json").string();
    const fs::path work = tmp.path / "work";
    fs::create_directories(work);

    // ingest -> compress -> generate -> curate dedup/validate/ground -> export
    const fs::path books = work / "books.jsonl";
    CHECK(run_cli("ingest --in " + (testutil::fixtures_dir() / "books").string() +
                      " --manifest " +
                      (testutil::fixtures_dir() / "books" / "manifest.json").string() +
                      " --out " + books.string() + " --strict",
                  log) == 0);

    const fs::path outlines = work / "outlines.jsonl";
    const fs::path summaries = work / "summaries.jsonl";
    CHECK(run_cli("compress" + cfg + " --books " + books.string() + " --out-outlines " +
                      outlines.string() + " --out-summaries " + summaries.string() +
                      " --outline-template " + (testutil::templates_dir() / "outline.md").string() +
                      " --summary-template " + (testutil::templates_dir() / "summary.md").string(),
                  log) == 0);
    CHECK(fs::exists(outlines));
    CHECK(fs::exists(summaries));

    const fs::path claims = work / "claims.jsonl";
    CHECK(run_cli("generate" + cfg + " --mode clipper --scope both --books " + books.string() +
                      " --outlines " + outlines.string() + " --summaries " +
                      summaries.string() + " --out " + claims.string(),
                  log) == 0);
    CHECK(read_pairs_jsonl(claims).size() == 10);

    const fs::path deduped = work / "deduped.jsonl";
    CHECK(run_cli("curate dedup" + cfg + " --claims " + claims.string() + " --out " +
                      deduped.string() + " --decisions " + (work / "decisions.jsonl").string(),
                  log) == 0);
    CHECK(read_pairs_jsonl(deduped).size() == 9);  // one exact duplicate collapsed

    const fs::path valid = work / "valid.jsonl";
    CHECK(run_cli("curate validate" + cfg + " --claims " + deduped.string() + " --outlines " +
                      outlines.string() + " --verdicts " + (work / "verdicts.jsonl").string() +
                      " --out " + valid.string() + " --quarantine " +
                      (work / "quarantined.jsonl").string(),
                  log) == 0);
    CHECK(read_pairs_jsonl(valid).size() == 8);  // one judged invalid

    CHECK(run_cli("curate ground" + cfg + " --claims " + valid.string() + " --outlines " +
                      outlines.string() + " --out " + (work / "groundedness.jsonl").string(),
                  log) == 0);
    CHECK(fs::exists(work / "groundedness.jsonl"));

    const fs::path split_dir = work / "sft";
    nlohmann::json spec{{"train", 2}, {"val", 1}, {"test", 3}, {"unit", "pairs"}, {"seed", 42}};
    testutil::spit(work / "split_spec.json", spec.dump());
    CHECK(run_cli("export" + cfg + " --claims " + valid.string() + " --books " +
                      books.string() + " --spec " + (work / "split_spec.json").string() +
                      " --out-dir " + split_dir.string(),
                  log) == 0);
    CHECK(import_jsonl(split_dir / "sft_train.jsonl").size() == 4);
    CHECK(import_jsonl(split_dir / "sft_test.jsonl").size() == 10);
}

TEST_CASE("cli: curate report replays audit CSVs") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    std::string annotations = "pair_id,category,note\n";
    for (int i = 0; i < 38; ++i) annotations += "p" + std::to_string(i) + ",Invalid,\n";
    for (int i = 38; i < 52; ++i) annotations += "p" + std::to_string(i) + ",None,\n";
    testutil::spit(tmp.path / "annotations.csv", annotations);
    std::string tags = "pair_id,kinds\nq1,Event;Person\nq2,Event\n";
    testutil::spit(tmp.path / "tags.csv", tags);

    CHECK(run_cli("curate report --annotations " + (tmp.path / "annotations.csv").string() +
                      " --tags " + (tmp.path / "tags.csv").string() + " --out " +
                      (tmp.path / "audit.json").string(),
                  log) == 0);
    auto body = nlohmann::json::parse(testutil::slurp(tmp.path / "audit.json"));
    CHECK(body.at("errors").at("any_error_rate").get<double>() ==
          doctest::Approx(38.0 / 52.0));
    CHECK(body.at("perturbations").at("frequencies").at("Event").get<double>() == 1.0);
    CHECK(body.at("perturbations").at("frequencies").at("Person").get<double>() == 0.5);

    // Neither input is a config error.
    CHECK(run_cli("curate report", log) == 2);
}

TEST_CASE("cli: eval report emits per-condition tables and bucket series") {
    testutil::TempDir tmp;
    const fs::path log = tmp.path / "cli.log";
    PipelineConfig config = testutil::fixture_pipeline_config(tmp.path);
    const std::string cfg = " --config " + (tmp.path / "config.json").string();
    CHECK(run_cli("run" + cfg, log) == 0);

    const fs::path outcomes = tmp.path / "outcomes.jsonl";
    CHECK(run_cli("eval run" + cfg + " --model mock-claimer --condition full_text --claims " +
                      (config.out_dir / "curated.jsonl").string() + " --books " +
                      (config.out_dir / "books.jsonl").string() + " --template " +
                      (testutil::templates_dir() / "eval.md").string() + " --out " +
                      outcomes.string(),
                  log) == 0);

    const fs::path report = tmp.path / "report.json";
    CHECK(run_cli("eval report --outcomes " + outcomes.string() + " --claims " +
                      (config.out_dir / "curated.jsonl").string() + " --books " +
                      (config.out_dir / "books.jsonl").string() +
                      " --key event_placement_quantile --out " + report.string(),
                  log) == 0);
    auto body = nlohmann::json::parse(testutil::slurp(report));
    CHECK(body.at("buckets").at("key") == "event_placement_quantile");
    std::size_t bucketed = 0;
    for (const auto& bucket : body.at("buckets").at("series")) {
        bucketed += bucket.at("pairs").get<std::size_t>();
    }
    CHECK(bucketed == 8);
}
