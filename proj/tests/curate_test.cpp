#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "clipper/curate.hpp"
#include "clipper/errors.hpp"
#include "test_util.hpp"

using namespace clipper;

namespace {

ClaimPair make_pair(const std::string& pair_id, const std::string& true_text,
                    const std::string& book_id = "book-1") {
    ClaimPair pair;
    pair.pair_id = pair_id;
    pair.book_id = book_id;
    pair.scope = ClaimScope::Book;
    pair.true_claim.text = true_text;
    pair.true_claim.label = ClaimLabel::True;
    pair.true_claim.source_chapters = {1, 2};
    pair.true_claim.cot.context_items = {{1, "event a"}, {2, "event b"}};
    pair.true_claim.cot.explanation = "because";
    pair.true_claim.cot.answer = ClaimLabel::True;
    pair.false_claim = pair.true_claim;
    pair.false_claim.text = true_text + " (but wrong)";
    pair.false_claim.label = ClaimLabel::False;
    pair.false_claim.cot.answer = ClaimLabel::False;
    return pair;
}

void check_partition(const std::vector<ClaimPair>& input, const DedupResult& result) {
    std::set<std::string> seen;
    for (const auto& decision : result.decisions) {
        CHECK(seen.insert(decision.kept_pair_id).second);
        for (const auto& removed : decision.removed_pair_ids) {
            CHECK(seen.insert(removed).second);
        }
    }
    CHECK(seen.size() == input.size());
    for (const auto& pair : input) CHECK(seen.count(pair.pair_id) == 1);
}

}  // namespace

TEST_CASE("dedup_exact collapses normalized duplicates") {
    std::vector<ClaimPair> pairs = {make_pair("p2", "The cat sat."),
                                    make_pair("p1", "the cat sat"),
                                    make_pair("p3", "A different claim.")};
    DedupResult result = dedup_exact(pairs);
    REQUIRE(result.kept.size() == 2);
    // Lexicographically smallest id wins the duplicate group.
    CHECK(result.kept[0].pair_id == "p1");
    CHECK(result.kept[1].pair_id == "p3");
    check_partition(pairs, result);
}

TEST_CASE("dedup_exact is idempotent and order-independent") {
    std::vector<ClaimPair> pairs = {make_pair("a", "x y z"), make_pair("b", "X, y z!"),
                                    make_pair("c", "other"), make_pair("d", "another")};
    DedupResult once = dedup_exact(pairs);
    DedupResult twice = dedup_exact(once.kept);
    REQUIRE(once.kept.size() == twice.kept.size());
    for (std::size_t i = 0; i < once.kept.size(); ++i) {
        CHECK(once.kept[i].pair_id == twice.kept[i].pair_id);
    }

    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<ClaimPair> shuffled = pairs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        DedupResult reshuffled = dedup_exact(shuffled);
        REQUIRE(reshuffled.kept.size() == once.kept.size());
        for (std::size_t i = 0; i < once.kept.size(); ++i) {
            CHECK(reshuffled.kept[i].pair_id == once.kept[i].pair_id);
        }
    }
}

TEST_CASE("dedup_llm maps ordinals back to pair ids") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    PromptTemplate tmpl("dedup these:\n{{claims}}");
    std::vector<ClaimPair> pairs = {make_pair("pa", "first claim"),
                                    make_pair("pb", "second claim"),
                                    make_pair("pc", "first claim reworded")};

    SUBCASE("a duplicate group keeps the lowest ordinal") {
        auto gateway =
            testutil::mock_gateway({MockRule{"dedup", "", "", "DUPLICATES: 1, 3\n", 0, 0}});
        DedupResult result = dedup_llm(pairs, tmpl, *gateway, cache, "m");
        REQUIRE(result.kept.size() == 2);
        CHECK(result.kept[0].pair_id == "pa");
        CHECK(result.kept[1].pair_id == "pb");
        check_partition(pairs, result);
        bool found = false;
        for (const auto& decision : result.decisions) {
            if (decision.kept_pair_id == "pa") {
                CHECK(decision.removed_pair_ids == std::vector<std::string>{"pc"});
                CHECK(decision.method == DedupMethod::Llm);
                found = true;
            }
        }
        CHECK(found);
    }
    SUBCASE("no duplicates keeps everything") {
        auto gateway =
            testutil::mock_gateway({MockRule{"dedup", "", "", "NO DUPLICATES\n", 0, 0}});
        DedupResult result = dedup_llm(pairs, tmpl, *gateway, cache, "m");
        CHECK(result.kept.size() == 3);
        CHECK(result.warnings.empty());
        check_partition(pairs, result);
    }
    SUBCASE("unknown ordinals are ignored with a warning") {
        auto gateway =
            testutil::mock_gateway({MockRule{"dedup", "", "", "DUPLICATES: 1, 9\n", 0, 0}});
        DedupResult result = dedup_llm(pairs, tmpl, *gateway, cache, "m");
        CHECK(result.kept.size() == 3);  // group shrank below 2, nothing removed
        REQUIRE(!result.warnings.empty());
        CHECK(result.warnings[0].find("9") != std::string::npos);
    }
    SUBCASE("unparseable response leaves the batch un-deduplicated, flagged") {
        auto gateway = testutil::mock_gateway(
            {MockRule{"dedup", "", "", "I could not decide, sorry.", 0, 0}});
        DedupResult result = dedup_llm(pairs, tmpl, *gateway, cache, "m");
        CHECK(result.kept.size() == 3);
        REQUIRE(!result.warnings.empty());
        CHECK(result.warnings[0].find("unparseable") != std::string::npos);
        check_partition(pairs, result);
    }
}

TEST_CASE("validate_claim parses judge verdicts") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    PromptTemplate tmpl("{{outlines}}\nT: {{true_claim}}\nF: {{false_claim}}");
    ClaimPair pair = make_pair("pv", "checked claim");
    std::vector<ChapterOutline> outlines(1);
    outlines[0].chapter_index = 1;
    outlines[0].synopsis = "s";
    outlines[0].events = {"event a"};

    SUBCASE("valid") {
        auto gateway = testutil::mock_gateway(
            {MockRule{"validate", "", "", "Verdict: VALID\nRationale: fine\n", 0, 0}});
        ValidationVerdict verdict = validate_claim(pair, outlines, tmpl, *gateway, cache, "m");
        CHECK(verdict.verdict == Validity::Valid);
        CHECK(verdict.pair_id == "pv");
    }
    SUBCASE("invalid carries its rationale") {
        auto gateway = testutil::mock_gateway({MockRule{
            "validate", "", "", "Verdict: INVALID\nRationale: the false claim is true\n", 0, 0}});
        ValidationVerdict verdict = validate_claim(pair, outlines, tmpl, *gateway, cache, "m");
        CHECK(verdict.verdict == Validity::Invalid);
        CHECK(verdict.rationale == "the false claim is true");
    }
    SUBCASE("unparseable judge output quarantines as UNKNOWN") {
        auto gateway =
            testutil::mock_gateway({MockRule{"validate", "", "", "hard to say!", 0, 0}});
        ValidationVerdict verdict = validate_claim(pair, outlines, tmpl, *gateway, cache, "m");
        CHECK(verdict.verdict == Validity::Unknown);
        CHECK_FALSE(verdict.rationale.empty());
    }
}

TEST_CASE("ground_cot judges each context item") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    PromptTemplate tmpl("{{outlines}}\n{{claim}}\n{{events}}");
    ClaimPair pair = make_pair("pg", "grounded claim");
    pair.true_claim.cot.context_items = {{1, "event a"}, {1, "event b"}, {2, "event c"}};
    std::vector<ChapterOutline> outlines(2);
    outlines[0].chapter_index = 1;
    outlines[1].chapter_index = 2;

    SUBCASE("all grounded") {
        auto gateway = testutil::mock_gateway(
            {MockRule{"ground", "", "", "1: GROUNDED\n2: GROUNDED\n3: GROUNDED\n", 0, 0}});
        ClaimGroundedness result = ground_cot(pair, outlines, tmpl, *gateway, cache, "m", 2);
        CHECK(result.events_total == 3);
        CHECK(result.events_grounded == 3);
        CHECK(result.events_unjudged == 0);
        CHECK(result.citations_correct);
    }
    SUBCASE("two of three grounded") {
        auto gateway = testutil::mock_gateway(
            {MockRule{"ground", "", "", "1: GROUNDED\n2: UNGROUNDED\n3: GROUNDED\n", 0, 0}});
        ClaimGroundedness result = ground_cot(pair, outlines, tmpl, *gateway, cache, "m", 2);
        CHECK(result.events_grounded == 2);
        CHECK(result.events_unjudged == 0);
    }
    SUBCASE("a missing item verdict stays unjudged") {
        auto gateway = testutil::mock_gateway(
            {MockRule{"ground", "", "", "1: GROUNDED\n3: GROUNDED\n", 0, 0}});
        ClaimGroundedness result = ground_cot(pair, outlines, tmpl, *gateway, cache, "m", 2);
        CHECK(result.events_grounded == 2);
        CHECK(result.events_unjudged == 1);
    }
    SUBCASE("citations of unknown chapters are flagged") {
        pair.true_claim.cot.context_items = {{9, "event x"}};
        auto gateway =
            testutil::mock_gateway({MockRule{"ground", "", "", "1: GROUNDED\n", 0, 0}});
        ClaimGroundedness result = ground_cot(pair, outlines, tmpl, *gateway, cache, "m", 2);
        CHECK_FALSE(result.citations_correct);
    }
    SUBCASE("a claim with no context items is a caller error") {
        pair.true_claim.cot.context_items.clear();
        auto gateway = testutil::mock_gateway({});
        CHECK_THROWS_AS(ground_cot(pair, outlines, tmpl, *gateway, cache, "m", 2), Error);
    }
}

TEST_CASE("groundedness aggregation counts fully grounded CoTs over judged claims") {
    std::vector<ClaimGroundedness> claims(4);
    claims[0] = {"a", 3, 3, 0, true};   // fully grounded
    claims[1] = {"b", 3, 2, 0, true};   // partial
    claims[2] = {"c", 3, 2, 1, true};   // 2 judged, 2 grounded -> fully grounded
    claims[3] = {"d", 2, 0, 2, true};   // nothing judged -> excluded
    GroundednessReport report = aggregate_groundedness(claims);
    CHECK(report.claims_counted == 3);
    CHECK(report.fully_grounded_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("error annotation replay reproduces the published audit rates") {
    // Category counts behind the published NAIVE (52) and CLIPPER (66) audits.
    auto build_csv = [](std::size_t invalid, std::size_t misattr, std::size_t explicit_refs,
                        std::size_t dup, std::size_t none) {
        std::string csv = "pair_id,category,note\n";
        std::size_t row = 0;
        auto add = [&](const char* category, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                csv += "p" + std::to_string(row++) + "," + category + ",\n";
            }
        };
        add("Invalid", invalid);
        add("Misattribution", misattr);
        add("ExplicitReferences", explicit_refs);
        add("Duplication", dup);
        add("None", none);
        return csv;
    };

    SUBCASE("52 annotations, 38 with errors -> 73.1%") {
        auto annotations = load_annotations_csv(build_csv(6, 15, 8, 9, 14), {});
        REQUIRE(annotations.size() == 52);
        ErrorReport report = annotate_errors(annotations);
        CHECK(std::round(report.any_error_rate * 1000.0) / 10.0 == doctest::Approx(73.1));
        CHECK(report.counts.at(ErrorCategory::Misattribution) == 15);
    }
    SUBCASE("66 annotations, 11 with errors -> 16.7%") {
        auto annotations = load_annotations_csv(build_csv(6, 3, 0, 2, 55), {});
        REQUIRE(annotations.size() == 66);
        ErrorReport report = annotate_errors(annotations);
        CHECK(std::round(report.any_error_rate * 1000.0) / 10.0 == doctest::Approx(16.7));
    }
    SUBCASE("empty file gives an all-None report") {
        ErrorReport report = annotate_errors({});
        CHECK(report.total == 0);
        CHECK(report.any_error_rate == 0.0);
    }
}

TEST_CASE("annotations referencing unknown pairs are rejected") {
    CHECK_THROWS_AS(load_annotations_csv("pair_id,category\nghost,Invalid\n", {"real"}),
                    UnknownPairIdError);
    CHECK_THROWS_AS(load_tags_csv("pair_id,kinds\nghost,Event\n", {"real"}),
                    UnknownPairIdError);
}

TEST_CASE("perturbation tag replay reproduces the published frequency column") {
    // 95 tagged pairs; counts chosen so count/95 rounds to the published row.
    struct Row {
        PerturbationKind kind;
        std::size_t count;
        double expected_pct;
    };
    std::vector<Row> rows = {{PerturbationKind::Event, 41, 43.2},
                             {PerturbationKind::Person, 30, 31.6},
                             {PerturbationKind::Object, 15, 15.8},
                             {PerturbationKind::Location, 13, 13.7},
                             {PerturbationKind::Time, 6, 6.3},
                             {PerturbationKind::Affect, 4, 4.2}};
    std::string csv = "pair_id,kinds\n";
    std::size_t pair_counter = 0;
    // Multi-label: spread kinds over 95 pairs by cycling.
    std::vector<std::vector<std::string>> kinds_per_pair(95);
    std::size_t cursor = 0;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.count; ++i) {
            kinds_per_pair[cursor % 95].push_back(to_string(row.kind));
            ++cursor;
        }
    }
    for (const auto& kinds : kinds_per_pair) {
        csv += "p" + std::to_string(pair_counter++) + ",";
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            if (i) csv += ";";
            csv += kinds[i];
        }
        if (kinds.empty()) csv += "Event";  // keep every row non-empty
        csv += "\n";
    }

    auto tags = load_tags_csv(csv, {});
    REQUIRE(tags.size() == 95);
    PerturbationDistribution distribution = tag_perturbations(tags);
    CHECK(distribution.tagged_pairs == 95);
    for (const auto& row : rows) {
        double pct = distribution.frequencies.at(row.kind) * 100.0;
        CHECK(std::round(pct * 10.0) / 10.0 == doctest::Approx(row.expected_pct));
    }
}

TEST_CASE("multi-label tags increment every listed counter") {
    auto tags = load_tags_csv("pair_id,kinds\np1,Event;Person\n", {});
    PerturbationDistribution distribution = tag_perturbations(tags);
    CHECK(distribution.counts.at(PerturbationKind::Event) == 1);
    CHECK(distribution.counts.at(PerturbationKind::Person) == 1);
    CHECK(distribution.tagged_pairs == 1);
}

TEST_CASE("no tags means an empty distribution") {
    PerturbationDistribution distribution = tag_perturbations({});
    CHECK(distribution.tagged_pairs == 0);
    CHECK(distribution.counts.empty());
}
