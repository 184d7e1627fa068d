#include <doctest.h>

#include <cmath>

#include "clipper/compress.hpp"
#include "clipper/errors.hpp"
#include "test_util.hpp"

using namespace clipper;

namespace {

const char* kWellFormedOutline =
    "Synopsis: A quiet chapter about a journey.\n"
    "Major Events:\n"
    "- the narrator packs a bag\n"
    "- a letter arrives\n"
    "- the train departs at dawn\n"
    "- a stranger shares the compartment\n"
    "- the city comes into view\n"
    "- the narrator steps onto the platform\n"
    "Characters:\n"
    "- The narrator\n"
    "- The stranger\n";

}  // namespace

TEST_CASE("outline parser handles the well-formed case") {
    ChapterOutline outline = parse_outline_response(kWellFormedOutline, 3);
    CHECK(outline.chapter_index == 3);
    CHECK(outline.synopsis == "A quiet chapter about a journey.");
    REQUIRE(outline.events.size() == 6);
    CHECK(outline.events.front() == "the narrator packs a bag");
    REQUIRE(outline.characters.size() == 2);
    CHECK_FALSE(outline.events_out_of_range);
}

TEST_CASE("outline parser flags event counts outside the 5-7 band") {
    std::string four_events =
        "Synopsis: short.\n"
        "Major Events:\n- a\n- b\n- c\n- d\n"
        "Characters:\n- X\n";
    ChapterOutline outline = parse_outline_response(four_events, 1);
    REQUIRE(outline.events.size() == 4);
    CHECK(outline.events_out_of_range);  // lint, not a rejection

    std::string eight_events =
        "Synopsis: short.\n"
        "Major Events:\n- a\n- b\n- c\n- d\n- e\n- f\n- g\n- h\n"
        "Characters:\n- X\n";
    CHECK(parse_outline_response(eight_events, 1).events_out_of_range);
}

TEST_CASE("outline parser is strict on section headers") {
    std::string missing_events =
        "Synopsis: something.\n"
        "Characters:\n- X\n";
    CHECK_THROWS_AS(parse_outline_response(missing_events, 1), ParseError);
    try {
        parse_outline_response(missing_events, 1);
    } catch (const ParseError& error) {
        CHECK(error.raw == missing_events);  // raw response preserved for repair
    }
}

TEST_CASE("outline parser is lenient on bullet styles") {
    std::string mixed =
        "Synopsis: s.\n"
        "Major Events:\n"
        "* first\n"
        "1. second\n"
        "- third\n"
        "2) fourth\n"
        "fifth without a bullet\n"
        "Characters:\n* A\n";
    ChapterOutline outline = parse_outline_response(mixed, 1);
    REQUIRE(outline.events.size() == 5);
    CHECK(outline.events[0] == "first");
    CHECK(outline.events[1] == "second");
    CHECK(outline.events[2] == "third");
    CHECK(outline.events[3] == "fourth");
    CHECK(outline.events[4] == "fifth without a bullet");
}

TEST_CASE("outline round-trip preserves every event string") {
    ChapterOutline outline = parse_outline_response(kWellFormedOutline, 2);
    ChapterOutline reparsed = parse_outline_response(serialize_outline(outline), 2);
    CHECK(reparsed.synopsis == outline.synopsis);
    CHECK(reparsed.events == outline.events);
    CHECK(reparsed.characters == outline.characters);
}

TEST_CASE("outline_chapter renders, calls, parses, and counts") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    auto gateway =
        testutil::mock_gateway({MockRule{"outline", "the chapter body", "", kWellFormedOutline,
                                         0, 0}});
    PromptTemplate tmpl("Outline this:\n{{chapter_text}}\n");
    Chapter chapter;
    chapter.index = 5;
    chapter.text = "the chapter body";
    WhitespaceTokenizer tok;
    ChapterOutline outline = outline_chapter(chapter, tmpl, *gateway, cache, tok, "m");
    CHECK(outline.chapter_index == 5);
    CHECK(outline.token_count == tok.count(serialize_outline(outline)));
}

TEST_CASE("summarize_book stores text and flags pathologies") {
    testutil::TempDir tmp;
    ResponseCache cache(tmp.path / "cache");
    Book book;
    book.book_id = "b1";
    book.title = "T";
    Chapter ch;
    ch.index = 1;
    ch.text = "some chapter text\n";
    book.chapters.push_back(ch);
    WhitespaceTokenizer tok;
    PromptTemplate tmpl("Summarize {{title}}:\n{{book_text}}\n");

    SUBCASE("three-paragraph summary is captured verbatim") {
        std::string summary = "Para one.\n\nPara two.\n\nPara three.";
        auto gateway = testutil::mock_gateway({MockRule{"summary", "", "", summary, 0, 0}});
        BookSummary result = summarize_book(book, tmpl, *gateway, cache, tok, "m");
        CHECK(result.text == summary);
        CHECK(result.token_count == tok.count(summary));
        CHECK_FALSE(result.oversized);
    }
    SUBCASE("empty response errors") {
        auto gateway = testutil::mock_gateway({MockRule{"summary", "", "", "  \n ", 0, 0}});
        CHECK_THROWS_AS(summarize_book(book, tmpl, *gateway, cache, tok, "m"),
                        EmptySummaryError);
    }
    SUBCASE("summaries beyond 2000 tokens are flagged") {
        std::string huge;
        for (int i = 0; i < 2001; ++i) huge += "word ";
        auto gateway = testutil::mock_gateway({MockRule{"summary", "", "", huge, 0, 0}});
        CHECK(summarize_book(book, tmpl, *gateway, cache, tok, "m").oversized);
    }
}

TEST_CASE("compression rate arithmetic") {
    Book book;
    book.book_id = "b";
    book.token_count = 90437;
    ChapterOutline outline;
    outline.token_count = 8745;

    SUBCASE("paper-sized averages give roughly ten percent") {
        double r = compression_rate(book, {outline});
        CHECK(r == doctest::Approx(0.0967).epsilon(1e-3));
        CHECK(std::abs(r - 0.0967) < 1e-4);
    }
    SUBCASE("outline as long as the book gives exactly 1") {
        book.token_count = 8745;
        CHECK(compression_rate(book, {outline}) == doctest::Approx(1.0));
    }
    SUBCASE("scale-free: doubling both leaves r unchanged") {
        double r1 = compression_rate(book, {outline});
        book.token_count *= 2;
        ChapterOutline doubled = outline;
        doubled.token_count *= 2;
        CHECK(compression_rate(book, {doubled}) == doctest::Approx(r1).epsilon(1e-12));
    }
    SUBCASE("zero-length book errors") {
        book.token_count = 0;
        CHECK_THROWS_AS(compression_rate(book, {outline}), ZeroLengthBookError);
    }
}

TEST_CASE("corpus compression is the mean of per-book ratios") {
    Book book_a;
    book_a.book_id = "a";
    book_a.token_count = 100;
    std::vector<ChapterOutline> outlines_a(1);
    outlines_a[0].token_count = 8;  // r = 0.08

    Book book_b;
    book_b.book_id = "b";
    book_b.token_count = 200;
    std::vector<ChapterOutline> outlines_b(1);
    outlines_b[0].token_count = 24;  // r = 0.12

    CompressionReport report =
        compression_report({{&book_a, &outlines_a}, {&book_b, &outlines_b}});
    CHECK(report.mean_ratio == doctest::Approx(0.10));
    // Mean of ratios, not ratio of sums: (8+24)/(100+200) = 0.1067 would differ.
    CHECK(report.mean_ratio != doctest::Approx(32.0 / 300.0));
    REQUIRE(report.per_book.size() == 2);
    CHECK_FALSE(report.per_book[0].anomaly);
}

TEST_CASE("ratios above 1 are flagged as anomalies") {
    Book book;
    book.book_id = "a";
    book.token_count = 10;
    std::vector<ChapterOutline> outlines(1);
    outlines[0].token_count = 11;
    CompressionReport report = compression_report({{&book, &outlines}});
    CHECK(report.per_book[0].anomaly);
}
