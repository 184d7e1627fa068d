#pragma once

#include <string>
#include <vector>

#include "clipper/corpus.hpp"
#include "clipper/gateway.hpp"
#include "clipper/prompt.hpp"

namespace clipper {

struct ChapterOutline {
    std::size_t chapter_index = 0;
    std::string synopsis;
    std::vector<std::string> events;
    std::vector<std::string> characters;
    std::size_t token_count = 0;
    bool events_out_of_range = false;  // lint: events count outside [5,7]
};

struct BookSummary {
    std::string book_id;
    std::string text;
    std::size_t token_count = 0;
    bool oversized = false;  // lint: summary longer than the configured bound
};

struct CompressionReport {
    struct PerBook {
        std::string book_id;
        double ratio = 0.0;  // outline tokens / book tokens
        bool anomaly = false;  // ratio > 1
    };
    std::vector<PerBook> per_book;
    double mean_ratio = 0.0;  // unweighted mean of per-book ratios
};

inline constexpr std::size_t kEventsBandLow = 5;
inline constexpr std::size_t kEventsBandHigh = 7;
inline constexpr std::size_t kSummaryOversizeTokens = 2000;

/// Parses the sectioned outline response: "Synopsis:", "Major Events:",
/// "Characters:". Strict on section headers, lenient on bullet style
/// ("-", "*", and "1." all accepted). Throws ParseError with the raw response
/// attached when a section is missing or empty.
ChapterOutline parse_outline_response(const std::string& raw, std::size_t chapter_index);

std::string serialize_outline(const ChapterOutline& outline);

/// Renders the outline template with the chapter text and parses the model
/// response. Counts tokens with the given tokenizer.
ChapterOutline outline_chapter(const Chapter& chapter, const PromptTemplate& tmpl,
                               Gateway& gateway, const ResponseCache& cache,
                               const Tokenizer& tokenizer, const std::string& model_id);

/// Whole-book summary; temperature 0.3, max_tokens 1024. Throws
/// EmptySummaryError when the model returns only whitespace.
BookSummary summarize_book(const Book& book, const PromptTemplate& tmpl, Gateway& gateway,
                           const ResponseCache& cache, const Tokenizer& tokenizer,
                           const std::string& model_id);

/// r = sum(outline token counts) / book token count.
/// Throws ZeroLengthBookError when the book has zero tokens.
double compression_rate(const Book& book, const std::vector<ChapterOutline>& outlines);

/// Corpus value is the unweighted mean of per-book ratios, not a ratio of sums.
CompressionReport compression_report(
    const std::vector<std::pair<const Book*, const std::vector<ChapterOutline>*>>& books);

}  // namespace clipper
