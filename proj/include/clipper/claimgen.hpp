#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clipper/compress.hpp"
#include "clipper/corpus.hpp"
#include "clipper/gateway.hpp"
#include "clipper/prompt.hpp"

#include <json.hpp>

namespace clipper {

enum class ClaimLabel { True, False };
enum class ClaimScope { Book, Chapter };

std::string to_string(ClaimLabel label);
std::string to_string(ClaimScope scope);
ClaimLabel claim_label_from_string(const std::string& s);
ClaimScope claim_scope_from_string(const std::string& s);

struct ContextItem {
    std::size_t chapter_index = 0;
    std::string event;
};

struct ChainOfThought {
    std::vector<ContextItem> context_items;
    std::string explanation;
    ClaimLabel answer = ClaimLabel::True;
};

struct Claim {
    std::string text;
    ClaimLabel label = ClaimLabel::True;
    std::vector<std::size_t> source_chapters;
    ChainOfThought cot;
};

enum class LintKind {
    ExplicitChapterReference,
    DirectQuote,
    EventsOutOfRange,
    FewerThanTwoChapters,
};

std::string to_string(LintKind kind);
LintKind lint_kind_from_string(const std::string& s);

struct LintFlag {
    LintKind kind;
    std::string detail;  // offending span or count
};

struct ClaimPair {
    std::string pair_id;
    std::string book_id;
    ClaimScope scope = ClaimScope::Book;
    Claim true_claim;
    Claim false_claim;
    std::vector<LintFlag> lints;
};

nlohmann::json pair_to_json(const ClaimPair& pair);
ClaimPair pair_from_json(const nlohmann::json& body);

/// One parsed <context>/<explanation>/<answer> block, with the claim text from
/// the nearest preceding claim tag when present.
struct ClaimFragment {
    std::optional<std::string> claim_text;
    std::vector<ContextItem> context_items;
    std::string explanation;
    ClaimLabel answer = ClaimLabel::True;
};

/// Extracts tagged fragments from a model response, tolerant of surrounding
/// prose. The answer token must normalize to TRUE or FALSE (case-insensitive,
/// trailing punctuation allowed); anything else raises AmbiguousAnswerError.
/// Missing tags raise MissingTagError. Deterministic and idempotent.
std::vector<ClaimFragment> parse_claim_response(const std::string& raw);

/// Serializes a chain of thought back into the tag format; the inverse of
/// fragment extraction for well-formed inputs.
std::string serialize_cot(const ChainOfThought& cot);

struct GenerationResult {
    std::vector<ClaimPair> pairs;        // lint-clean pairs
    std::vector<ClaimPair> quarantined;  // pairs with lint flags, kept in a sidecar
    std::size_t parse_failures = 0;      // malformed pair blocks, skipped and counted
    std::vector<std::string> warnings;
};

/// Book-level pairs from chapter outlines plus the book summary. Each pair's
/// claims must cite at least 2 distinct chapters or they are quarantined with
/// a FewerThanTwoChapters flag. Citations of chapters absent from the book are
/// parse failures. Throws BatchEmptyError when nothing parses.
GenerationResult gen_book_level_pairs(const std::vector<ChapterOutline>& outlines,
                                      const BookSummary& summary, std::size_t n,
                                      const PromptTemplate& tmpl, Gateway& gateway,
                                      const ResponseCache& cache, const std::string& model_id,
                                      const std::string& book_id, std::size_t chapter_count);

/// Chapter-level pairs from one outline plus the book summary; scope=CHAPTER,
/// source_chapters=[outline.chapter_index]. A pair citing a different chapter
/// raises ChapterMismatchError for that pair (skipped and counted).
GenerationResult gen_chapter_level_pairs(const BookSummary& summary,
                                         const ChapterOutline& outline, std::size_t n,
                                         const PromptTemplate& tmpl, Gateway& gateway,
                                         const ResponseCache& cache, const std::string& model_id,
                                         const std::string& book_id);

/// Zero-shot generation straight from the full text; also serves short
/// stories. Scope is BOOK; empty citations are flagged, not fatal.
GenerationResult naive_generate(const std::string& text, const PromptTemplate& tmpl,
                                Gateway& gateway, const ResponseCache& cache,
                                const std::string& model_id, const std::string& book_id,
                                std::size_t n, std::size_t chapter_count);

/// Surface lints on a finished claim: explicit chapter references
/// ("Chapter 11", "chapter eleven") and direct quotes (a quoted span of >= 8
/// consecutive words appearing verbatim in the book text).
std::vector<LintFlag> lint_claim(const Claim& claim, const std::string& book_text);

inline constexpr std::size_t kDirectQuoteWords = 8;

}  // namespace clipper
