#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clipper/claimgen.hpp"
#include "clipper/corpus.hpp"
#include "clipper/gateway.hpp"
#include "clipper/prompt.hpp"
#include "clipper/stats.hpp"

#include <json.hpp>

namespace clipper {

// --- conditions -----------------------------------------------------------

enum class ConditionKind { FullText, TitleAuthorOnly, NoContext, Rag };

struct EvalCondition {
    ConditionKind kind = ConditionKind::FullText;
    std::size_t rag_top_k = 50;
    std::size_t rag_max_words = 256;
};

EvalCondition make_condition(ConditionKind kind, std::size_t rag_top_k = 50,
                             std::size_t rag_max_words = 256);
std::string to_string(const EvalCondition& condition);
EvalCondition condition_from_string(const std::string& s);

// --- verdicts ---------------------------------------------------------------

enum class Verdict { True, False, Unparseable };

std::string to_string(Verdict verdict);
Verdict verdict_from_string(const std::string& s);

/// First well-formed <answer> tag wins; fallback is the last standalone
/// TRUE/FALSE line. UNPARSEABLE is a value, never an error.
Verdict extract_answer(const std::string& raw);

struct EvalOutcome {
    std::string pair_id;
    Verdict true_verdict = Verdict::Unparseable;
    Verdict false_verdict = Verdict::Unparseable;
    bool pair_correct = false;  // true_verdict==TRUE and false_verdict==FALSE
    std::string condition;
};

nlohmann::json outcome_to_json(const EvalOutcome& outcome);
EvalOutcome outcome_from_json(const nlohmann::json& body);

/// Fraction of pairs verified correctly on both sides. Throws EmptyRunError.
double paired_accuracy(const std::vector<EvalOutcome>& outcomes);

// --- prompting ---------------------------------------------------------------

/// Builds the context block for a condition: full text, a title/author line
/// only, nothing, or retrieved passages.
std::string render_eval_prompt(const PromptTemplate& tmpl, const Book& book,
                               const std::string& claim_text, const EvalCondition& condition);

/// Renders, calls the model, extracts the verdict. Extraction failures come
/// back as UNPARSEABLE; gateway errors propagate.
Verdict verify_claim(const Book& book, const std::string& claim_text,
                     const EvalCondition& condition, const PromptTemplate& tmpl,
                     Gateway& gateway, const ResponseCache& cache, const std::string& model_id);

EvalOutcome evaluate_pair(const ClaimPair& pair, const Book& book,
                          const EvalCondition& condition, const PromptTemplate& tmpl,
                          Gateway& gateway, const ResponseCache& cache,
                          const std::string& model_id);

// --- retrieval ----------------------------------------------------------------

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    std::size_t max_words = 256;
    std::size_t top_k = 50;
};

struct Passage {
    std::size_t index = 0;  // position in the book, 0-based
    std::string text;
    std::size_t word_count = 0;
    bool hard_split = false;  // came from splitting a sentence longer than max_words
};

/// Greedy sentence-respecting packing; sentences longer than max_words are
/// hard-split at word boundaries and flagged.
std::vector<Passage> pack_passages(const std::string& book_text, std::size_t max_words);

struct ScoredPassage {
    std::size_t index = 0;
    double score = 0.0;
    std::string text;
};

/// Okapi BM25 over one book's passages; ties broken by passage position.
/// Throws EmptyBookError when the text yields no passages.
std::vector<ScoredPassage> bm25_retrieve(const std::string& book_text,
                                         const std::string& claim_text,
                                         const Bm25Params& params);

std::vector<ScoredPassage> bm25_rank(const std::vector<Passage>& passages,
                                     const std::string& claim_text, const Bm25Params& params);

/// Lowercased alphanumeric terms; shared by index and query sides.
std::vector<std::string> bm25_tokenize(const std::string& text);

// --- bucketed analysis -----------------------------------------------------------

enum class BucketKey { ChapterTokenDistance, BookTokenLength, EventPlacementQuantile };

BucketKey bucket_key_from_string(const std::string& s);
std::string to_string(BucketKey key);

struct BucketReport {
    double lower = 0.0;  // inclusive
    double upper = 0.0;  // exclusive except for the last bucket
    std::size_t pairs = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

/// Token offset where each chapter starts: prefix sums of chapter token
/// counts. The feature source for distance and placement buckets.
std::vector<std::size_t> chapter_start_offsets(const Book& book);

/// Bucket feature for one pair; nullopt when the pair cites no chapters.
std::optional<double> bucket_feature(const ClaimPair& pair, const Book& book, BucketKey key);

std::vector<BucketReport> accuracy_by_bucket(const std::vector<EvalOutcome>& outcomes,
                                             const std::map<std::string, ClaimPair>& pairs_by_id,
                                             const std::map<std::string, Book>& books_by_id,
                                             BucketKey key, std::vector<double> edges = {});

// --- run report --------------------------------------------------------------------

struct RunReport {
    std::string condition;
    std::string model_id;
    std::size_t pairs = 0;
    std::size_t correct = 0;
    std::size_t unparseable_claims = 0;  // counted, never silently coerced to FALSE
    double accuracy = 0.0;
};

RunReport summarize_run(const std::vector<EvalOutcome>& outcomes, const std::string& model_id);
nlohmann::json report_to_json(const RunReport& report);
std::string render_report_text(const RunReport& report);

/// Discordant counts for McNemar between two runs over the same pairs:
/// b = pairs only run A got right, c = pairs only run B got right.
std::pair<std::size_t, std::size_t> discordant_counts(const std::vector<EvalOutcome>& run_a,
                                                      const std::vector<EvalOutcome>& run_b);

}  // namespace clipper
