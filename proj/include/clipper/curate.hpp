#pragma once

#include <map>
#include <string>
#include <vector>

#include "clipper/claimgen.hpp"

namespace clipper {

enum class DedupMethod { Exact, Llm };

struct DedupDecision {
    std::string kept_pair_id;
    std::vector<std::string> removed_pair_ids;
    DedupMethod method = DedupMethod::Exact;
};

struct DedupResult {
    std::vector<ClaimPair> kept;
    std::vector<DedupDecision> decisions;  // one per kept pair; together they partition the input
    std::vector<std::string> warnings;
};

/// Collapses pairs whose true-claim texts are equal after normalization
/// (lowercase, collapse whitespace, strip punctuation), keeping the
/// lexicographically smallest pair_id. Idempotent and order-independent.
DedupResult dedup_exact(const std::vector<ClaimPair>& pairs);

/// LLM-judged dedup over one book's pairs. The judge sees numbered claims and
/// answers with duplicate groups ("DUPLICATES: 1, 3") or "NO DUPLICATES".
/// Unknown ordinals are ignored with a warning; an unparseable response leaves
/// the batch un-deduplicated and flagged.
DedupResult dedup_llm(const std::vector<ClaimPair>& pairs, const PromptTemplate& tmpl,
                      Gateway& gateway, const ResponseCache& cache, const std::string& model_id);

enum class Validity { Valid, Invalid, Unknown };

std::string to_string(Validity validity);

struct ValidationVerdict {
    std::string pair_id;
    Validity verdict = Validity::Unknown;
    std::string rationale;  // non-empty for INVALID
};

/// Judges whether all parts of a claim are supported by the cited chapter
/// outlines. An unparseable judge response yields UNKNOWN (quarantine), never
/// a silent VALID.
ValidationVerdict validate_claim(const ClaimPair& pair,
                                 const std::vector<ChapterOutline>& outlines,
                                 const PromptTemplate& tmpl, Gateway& gateway,
                                 const ResponseCache& cache, const std::string& model_id);

struct ClaimGroundedness {
    std::string pair_id;
    std::size_t events_total = 0;
    std::size_t events_grounded = 0;
    std::size_t events_unjudged = 0;  // excluded from the denominator, reported
    bool citations_correct = true;    // every context item cites an existing chapter
};

struct GroundednessReport {
    std::vector<ClaimGroundedness> per_claim;
    // Fraction of TRUE-claim CoTs whose judged events are all grounded,
    // over claims with at least one judged event.
    double fully_grounded_fraction = 0.0;
    std::size_t claims_counted = 0;
};

/// Judges each context item of the TRUE claim's CoT against the cited
/// chapter's outline. The judge answers one GROUNDED/UNGROUNDED verdict per
/// numbered item.
ClaimGroundedness ground_cot(const ClaimPair& pair, const std::vector<ChapterOutline>& outlines,
                             const PromptTemplate& tmpl, Gateway& gateway,
                             const ResponseCache& cache, const std::string& model_id,
                             std::size_t book_chapter_count);

GroundednessReport aggregate_groundedness(const std::vector<ClaimGroundedness>& per_claim);

enum class ErrorCategory { Invalid, Misattribution, ExplicitReferences, Duplication, None };

std::string to_string(ErrorCategory category);
ErrorCategory error_category_from_string(const std::string& s);

struct ErrorAnnotation {
    std::string pair_id;
    ErrorCategory category = ErrorCategory::None;
    std::string note;
};

struct ErrorReport {
    std::map<ErrorCategory, std::size_t> counts;
    std::size_t total = 0;
    double any_error_rate = 0.0;  // fraction with category != None
};

/// Loads a flat CSV (pair_id, category, note). Unknown pair ids raise
/// UnknownPairIdError; percentages recompute from the raw rows every time.
std::vector<ErrorAnnotation> load_annotations_csv(const std::string& csv_text,
                                                  const std::vector<std::string>& known_pair_ids);
ErrorReport annotate_errors(const std::vector<ErrorAnnotation>& annotations);

enum class PerturbationKind { Event, Person, Object, Location, Time, Affect };

std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(const std::string& s);

struct PerturbationTag {
    std::string pair_id;
    std::vector<PerturbationKind> kinds;  // multi-label
};

struct PerturbationDistribution {
    std::map<PerturbationKind, std::size_t> counts;
    std::size_t tagged_pairs = 0;
    /// Frequency per kind = count / tagged_pairs; multi-labels may sum > 100%.
    std::map<PerturbationKind, double> frequencies;
};

std::vector<PerturbationTag> load_tags_csv(const std::string& csv_text,
                                           const std::vector<std::string>& known_pair_ids);
PerturbationDistribution tag_perturbations(const std::vector<PerturbationTag>& tags);

}  // namespace clipper
