#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clipper/claimgen.hpp"
#include "clipper/corpus.hpp"
#include "clipper/prompt.hpp"

namespace clipper {

enum class SplitUnit { Pairs, Claims };

struct SplitSpec {
    std::size_t train = 0;  // targets, interpreted per `unit`
    std::size_t val = 0;
    std::size_t test = 0;
    SplitUnit unit = SplitUnit::Pairs;
    std::uint64_t seed = 0;
};

struct SplitResult {
    std::vector<ClaimPair> train;
    std::vector<ClaimPair> val;
    std::vector<ClaimPair> test;
    std::vector<std::string> test_books;
};

/// Whole books go to test first (greedy by pair count, largest first, until
/// the test target is met), so test books never overlap train or val. The
/// remaining pairs are shuffled by seed; train takes its target count and val
/// the rest. Both claims of a pair always land in the same split.
/// Throws InfeasibleSpecError when the corpus cannot satisfy the spec.
SplitResult split(const std::vector<ClaimPair>& pairs, const SplitSpec& spec);

struct SftRecord {
    std::string system;
    std::string user;       // book text + claim, per template
    std::string assistant;  // <context>…</context><explanation>…</explanation><answer>…</answer>
    // meta
    std::string pair_id;
    std::string book_id;
    ClaimScope scope = ClaimScope::Book;
    ClaimLabel label = ClaimLabel::True;
};

struct SftTemplates {
    std::string system_message;
    PromptTemplate user;  // placeholders: book_text, title, author, claim
};

/// One record per claim (two per pair); the assistant body round-trips through
/// parse_claim_response.
std::vector<SftRecord> to_sft_records(const ClaimPair& pair, const Book& book,
                                      const SftTemplates& templates);

/// Newline-delimited JSON, UTF-8, one record per line; export→import is the
/// identity. Schema violations report the offending line number.
void export_jsonl(const std::vector<SftRecord>& records, const std::filesystem::path& path);
std::vector<SftRecord> import_jsonl(const std::filesystem::path& path);

/// Deterministic Fisher-Yates driven by a seeded mt19937_64; std::shuffle is
/// implementation-defined, this is not.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace clipper
