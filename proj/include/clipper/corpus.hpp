#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clipper/tokenizer.hpp"

namespace clipper {

struct RawBook {
    std::string source_id;
    std::string title;
    std::string author;
    std::string raw_text;
};

struct Chapter {
    std::size_t index = 0;  // 1-based, contiguous within a book
    std::optional<std::string> heading;
    std::string text;
    std::size_t token_count = 0;
};

struct Book {
    std::string book_id;  // stable hash of source_id; re-ingestion is idempotent
    std::string title;
    std::string author;
    std::vector<Chapter> chapters;
    std::size_t token_count = 0;  // whole cleaned text
    std::string preamble;         // cleaned text before the first heading
};

struct CorpusStats {
    std::size_t book_count = 0;
    double mean_token_count = 0.0;
    double mean_chapter_count = 0.0;
};

struct CleaningConfig {
    bool strict = true;
    // Front-matter lines matching any of these (case-insensitive prefix match)
    // are dropped together with their block.
    std::vector<std::string> front_matter_markers = {
        "CONTENTS", "TABLE OF CONTENTS", "LIST OF ILLUSTRATIONS", "ILLUSTRATIONS",
        "TRANSCRIBER'S NOTE", "TRANSCRIBER NOTE"};
};

struct CleanResult {
    std::string text;
    bool markers_found = false;  // lenient mode passes text through with this flag down
};

/// Strips Project Gutenberg START/END boilerplate and configured front-matter
/// blocks, leaving only the narrative body. Line endings are normalized to \n.
/// Throws MissingMarkersError when no markers are found in strict mode.
CleanResult clean_gutenberg(const RawBook& raw, const CleaningConfig& config = {});

struct SegmentationConfig {
    // Ordered regex list (ECMAScript, case-insensitive), applied per line.
    std::vector<std::string> heading_patterns = {
        R"(^\s*CHAPTER\s+([0-9]+|[IVXLCDM]+)\b.*$)",
    };
    bool whole_book_as_single_chapter = false;  // fallback when no headings match
};

struct Segmentation {
    std::string preamble;  // text before the first heading, possibly empty
    std::vector<Chapter> chapters;
};

/// Splits cleaned text at heading lines. The partition is lossless:
/// reassemble(segment_chapters(text)) == text, byte for byte. A heading line is
/// only recognized when terminated by a newline.
/// Throws NoChaptersFoundError when no heading matches and the single-chapter
/// fallback is off.
Segmentation segment_chapters(const std::string& cleaned_text,
                              const SegmentationConfig& config = {});

/// Inverse of segment_chapters; used to check the lossless-partition invariant.
std::string reassemble(const Segmentation& segmentation);

struct Admitted {};
struct Rejected {
    std::string reason;
};
using AdmissionVerdict = std::variant<Admitted, Rejected>;

inline constexpr std::size_t kDefaultTokenLimit = 128000;

/// Pure predicate: token_count > limit rejects, equality admits.
AdmissionVerdict admit_book(const Book& book, std::size_t limit_tokens = kDefaultTokenLimit);
bool is_admitted(const AdmissionVerdict& verdict);

/// Arithmetic means over admitted books. Throws EmptyCorpusError on none.
CorpusStats corpus_stats(const std::vector<Book>& admitted_books);

/// Full per-book ingestion: clean, segment, count, assign ids.
Book build_book(const RawBook& raw, const TokenizerRegistry& registry,
                const std::string& tokenizer_id, const CleaningConfig& cleaning = {},
                const SegmentationConfig& segmentation = {});

std::string book_id_for(const std::string& source_id);

}  // namespace clipper
