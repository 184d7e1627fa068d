#include "clipper/corpus.hpp"

#include <regex>

#include "clipper/errors.hpp"
#include "clipper/util/hash.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

// Gutenberg marker lines look like "*** START OF THE PROJECT GUTENBERG EBOOK X ***"
// with END likewise; older files drop the leading asterisks or say "THIS".
bool is_marker_line(const std::string& line, const char* which) {
    std::string upper = util::to_lower(line);
    if (upper.find(util::to_lower(which)) == std::string::npos) return false;
    return upper.find("project gutenberg") != std::string::npos;
}

// Drops a front-matter block: the marker line plus following lines until a
// blank-line gap of two or more, which closes list-style front matter.
std::size_t skip_front_matter_block(const std::vector<std::string>& lines, std::size_t start) {
    std::size_t i = start + 1;
    std::size_t consecutive_blank = 0;
    while (i < lines.size()) {
        if (util::trim(lines[i]).empty()) {
            ++consecutive_blank;
            if (consecutive_blank >= 2) break;
        } else {
            consecutive_blank = 0;
        }
        ++i;
    }
    return i;
}

}  // namespace

CleanResult clean_gutenberg(const RawBook& raw, const CleaningConfig& config) {
    if (raw.raw_text.empty()) {
        throw Error("clean_gutenberg: raw_text empty for " + raw.source_id);
    }
    std::string text = normalize_newlines(raw.raw_text);
    std::vector<std::string> lines = util::split_lines(text);

    std::size_t start_line = 0;
    std::size_t end_line = lines.size();
    bool found_start = false;
    bool found_end = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!found_start && is_marker_line(lines[i], "start of")) {
            start_line = i + 1;
            found_start = true;
        } else if (is_marker_line(lines[i], "end of")) {
            end_line = i;
            found_end = true;
            break;
        }
    }
    if (!found_start && !found_end) {
        if (config.strict) {
            throw MissingMarkersError("no Project Gutenberg START/END markers in " +
                                      raw.source_id);
        }
    }

    std::vector<std::string> body;
    body.reserve(end_line - start_line);
    for (std::size_t i = start_line; i < end_line;) {
        std::string trimmed = util::trim(lines[i]);
        bool is_front_matter = false;
        for (const auto& marker : config.front_matter_markers) {
            if (util::starts_with_icase(trimmed, marker)) {
                is_front_matter = true;
                break;
            }
        }
        if (is_front_matter) {
            i = skip_front_matter_block(lines, i);
        } else {
            body.push_back(lines[i]);
            ++i;
        }
    }

    // Trim leading/trailing blank lines left by marker removal.
    std::size_t first = 0;
    std::size_t last = body.size();
    while (first < last && util::trim(body[first]).empty()) ++first;
    while (last > first && util::trim(body[last - 1]).empty()) --last;

    std::string out;
    for (std::size_t i = first; i < last; ++i) {
        out += body[i];
        out.push_back('\n');
    }
    return CleanResult{std::move(out), found_start || found_end};
}

Segmentation segment_chapters(const std::string& cleaned_text,
                              const SegmentationConfig& config) {
    if (cleaned_text.empty()) {
        throw Error("segment_chapters: empty text");
    }
    std::vector<std::regex> patterns;
    patterns.reserve(config.heading_patterns.size());
    for (const auto& p : config.heading_patterns) {
        patterns.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    }

    // Heading candidates are full lines terminated by '\n'; a final line
    // without a terminator stays in the preceding chapter body.
    struct HeadingPos {
        std::size_t line_start;
        std::size_t body_start;  // after the heading line's newline
        std::string heading;
    };
    std::vector<HeadingPos> headings;
    std::size_t pos = 0;
    while (pos < cleaned_text.size()) {
        std::size_t nl = cleaned_text.find('\n', pos);
        if (nl == std::string::npos) break;
        std::string line = cleaned_text.substr(pos, nl - pos);
        for (const auto& re : patterns) {
            if (std::regex_match(line, re)) {
                headings.push_back({pos, nl + 1, line});
                break;
            }
        }
        pos = nl + 1;
    }

    Segmentation seg;
    if (headings.empty()) {
        if (!config.whole_book_as_single_chapter) {
            throw NoChaptersFoundError("no heading pattern matched");
        }
        Chapter whole;
        whole.index = 1;
        whole.text = cleaned_text;
        seg.chapters.push_back(std::move(whole));
        return seg;
    }

    seg.preamble = cleaned_text.substr(0, headings.front().line_start);
    for (std::size_t i = 0; i < headings.size(); ++i) {
        Chapter ch;
        ch.index = i + 1;
        ch.heading = headings[i].heading;
        std::size_t body_end =
            (i + 1 < headings.size()) ? headings[i + 1].line_start : cleaned_text.size();
        ch.text = cleaned_text.substr(headings[i].body_start, body_end - headings[i].body_start);
        seg.chapters.push_back(std::move(ch));
    }
    return seg;
}

std::string reassemble(const Segmentation& segmentation) {
    std::string out = segmentation.preamble;
    for (const auto& ch : segmentation.chapters) {
        if (ch.heading) {
            out += *ch.heading;
            out.push_back('\n');
        }
        out += ch.text;
    }
    return out;
}

AdmissionVerdict admit_book(const Book& book, std::size_t limit_tokens) {
    if (book.token_count > limit_tokens) {
        return Rejected{"TooLong: " + std::to_string(book.token_count) + " tokens > limit " +
                        std::to_string(limit_tokens)};
    }
    return Admitted{};
}

bool is_admitted(const AdmissionVerdict& verdict) {
    return std::holds_alternative<Admitted>(verdict);
}

CorpusStats corpus_stats(const std::vector<Book>& admitted_books) {
    if (admitted_books.empty()) {
        throw EmptyCorpusError("corpus_stats over zero books");
    }
    CorpusStats stats;
    stats.book_count = admitted_books.size();
    double token_sum = 0.0;
    double chapter_sum = 0.0;
    for (const auto& book : admitted_books) {
        token_sum += static_cast<double>(book.token_count);
        chapter_sum += static_cast<double>(book.chapters.size());
    }
    stats.mean_token_count = token_sum / static_cast<double>(stats.book_count);
    stats.mean_chapter_count = chapter_sum / static_cast<double>(stats.book_count);
    return stats;
}

std::string book_id_for(const std::string& source_id) {
    return util::sha256_hex_prefix("book:" + source_id, 16);
}

Book build_book(const RawBook& raw, const TokenizerRegistry& registry,
                const std::string& tokenizer_id, const CleaningConfig& cleaning,
                const SegmentationConfig& segmentation) {
    if (raw.title.empty() || raw.author.empty()) {
        throw Error("build_book: title and author must be non-empty for " + raw.source_id);
    }
    const Tokenizer& tokenizer = registry.get(tokenizer_id);
    CleanResult cleaned = clean_gutenberg(raw, cleaning);
    Segmentation seg = segment_chapters(cleaned.text, segmentation);

    Book book;
    book.book_id = book_id_for(raw.source_id);
    book.title = raw.title;
    book.author = raw.author;
    book.preamble = seg.preamble;
    book.token_count = tokenizer.count(cleaned.text);
    for (auto& ch : seg.chapters) {
        ch.token_count = tokenizer.count(ch.text);
        book.chapters.push_back(std::move(ch));
    }
    return book;
}

}  // namespace clipper
