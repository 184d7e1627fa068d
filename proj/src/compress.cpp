#include "clipper/compress.hpp"

#include <cctype>
#include <sstream>

#include "clipper/errors.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

enum class Section { None, Synopsis, Events, Characters };

// Accepts "- item", "* item", "3. item", "3) item", or a bare line.
std::string strip_bullet(const std::string& line) {
    std::string s = util::trim(line);
    if (s.empty()) return s;
    if (s[0] == '-' || s[0] == '*') {
        return util::trim(s.substr(1));
    }
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
        return util::trim(s.substr(i + 1));
    }
    return s;
}

bool section_header(const std::string& line, const char* name, std::string* rest) {
    std::string trimmed = util::trim(line);
    std::string stripped = trimmed;
    // Tolerate markdown emphasis around the header.
    while (!stripped.empty() && (stripped.front() == '#' || stripped.front() == '*')) {
        stripped.erase(stripped.begin());
    }
    stripped = util::trim(stripped);
    if (!util::starts_with_icase(stripped, name)) return false;
    std::size_t pos = std::string(name).size();
    while (pos < stripped.size() && (stripped[pos] == '*' || stripped[pos] == ' ')) ++pos;
    if (pos >= stripped.size() || stripped[pos] != ':') return false;
    *rest = util::trim(stripped.substr(pos + 1));
    return true;
}

}  // namespace

ChapterOutline parse_outline_response(const std::string& raw, std::size_t chapter_index) {
    ChapterOutline outline;
    outline.chapter_index = chapter_index;

    Section current = Section::None;
    bool saw_synopsis = false;
    bool saw_events = false;
    bool saw_characters = false;
    std::string synopsis_accum;

    for (const auto& line : util::split_lines(raw)) {
        std::string rest;
        if (section_header(line, "Synopsis", &rest)) {
            current = Section::Synopsis;
            saw_synopsis = true;
            if (!rest.empty()) synopsis_accum = rest;
            continue;
        }
        if (section_header(line, "Major Events", &rest) || section_header(line, "Events", &rest)) {
            current = Section::Events;
            saw_events = true;
            continue;
        }
        if (section_header(line, "Characters", &rest)) {
            current = Section::Characters;
            saw_characters = true;
            if (!rest.empty()) {
                // Inline comma-separated character list.
                std::istringstream ss(rest);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    std::string name = util::trim(item);
                    if (!name.empty()) outline.characters.push_back(name);
                }
            }
            continue;
        }

        std::string content = util::trim(line);
        if (content.empty()) continue;
        switch (current) {
            case Section::Synopsis:
                if (!synopsis_accum.empty()) synopsis_accum.push_back(' ');
                synopsis_accum += content;
                break;
            case Section::Events:
                outline.events.push_back(strip_bullet(content));
                break;
            case Section::Characters:
                outline.characters.push_back(strip_bullet(content));
                break;
            case Section::None:
                break;  // prose before the first header is ignored
        }
    }

    if (!saw_synopsis) throw ParseError("outline missing 'Synopsis:' section", raw);
    if (!saw_events) throw ParseError("outline missing 'Major Events:' section", raw);
    if (!saw_characters) throw ParseError("outline missing 'Characters:' section", raw);
    outline.synopsis = synopsis_accum;
    if (outline.synopsis.empty()) throw ParseError("outline synopsis empty", raw);
    if (outline.events.empty()) throw ParseError("outline events empty", raw);

    outline.events_out_of_range =
        outline.events.size() < kEventsBandLow || outline.events.size() > kEventsBandHigh;
    return outline;
}

std::string serialize_outline(const ChapterOutline& outline) {
    std::ostringstream out;
    out << "Synopsis: " << outline.synopsis << "\n";
    out << "Major Events:\n";
    for (const auto& event : outline.events) out << "- " << event << "\n";
    out << "Characters:\n";
    for (const auto& character : outline.characters) out << "- " << character << "\n";
    return out.str();
}

ChapterOutline outline_chapter(const Chapter& chapter, const PromptTemplate& tmpl,
                               Gateway& gateway, const ResponseCache& cache,
                               const Tokenizer& tokenizer, const std::string& model_id) {
    if (chapter.text.empty()) throw Error("outline_chapter: empty chapter text");

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"chapter_text", chapter.text}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "outline";

    ChatResponse response = gateway.cached_complete(request, cache);
    ChapterOutline outline = parse_outline_response(response.text, chapter.index);
    outline.token_count = tokenizer.count(serialize_outline(outline));
    return outline;
}

BookSummary summarize_book(const Book& book, const PromptTemplate& tmpl, Gateway& gateway,
                           const ResponseCache& cache, const Tokenizer& tokenizer,
                           const std::string& model_id) {
    std::string full_text = book.preamble;
    for (const auto& ch : book.chapters) {
        if (ch.heading) {
            full_text += *ch.heading;
            full_text.push_back('\n');
        }
        full_text += ch.text;
    }

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"book_text", full_text}, {"title", book.title}});
    request.temperature = 0.3;
    request.max_tokens = 1024;
    request.request_tag = "summary";

    ChatResponse response = gateway.cached_complete(request, cache);
    std::string text = util::trim(response.text);
    if (text.empty()) throw EmptySummaryError("empty summary for " + book.book_id);

    BookSummary summary;
    summary.book_id = book.book_id;
    summary.text = std::move(text);
    summary.token_count = tokenizer.count(summary.text);
    summary.oversized = summary.token_count > kSummaryOversizeTokens;
    return summary;
}

double compression_rate(const Book& book, const std::vector<ChapterOutline>& outlines) {
    if (book.token_count == 0) {
        throw ZeroLengthBookError("compression_rate: zero-token book " + book.book_id);
    }
    std::size_t outline_tokens = 0;
    for (const auto& outline : outlines) outline_tokens += outline.token_count;
    return static_cast<double>(outline_tokens) / static_cast<double>(book.token_count);
}

CompressionReport compression_report(
    const std::vector<std::pair<const Book*, const std::vector<ChapterOutline>*>>& books) {
    CompressionReport report;
    double sum = 0.0;
    for (const auto& [book, outlines] : books) {
        CompressionReport::PerBook entry;
        entry.book_id = book->book_id;
        entry.ratio = compression_rate(*book, *outlines);
        entry.anomaly = entry.ratio > 1.0;
        sum += entry.ratio;
        report.per_book.push_back(std::move(entry));
    }
    if (!report.per_book.empty()) {
        report.mean_ratio = sum / static_cast<double>(report.per_book.size());
    }
    return report;
}

}  // namespace clipper
