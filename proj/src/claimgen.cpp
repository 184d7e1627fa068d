#include "clipper/claimgen.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "clipper/errors.hpp"
#include "clipper/util/hash.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

using nlohmann::json;

std::optional<std::pair<std::string, std::size_t>> find_tag(const std::string& raw,
                                                            const std::string& tag,
                                                            std::size_t from) {
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    std::size_t begin = raw.find(open, from);
    if (begin == std::string::npos) return std::nullopt;
    std::size_t body_begin = begin + open.size();
    std::size_t end = raw.find(close, body_begin);
    if (end == std::string::npos) return std::nullopt;
    return std::make_pair(raw.substr(body_begin, end - body_begin), end + close.size());
}

ClaimLabel normalize_answer(const std::string& raw_answer, const std::string& raw) {
    std::string token = util::trim(raw_answer);
    while (!token.empty() &&
           (token.back() == '.' || token.back() == '!' || token.back() == ',')) {
        token.pop_back();
    }
    std::string lowered = util::to_lower(token);
    if (lowered == "true") return ClaimLabel::True;
    if (lowered == "false") return ClaimLabel::False;
    throw AmbiguousAnswerError("ambiguous answer token: '" + raw_answer + "'", raw);
}

std::vector<ContextItem> parse_context_items(const std::string& body) {
    // Accepts "Chapter 12: event" and the short "C12: event" form; continuation
    // lines append to the previous item.
    static const std::regex item_re(R"(^\s*(?:Chapter\s+|C)(\d+)\s*[:.]\s*(.*)$)",
                                    std::regex::ECMAScript | std::regex::icase);
    std::vector<ContextItem> items;
    for (const auto& line : util::split_lines(body)) {
        std::string trimmed = util::trim(line);
        if (trimmed.empty()) continue;
        std::smatch match;
        if (std::regex_match(trimmed, match, item_re)) {
            ContextItem item;
            item.chapter_index = static_cast<std::size_t>(std::stoul(match[1].str()));
            item.event = util::trim(match[2].str());
            items.push_back(std::move(item));
        } else if (!items.empty()) {
            items.back().event += " " + trimmed;
        }
        // Prose before the first chapter line is dropped.
    }
    return items;
}

struct PairCandidate {
    ClaimFragment true_fragment;
    ClaimFragment false_fragment;
};

PairCandidate fragments_to_candidate(std::vector<ClaimFragment> fragments,
                                     const std::string& raw) {
    if (fragments.size() != 2) {
        throw ParseError("expected 2 claim fragments per pair, got " +
                             std::to_string(fragments.size()),
                         raw);
    }
    if (fragments[0].answer == fragments[1].answer) {
        throw ParseError("pair fragments share one answer label", raw);
    }
    PairCandidate candidate;
    if (fragments[0].answer == ClaimLabel::True) {
        candidate.true_fragment = std::move(fragments[0]);
        candidate.false_fragment = std::move(fragments[1]);
    } else {
        candidate.true_fragment = std::move(fragments[1]);
        candidate.false_fragment = std::move(fragments[0]);
    }
    if (!candidate.true_fragment.claim_text || !candidate.false_fragment.claim_text) {
        throw MissingTagError("true_claim/false_claim", raw);
    }
    if (util::trim(*candidate.true_fragment.claim_text).empty() ||
        util::trim(*candidate.false_fragment.claim_text).empty()) {
        throw ParseError("empty claim text", raw);
    }
    if (util::trim(*candidate.true_fragment.claim_text) ==
        util::trim(*candidate.false_fragment.claim_text)) {
        throw InvalidPairError("true and false claim texts are identical");
    }
    return candidate;
}

Claim build_claim(ClaimFragment fragment, ClaimLabel label,
                  std::vector<std::size_t> source_chapters) {
    Claim claim;
    claim.text = util::trim(*fragment.claim_text);
    claim.label = label;
    claim.source_chapters = std::move(source_chapters);
    claim.cot.context_items = std::move(fragment.context_items);
    claim.cot.explanation = std::move(fragment.explanation);
    claim.cot.answer = label;
    return claim;
}

std::string deterministic_pair_id(const std::string& book_id, ClaimScope scope,
                                  const std::string& input_hash, std::size_t ordinal) {
    return util::sha256_hex_prefix(
        book_id + "|" + to_string(scope) + "|" + input_hash + "|" + std::to_string(ordinal), 16);
}

/// Splits a response into per-pair blocks on <pair>…</pair>; a response
/// without pair tags is treated as a single block.
std::vector<std::string> split_pair_blocks(const std::string& raw) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    while (true) {
        auto block = find_tag(raw, "pair", pos);
        if (!block) break;
        blocks.push_back(block->first);
        pos = block->second;
    }
    if (blocks.empty()) blocks.push_back(raw);
    return blocks;
}

struct AssemblyOptions {
    ClaimScope scope = ClaimScope::Book;
    std::string book_id;
    std::size_t chapter_count = 0;              // 0 disables existence checks
    std::optional<std::size_t> forced_chapter;  // chapter-scope source chapter
    bool require_two_chapters = false;
    bool allow_empty_citations = false;
};

GenerationResult assemble_pairs(const std::string& raw, const std::string& input_hash,
                                const AssemblyOptions& options) {
    GenerationResult result;
    std::size_t ordinal = 0;
    for (const auto& block : split_pair_blocks(raw)) {
        ++ordinal;
        try {
            PairCandidate candidate = fragments_to_candidate(parse_claim_response(block), block);

            std::set<std::size_t> cited;
            for (const auto& item : candidate.true_fragment.context_items)
                cited.insert(item.chapter_index);
            for (const auto& item : candidate.false_fragment.context_items)
                cited.insert(item.chapter_index);

            if (options.chapter_count > 0) {
                for (std::size_t index : cited) {
                    if (index == 0 || index > options.chapter_count) {
                        throw ParseError("cited chapter " + std::to_string(index) +
                                             " does not exist in book",
                                         block);
                    }
                }
            }
            if (options.forced_chapter) {
                for (std::size_t index : cited) {
                    if (index != *options.forced_chapter) {
                        throw ChapterMismatchError(
                            "pair cites chapter " + std::to_string(index) +
                            " but was generated from chapter " +
                            std::to_string(*options.forced_chapter));
                    }
                }
            }

            std::vector<std::size_t> source_chapters;
            if (options.forced_chapter) {
                source_chapters = {*options.forced_chapter};
            } else {
                source_chapters.assign(cited.begin(), cited.end());
            }
            if (source_chapters.empty() && !options.allow_empty_citations) {
                throw ParseError("no chapters cited", block);
            }

            ClaimPair pair;
            pair.pair_id =
                deterministic_pair_id(options.book_id, options.scope, input_hash, ordinal);
            pair.book_id = options.book_id;
            pair.scope = options.scope;
            pair.true_claim = build_claim(std::move(candidate.true_fragment), ClaimLabel::True,
                                          source_chapters);
            pair.false_claim = build_claim(std::move(candidate.false_fragment), ClaimLabel::False,
                                           source_chapters);

            if (options.require_two_chapters && cited.size() < 2) {
                pair.lints.push_back(
                    {LintKind::FewerThanTwoChapters,
                     "cited " + std::to_string(cited.size()) + " distinct chapter(s)"});
            }
            if (pair.lints.empty()) {
                result.pairs.push_back(std::move(pair));
            } else {
                result.quarantined.push_back(std::move(pair));
            }
        } catch (const Error& error) {
            ++result.parse_failures;
            result.warnings.push_back("pair block " + std::to_string(ordinal) + ": " +
                                      error.what());
        }
    }
    if (result.pairs.empty() && result.quarantined.empty()) {
        throw BatchEmptyError("no claim pairs parsed from response");
    }
    return result;
}

}  // namespace

std::string to_string(ClaimLabel label) { return label == ClaimLabel::True ? "TRUE" : "FALSE"; }

std::string to_string(ClaimScope scope) { return scope == ClaimScope::Book ? "BOOK" : "CHAPTER"; }

ClaimLabel claim_label_from_string(const std::string& s) {
    if (s == "TRUE") return ClaimLabel::True;
    if (s == "FALSE") return ClaimLabel::False;
    throw SchemaError("bad claim label: " + s, 0);
}

ClaimScope claim_scope_from_string(const std::string& s) {
    if (s == "BOOK") return ClaimScope::Book;
    if (s == "CHAPTER") return ClaimScope::Chapter;
    throw SchemaError("bad claim scope: " + s, 0);
}

std::string to_string(LintKind kind) {
    switch (kind) {
        case LintKind::ExplicitChapterReference: return "ExplicitChapterReference";
        case LintKind::DirectQuote: return "DirectQuote";
        case LintKind::EventsOutOfRange: return "EventsOutOfRange";
        case LintKind::FewerThanTwoChapters: return "FewerThanTwoChapters";
    }
    return "Unknown";
}

LintKind lint_kind_from_string(const std::string& s) {
    if (s == "ExplicitChapterReference") return LintKind::ExplicitChapterReference;
    if (s == "DirectQuote") return LintKind::DirectQuote;
    if (s == "EventsOutOfRange") return LintKind::EventsOutOfRange;
    if (s == "FewerThanTwoChapters") return LintKind::FewerThanTwoChapters;
    throw SchemaError("bad lint kind: " + s, 0);
}

std::vector<ClaimFragment> parse_claim_response(const std::string& raw) {
    // An <answer> tag terminates each fragment; context/explanation/claim tags
    // are collected from the text since the previous fragment. A bare
    // "<answer>TRUE</answer>" is a valid fragment on its own.
    std::vector<ClaimFragment> fragments;
    std::size_t pos = 0;
    while (true) {
        std::size_t answer_open = raw.find("<answer>", pos);
        if (answer_open == std::string::npos) {
            std::string tail = raw.substr(pos);
            if (tail.find("<context>") != std::string::npos ||
                tail.find("<explanation>") != std::string::npos) {
                throw MissingTagError("answer", raw);
            }
            break;
        }
        auto answer = find_tag(raw, "answer", pos);
        if (!answer) throw MissingTagError("answer", raw);  // unterminated

        ClaimFragment fragment;
        std::string segment = raw.substr(pos, answer_open - pos);
        for (const char* tag : {"true_claim", "false_claim", "claim"}) {
            if (auto claim = find_tag(segment, tag, 0)) {
                fragment.claim_text = util::trim(claim->first);
            }
        }

        auto context = find_tag(segment, "context", 0);
        auto explanation = find_tag(segment, "explanation", 0);
        if (context && !explanation) throw MissingTagError("explanation", raw);
        if (explanation && !context) throw MissingTagError("context", raw);
        if (context) fragment.context_items = parse_context_items(context->first);
        if (explanation) fragment.explanation = util::trim(explanation->first);

        fragment.answer = normalize_answer(answer->first, raw);
        fragments.push_back(std::move(fragment));
        pos = answer->second;
    }
    if (fragments.empty()) throw MissingTagError("answer", raw);
    return fragments;
}

std::string serialize_cot(const ChainOfThought& cot) {
    std::ostringstream out;
    out << "<context>\n";
    for (const auto& item : cot.context_items) {
        out << "Chapter " << item.chapter_index << ": " << item.event << "\n";
    }
    out << "</context>\n<explanation>\n"
        << cot.explanation << "\n</explanation>\n<answer>" << to_string(cot.answer)
        << "</answer>";
    return out.str();
}

GenerationResult gen_book_level_pairs(const std::vector<ChapterOutline>& outlines,
                                      const BookSummary& summary, std::size_t n,
                                      const PromptTemplate& tmpl, Gateway& gateway,
                                      const ResponseCache& cache, const std::string& model_id,
                                      const std::string& book_id, std::size_t chapter_count) {
    if (outlines.size() < 2) {
        throw Error("gen_book_level_pairs needs at least 2 chapter outlines");
    }
    std::ostringstream outline_block;
    for (const auto& outline : outlines) {
        outline_block << "Chapter " << outline.chapter_index << "\n"
                      << serialize_outline(outline) << "\n";
    }

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"outlines", outline_block.str()},
                                {"summary", summary.text},
                                {"n", std::to_string(n)}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "claim_book";

    ChatResponse response = gateway.cached_complete(request, cache);

    AssemblyOptions options;
    options.scope = ClaimScope::Book;
    options.book_id = book_id;
    options.chapter_count = chapter_count;
    options.require_two_chapters = true;
    return assemble_pairs(response.text, request_hash(request), options);
}

GenerationResult gen_chapter_level_pairs(const BookSummary& summary,
                                         const ChapterOutline& outline, std::size_t n,
                                         const PromptTemplate& tmpl, Gateway& gateway,
                                         const ResponseCache& cache, const std::string& model_id,
                                         const std::string& book_id) {
    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"outline", serialize_outline(outline)},
                                {"summary", summary.text},
                                {"chapter_index", std::to_string(outline.chapter_index)},
                                {"n", std::to_string(n)}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "claim_chapter";

    ChatResponse response = gateway.cached_complete(request, cache);

    AssemblyOptions options;
    options.scope = ClaimScope::Chapter;
    options.book_id = book_id;
    options.forced_chapter = outline.chapter_index;
    return assemble_pairs(response.text, request_hash(request), options);
}

GenerationResult naive_generate(const std::string& text, const PromptTemplate& tmpl,
                                Gateway& gateway, const ResponseCache& cache,
                                const std::string& model_id, const std::string& book_id,
                                std::size_t n, std::size_t chapter_count) {
    if (text.empty()) throw Error("naive_generate: empty text");

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"book_text", text}, {"n", std::to_string(n)}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "claim_naive";

    ChatResponse response = gateway.cached_complete(request, cache);

    AssemblyOptions options;
    options.scope = ClaimScope::Book;
    options.book_id = book_id;
    options.chapter_count = chapter_count;
    options.require_two_chapters = true;  // empty or single citations get flagged
    options.allow_empty_citations = true;
    return assemble_pairs(response.text, request_hash(request), options);
}

std::vector<LintFlag> lint_claim(const Claim& claim, const std::string& book_text) {
    std::vector<LintFlag> flags;

    // Numeric or spelled-out references; roman numerals only in caps so prose
    // like "chapter mild" cannot trip the class match.
    static const std::regex chapter_num_re(
        R"(\bchapters?\s+(\d+|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|)"
        R"(thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty|thirty|forty|fifty)\b)",
        std::regex::ECMAScript | std::regex::icase);
    static const std::regex chapter_roman_re(R"(\b[Cc]hapters?\s+[IVXLCDM]+\b)");
    std::smatch match;
    if (std::regex_search(claim.text, match, chapter_num_re) ||
        std::regex_search(claim.text, match, chapter_roman_re)) {
        flags.push_back({LintKind::ExplicitChapterReference, match[0].str()});
    }

    // Quoted spans of >= 8 consecutive words that appear verbatim in the book.
    const std::string normalized_book = util::collapse_whitespace(book_text);
    std::size_t pos = 0;
    while (pos < claim.text.size()) {
        std::size_t open = claim.text.find_first_of("\"", pos);
        std::size_t open_curly = claim.text.find("“", pos);
        if (open_curly != std::string::npos && (open == std::string::npos || open_curly < open)) {
            std::size_t close = claim.text.find("”", open_curly + 3);
            if (close == std::string::npos) break;
            std::string span = claim.text.substr(open_curly + 3, close - open_curly - 3);
            pos = close + 3;
            auto words = util::split_words(span);
            if (words.size() >= kDirectQuoteWords &&
                normalized_book.find(util::collapse_whitespace(span)) != std::string::npos) {
                flags.push_back({LintKind::DirectQuote, span});
            }
            continue;
        }
        if (open == std::string::npos) break;
        std::size_t close = claim.text.find('"', open + 1);
        if (close == std::string::npos) break;
        std::string span = claim.text.substr(open + 1, close - open - 1);
        pos = close + 1;
        auto words = util::split_words(span);
        if (words.size() >= kDirectQuoteWords &&
            normalized_book.find(util::collapse_whitespace(span)) != std::string::npos) {
            flags.push_back({LintKind::DirectQuote, span});
        }
    }
    return flags;
}

nlohmann::json pair_to_json(const ClaimPair& pair) {
    auto claim_json = [](const Claim& claim) {
        json context = json::array();
        for (const auto& item : claim.cot.context_items) {
            context.push_back({{"chapter", item.chapter_index}, {"event", item.event}});
        }
        return json{{"text", claim.text},
                    {"chapters", claim.source_chapters},
                    {"cot",
                     {{"context", std::move(context)},
                      {"explanation", claim.cot.explanation},
                      {"answer", to_string(claim.cot.answer)}}}};
    };
    json lints = json::array();
    for (const auto& flag : pair.lints) {
        lints.push_back({{"kind", to_string(flag.kind)}, {"detail", flag.detail}});
    }
    return json{{"pair_id", pair.pair_id},
                {"book_id", pair.book_id},
                {"scope", to_string(pair.scope)},
                {"true", claim_json(pair.true_claim)},
                {"false", claim_json(pair.false_claim)},
                {"lints", std::move(lints)}};
}

ClaimPair pair_from_json(const nlohmann::json& body) {
    auto claim_from = [](const json& node, ClaimLabel label) {
        Claim claim;
        claim.text = node.at("text").get<std::string>();
        claim.label = label;
        claim.source_chapters = node.at("chapters").get<std::vector<std::size_t>>();
        const auto& cot = node.at("cot");
        for (const auto& item : cot.at("context")) {
            claim.cot.context_items.push_back(
                {item.at("chapter").get<std::size_t>(), item.at("event").get<std::string>()});
        }
        claim.cot.explanation = cot.at("explanation").get<std::string>();
        claim.cot.answer = claim_label_from_string(cot.at("answer").get<std::string>());
        return claim;
    };
    ClaimPair pair;
    pair.pair_id = body.at("pair_id").get<std::string>();
    pair.book_id = body.at("book_id").get<std::string>();
    pair.scope = claim_scope_from_string(body.at("scope").get<std::string>());
    pair.true_claim = claim_from(body.at("true"), ClaimLabel::True);
    pair.false_claim = claim_from(body.at("false"), ClaimLabel::False);
    for (const auto& flag : body.value("lints", json::array())) {
        pair.lints.push_back({lint_kind_from_string(flag.at("kind").get<std::string>()),
                              flag.value("detail", "")});
    }
    return pair;
}

}  // namespace clipper
