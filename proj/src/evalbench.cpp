#include "clipper/evalbench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "clipper/errors.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

using nlohmann::json;

std::string book_full_text(const Book& book) {
    std::string text = book.preamble;
    for (const auto& ch : book.chapters) {
        if (ch.heading) {
            text += *ch.heading;
            text.push_back('\n');
        }
        text += ch.text;
    }
    return text;
}

std::optional<Verdict> normalize_verdict_token(std::string token) {
    token = util::trim(token);
    while (!token.empty() && (token.back() == '.' || token.back() == '!' ||
                              token.back() == ',' || token.back() == ':')) {
        token.pop_back();
    }
    std::string lowered = util::to_lower(token);
    if (lowered == "true") return Verdict::True;
    if (lowered == "false") return Verdict::False;
    return std::nullopt;
}

}  // namespace

EvalCondition make_condition(ConditionKind kind, std::size_t rag_top_k,
                             std::size_t rag_max_words) {
    if (kind == ConditionKind::Rag && (rag_top_k < 1 || rag_max_words < 1)) {
        throw ConfigError("Rag condition requires k >= 1 and max_words >= 1");
    }
    EvalCondition condition;
    condition.kind = kind;
    condition.rag_top_k = rag_top_k;
    condition.rag_max_words = rag_max_words;
    return condition;
}

std::string to_string(const EvalCondition& condition) {
    switch (condition.kind) {
        case ConditionKind::FullText: return "full_text";
        case ConditionKind::TitleAuthorOnly: return "title_author_only";
        case ConditionKind::NoContext: return "no_context";
        case ConditionKind::Rag:
            return "rag_k" + std::to_string(condition.rag_top_k) + "_w" +
                   std::to_string(condition.rag_max_words);
    }
    return "full_text";
}

EvalCondition condition_from_string(const std::string& s) {
    if (s == "full_text") return make_condition(ConditionKind::FullText);
    if (s == "title_author_only") return make_condition(ConditionKind::TitleAuthorOnly);
    if (s == "no_context") return make_condition(ConditionKind::NoContext);
    if (util::starts_with_icase(s, "rag")) {
        // rag, rag_k50_w256
        EvalCondition condition = make_condition(ConditionKind::Rag);
        std::size_t kpos = s.find("_k");
        if (kpos != std::string::npos) {
            std::size_t wpos = s.find("_w", kpos);
            condition.rag_top_k = std::stoul(s.substr(kpos + 2));
            if (wpos != std::string::npos) condition.rag_max_words = std::stoul(s.substr(wpos + 2));
        }
        return make_condition(ConditionKind::Rag, condition.rag_top_k, condition.rag_max_words);
    }
    throw ConfigError("unknown eval condition: " + s);
}

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::True: return "TRUE";
        case Verdict::False: return "FALSE";
        case Verdict::Unparseable: return "UNPARSEABLE";
    }
    return "UNPARSEABLE";
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "TRUE") return Verdict::True;
    if (s == "FALSE") return Verdict::False;
    if (s == "UNPARSEABLE") return Verdict::Unparseable;
    throw SchemaError("bad verdict: " + s, 0);
}

Verdict extract_answer(const std::string& raw) {
    // First well-formed tag wins.
    std::size_t pos = 0;
    while (true) {
        std::size_t open = raw.find("<answer>", pos);
        if (open == std::string::npos) break;
        std::size_t body = open + 8;
        std::size_t close = raw.find("</answer>", body);
        if (close == std::string::npos) break;
        if (auto verdict = normalize_verdict_token(raw.substr(body, close - body))) {
            return *verdict;
        }
        pos = close + 9;
    }
    // Fallback: last standalone TRUE/FALSE line (CoT bodies mention both words
    // mid-sentence, so only bare lines count).
    std::optional<Verdict> last;
    for (const auto& line : util::split_lines(raw)) {
        if (auto verdict = normalize_verdict_token(line)) last = *verdict;
    }
    return last.value_or(Verdict::Unparseable);
}

json outcome_to_json(const EvalOutcome& outcome) {
    return json{{"pair_id", outcome.pair_id},
                {"true_verdict", to_string(outcome.true_verdict)},
                {"false_verdict", to_string(outcome.false_verdict)},
                {"pair_correct", outcome.pair_correct},
                {"condition", outcome.condition}};
}

EvalOutcome outcome_from_json(const json& body) {
    EvalOutcome outcome;
    outcome.pair_id = body.at("pair_id").get<std::string>();
    outcome.true_verdict = verdict_from_string(body.at("true_verdict").get<std::string>());
    outcome.false_verdict = verdict_from_string(body.at("false_verdict").get<std::string>());
    outcome.pair_correct = body.at("pair_correct").get<bool>();
    outcome.condition = body.value("condition", "");
    return outcome;
}

double paired_accuracy(const std::vector<EvalOutcome>& outcomes) {
    if (outcomes.empty()) throw EmptyRunError("paired_accuracy over zero outcomes");
    std::size_t correct = 0;
    for (const auto& outcome : outcomes) {
        if (outcome.pair_correct) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

std::string render_eval_prompt(const PromptTemplate& tmpl, const Book& book,
                               const std::string& claim_text, const EvalCondition& condition) {
    std::string context;
    switch (condition.kind) {
        case ConditionKind::FullText:
            context = book_full_text(book);
            break;
        case ConditionKind::TitleAuthorOnly:
            context = "Title: " + book.title + "\nAuthor: " + book.author;
            break;
        case ConditionKind::NoContext:
            context = "(no context provided)";
            break;
        case ConditionKind::Rag: {
            Bm25Params params;
            params.top_k = condition.rag_top_k;
            params.max_words = condition.rag_max_words;
            auto ranked = bm25_retrieve(book_full_text(book), claim_text, params);
            std::ostringstream block;
            for (const auto& passage : ranked) {
                block << passage.text << "\n\n";
            }
            context = block.str();
            break;
        }
    }
    return tmpl.render({{"context", context}, {"claim", claim_text}});
}

Verdict verify_claim(const Book& book, const std::string& claim_text,
                     const EvalCondition& condition, const PromptTemplate& tmpl,
                     Gateway& gateway, const ResponseCache& cache, const std::string& model_id) {
    ChatRequest request;
    request.model_id = model_id;
    request.user = render_eval_prompt(tmpl, book, claim_text, condition);
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "eval";
    ChatResponse response = gateway.cached_complete(request, cache);
    return extract_answer(response.text);
}

EvalOutcome evaluate_pair(const ClaimPair& pair, const Book& book,
                          const EvalCondition& condition, const PromptTemplate& tmpl,
                          Gateway& gateway, const ResponseCache& cache,
                          const std::string& model_id) {
    EvalOutcome outcome;
    outcome.pair_id = pair.pair_id;
    outcome.condition = to_string(condition);
    outcome.true_verdict =
        verify_claim(book, pair.true_claim.text, condition, tmpl, gateway, cache, model_id);
    outcome.false_verdict =
        verify_claim(book, pair.false_claim.text, condition, tmpl, gateway, cache, model_id);
    outcome.pair_correct =
        outcome.true_verdict == Verdict::True && outcome.false_verdict == Verdict::False;
    return outcome;
}

// --- retrieval ----------------------------------------------------------------

std::vector<std::string> bm25_tokenize(const std::string& text) {
    std::vector<std::string> terms;
    std::string current;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

namespace {

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        current.push_back(text[i]);
        bool end = (text[i] == '.' || text[i] == '!' || text[i] == '?') &&
                   (i + 1 >= text.size() ||
                    std::isspace(static_cast<unsigned char>(text[i + 1])));
        if (end) {
            std::string trimmed = util::trim(current);
            if (!trimmed.empty()) sentences.push_back(std::move(trimmed));
            current.clear();
        }
    }
    std::string trimmed = util::trim(current);
    if (!trimmed.empty()) sentences.push_back(std::move(trimmed));
    return sentences;
}

}  // namespace

std::vector<Passage> pack_passages(const std::string& book_text, std::size_t max_words) {
    std::vector<Passage> passages;
    std::vector<std::string> buffer;
    std::size_t buffer_words = 0;

    auto flush = [&](bool hard_split) {
        if (buffer.empty()) return;
        Passage passage;
        passage.index = passages.size();
        std::string text;
        for (std::size_t i = 0; i < buffer.size(); ++i) {
            if (i) text.push_back(' ');
            text += buffer[i];
        }
        passage.text = std::move(text);
        passage.word_count = buffer_words;
        passage.hard_split = hard_split;
        passages.push_back(std::move(passage));
        buffer.clear();
        buffer_words = 0;
    };

    for (const auto& sentence : split_sentences(book_text)) {
        auto words = util::split_words(sentence);
        if (words.size() > max_words) {
            // Oversized sentence: flush what we have, then hard-split it.
            flush(false);
            std::size_t i = 0;
            while (i < words.size()) {
                std::size_t take = std::min(max_words, words.size() - i);
                std::string chunk;
                for (std::size_t k = 0; k < take; ++k) {
                    if (k) chunk.push_back(' ');
                    chunk += words[i + k];
                }
                buffer.push_back(std::move(chunk));
                buffer_words = take;
                flush(true);
                i += take;
            }
            continue;
        }
        if (buffer_words + words.size() > max_words) flush(false);
        buffer.push_back(sentence);
        buffer_words += words.size();
    }
    flush(false);
    return passages;
}

inline constexpr double kIdfFloor = 1e-6;

std::vector<ScoredPassage> bm25_rank(const std::vector<Passage>& passages,
                                     const std::string& claim_text, const Bm25Params& params) {
    if (passages.empty()) throw EmptyBookError("bm25: no passages");

    const std::size_t doc_count = passages.size();
    std::vector<std::unordered_map<std::string, std::size_t>> term_freq(doc_count);
    std::vector<std::size_t> doc_len(doc_count, 0);
    std::unordered_map<std::string, std::size_t> doc_freq;
    for (std::size_t d = 0; d < doc_count; ++d) {
        auto terms = bm25_tokenize(passages[d].text);
        doc_len[d] = terms.size();
        for (const auto& term : terms) ++term_freq[d][term];
        for (const auto& [term, tf] : term_freq[d]) ++doc_freq[term];
    }
    double avg_len = 0.0;
    for (std::size_t len : doc_len) avg_len += static_cast<double>(len);
    avg_len /= static_cast<double>(doc_count);

    // Unique query terms; classic Robertson-Sparck Jones idf.
    auto query_terms = bm25_tokenize(claim_text);
    std::sort(query_terms.begin(), query_terms.end());
    query_terms.erase(std::unique(query_terms.begin(), query_terms.end()), query_terms.end());

    std::vector<ScoredPassage> scored(doc_count);
    for (std::size_t d = 0; d < doc_count; ++d) {
        scored[d].index = passages[d].index;
        scored[d].text = passages[d].text;
        double score = 0.0;
        for (const auto& term : query_terms) {
            auto df_it = doc_freq.find(term);
            if (df_it == doc_freq.end()) continue;
            auto tf_it = term_freq[d].find(term);
            if (tf_it == term_freq[d].end()) continue;
            double df = static_cast<double>(df_it->second);
            double tf = static_cast<double>(tf_it->second);
            // Floored idf keeps scores monotone in tf even for terms that
            // appear in more than half the passages.
            double idf = std::max(
                std::log((static_cast<double>(doc_count) - df + 0.5) / (df + 0.5)), kIdfFloor);
            double norm = params.k1 * (1.0 - params.b +
                                       params.b * static_cast<double>(doc_len[d]) /
                                           (avg_len > 0.0 ? avg_len : 1.0));
            score += idf * tf * (params.k1 + 1.0) / (tf + norm);
        }
        scored[d].score = score;
    }

    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    if (scored.size() > params.top_k) scored.resize(params.top_k);
    return scored;
}

std::vector<ScoredPassage> bm25_retrieve(const std::string& book_text,
                                         const std::string& claim_text,
                                         const Bm25Params& params) {
    auto passages = pack_passages(book_text, params.max_words);
    if (passages.empty()) throw EmptyBookError("bm25: book text yields no passages");
    return bm25_rank(passages, claim_text, params);
}

// --- bucketed analysis ----------------------------------------------------------

BucketKey bucket_key_from_string(const std::string& s) {
    if (s == "chapter_token_distance") return BucketKey::ChapterTokenDistance;
    if (s == "book_token_length") return BucketKey::BookTokenLength;
    if (s == "event_placement_quantile") return BucketKey::EventPlacementQuantile;
    throw UnknownKeyError("unknown bucket key: " + s);
}

std::string to_string(BucketKey key) {
    switch (key) {
        case BucketKey::ChapterTokenDistance: return "chapter_token_distance";
        case BucketKey::BookTokenLength: return "book_token_length";
        case BucketKey::EventPlacementQuantile: return "event_placement_quantile";
    }
    return "chapter_token_distance";
}

std::vector<std::size_t> chapter_start_offsets(const Book& book) {
    std::vector<std::size_t> offsets;
    offsets.reserve(book.chapters.size());
    std::size_t running = 0;
    for (const auto& ch : book.chapters) {
        offsets.push_back(running);
        running += ch.token_count;
    }
    return offsets;
}

std::optional<double> bucket_feature(const ClaimPair& pair, const Book& book, BucketKey key) {
    if (key == BucketKey::BookTokenLength) {
        return static_cast<double>(book.token_count);
    }
    const auto& chapters = pair.true_claim.source_chapters;
    if (chapters.empty()) return std::nullopt;
    auto offsets = chapter_start_offsets(book);
    auto offset_of = [&](std::size_t index) -> std::optional<std::size_t> {
        if (index == 0 || index > offsets.size()) return std::nullopt;
        return offsets[index - 1];
    };
    auto [min_it, max_it] = std::minmax_element(chapters.begin(), chapters.end());
    auto min_offset = offset_of(*min_it);
    auto max_offset = offset_of(*max_it);
    if (!min_offset || !max_offset) return std::nullopt;

    if (key == BucketKey::ChapterTokenDistance) {
        return static_cast<double>(*max_offset - *min_offset);
    }
    // Placement: the first cited chapter's start offset over the book length.
    if (book.token_count == 0) return std::nullopt;
    return static_cast<double>(*min_offset) / static_cast<double>(book.token_count);
}

std::vector<BucketReport> accuracy_by_bucket(const std::vector<EvalOutcome>& outcomes,
                                             const std::map<std::string, ClaimPair>& pairs_by_id,
                                             const std::map<std::string, Book>& books_by_id,
                                             BucketKey key, std::vector<double> edges) {
    if (edges.empty()) {
        if (key == BucketKey::EventPlacementQuantile) {
            edges = {0.2, 0.4, 0.6, 0.8, 1.0};
        } else {
            // 20K-token steps up to the 128K admission limit.
            for (double edge = 20000.0; edge <= 140000.0; edge += 20000.0) {
                edges.push_back(edge);
            }
        }
    }
    std::sort(edges.begin(), edges.end());

    std::vector<BucketReport> buckets(edges.size());
    double lower = 0.0;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        buckets[i].lower = lower;
        buckets[i].upper = edges[i];
        lower = edges[i];
    }

    for (const auto& outcome : outcomes) {
        auto pair_it = pairs_by_id.find(outcome.pair_id);
        if (pair_it == pairs_by_id.end()) {
            throw UnknownPairIdError("outcome references unknown pair: " + outcome.pair_id);
        }
        auto book_it = books_by_id.find(pair_it->second.book_id);
        if (book_it == books_by_id.end()) continue;
        auto feature = bucket_feature(pair_it->second, book_it->second, key);
        if (!feature) continue;
        // Values beyond the last edge land in the final bucket.
        std::size_t slot = buckets.size() - 1;
        for (std::size_t i = 0; i < buckets.size(); ++i) {
            if (*feature < buckets[i].upper) {
                slot = i;
                break;
            }
        }
        ++buckets[slot].pairs;
        if (outcome.pair_correct) ++buckets[slot].correct;
    }
    for (auto& bucket : buckets) {
        if (bucket.pairs > 0) {
            bucket.accuracy =
                static_cast<double>(bucket.correct) / static_cast<double>(bucket.pairs);
        }
    }
    return buckets;
}

// --- run report ---------------------------------------------------------------------

RunReport summarize_run(const std::vector<EvalOutcome>& outcomes, const std::string& model_id) {
    RunReport report;
    report.model_id = model_id;
    report.pairs = outcomes.size();
    for (const auto& outcome : outcomes) {
        if (report.condition.empty()) report.condition = outcome.condition;
        if (outcome.pair_correct) ++report.correct;
        if (outcome.true_verdict == Verdict::Unparseable) ++report.unparseable_claims;
        if (outcome.false_verdict == Verdict::Unparseable) ++report.unparseable_claims;
    }
    if (report.pairs > 0) {
        report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.pairs);
    }
    return report;
}

json report_to_json(const RunReport& report) {
    return json{{"condition", report.condition}, {"model", report.model_id},
                {"pairs", report.pairs},         {"correct", report.correct},
                {"accuracy", report.accuracy},   {"unparseable_claims", report.unparseable_claims}};
}

std::string render_report_text(const RunReport& report) {
    std::ostringstream out;
    out << "model: " << report.model_id << "\n"
        << "condition: " << report.condition << "\n"
        << "pairs: " << report.pairs << "\n"
        << "paired accuracy: " << report.accuracy * 100.0 << "%\n"
        << "unparseable claims: " << report.unparseable_claims << "\n";
    return out.str();
}

std::pair<std::size_t, std::size_t> discordant_counts(const std::vector<EvalOutcome>& run_a,
                                                      const std::vector<EvalOutcome>& run_b) {
    std::map<std::string, bool> b_correct;
    for (const auto& outcome : run_b) b_correct[outcome.pair_id] = outcome.pair_correct;
    std::size_t only_a = 0;
    std::size_t only_b = 0;
    for (const auto& outcome : run_a) {
        auto it = b_correct.find(outcome.pair_id);
        if (it == b_correct.end()) continue;
        if (outcome.pair_correct && !it->second) ++only_a;
        if (!outcome.pair_correct && it->second) ++only_b;
    }
    return {only_a, only_b};
}

}  // namespace clipper
