#include "clipper/curate.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "clipper/errors.hpp"
#include "clipper/util/strings.hpp"

namespace clipper {

namespace {

std::vector<std::string> parse_csv_row(const std::string& line) {
    // Minimal CSV: comma-separated, double quotes for fields with commas.
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

}  // namespace

DedupResult dedup_exact(const std::vector<ClaimPair>& pairs) {
    // Group by normalized true-claim text; canonical keeper is the smallest
    // pair_id so the result is independent of input order.
    std::map<std::string, std::vector<const ClaimPair*>> groups;
    for (const auto& pair : pairs) {
        groups[util::normalize_for_dedup(pair.true_claim.text)].push_back(&pair);
    }

    DedupResult result;
    std::vector<std::pair<std::string, DedupDecision>> ordered;  // keyed by kept id
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [](const ClaimPair* a, const ClaimPair* b) { return a->pair_id < b->pair_id; });
        DedupDecision decision;
        decision.method = DedupMethod::Exact;
        decision.kept_pair_id = members.front()->pair_id;
        for (std::size_t i = 1; i < members.size(); ++i) {
            decision.removed_pair_ids.push_back(members[i]->pair_id);
        }
        ordered.emplace_back(decision.kept_pair_id, std::move(decision));
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::map<std::string, const ClaimPair*> by_id;
    for (const auto& pair : pairs) by_id[pair.pair_id] = &pair;
    for (auto& [kept_id, decision] : ordered) {
        result.kept.push_back(*by_id.at(kept_id));
        result.decisions.push_back(std::move(decision));
    }
    return result;
}

DedupResult dedup_llm(const std::vector<ClaimPair>& pairs, const PromptTemplate& tmpl,
                      Gateway& gateway, const ResponseCache& cache,
                      const std::string& model_id) {
    DedupResult result;
    if (pairs.empty()) return result;

    std::ostringstream listing;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        listing << (i + 1) << ". " << pairs[i].true_claim.text << "\n";
    }

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"claims", listing.str()}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "dedup";

    ChatResponse response = gateway.cached_complete(request, cache);

    // Response contract: either a line "NO DUPLICATES" or lines
    // "DUPLICATES: a, b, c" listing 1-based ordinals that describe the same
    // events. Within each group the lowest ordinal is kept.
    std::set<std::size_t> removed;
    std::vector<std::vector<std::size_t>> groups;
    bool parsed_something = false;
    static const std::regex group_re(R"(^\s*DUPLICATES\s*:\s*([0-9][0-9,\s]*)$)",
                                     std::regex::ECMAScript | std::regex::icase);
    static const std::regex none_re(R"(^\s*NO\s+DUPLICATES\b.*$)",
                                    std::regex::ECMAScript | std::regex::icase);
    for (const auto& line : util::split_lines(response.text)) {
        std::smatch match;
        if (std::regex_match(line, match, none_re)) {
            parsed_something = true;
            continue;
        }
        if (!std::regex_match(line, match, group_re)) continue;
        parsed_something = true;
        std::vector<std::size_t> group;
        std::istringstream nums(match[1].str());
        std::string token;
        while (std::getline(nums, token, ',')) {
            std::string t = util::trim(token);
            if (t.empty()) continue;
            std::size_t ordinal = std::stoul(t);
            if (ordinal == 0 || ordinal > pairs.size()) {
                result.warnings.push_back("dedup response cites unknown ordinal " + t);
                continue;
            }
            group.push_back(ordinal);
        }
        if (group.size() >= 2) {
            std::sort(group.begin(), group.end());
            for (std::size_t i = 1; i < group.size(); ++i) removed.insert(group[i]);
            groups.push_back(std::move(group));
        }
    }

    if (!parsed_something) {
        // Batch left un-deduplicated, flagged for manual review.
        result.warnings.push_back("unparseable dedup response; batch kept as-is");
        for (const auto& pair : pairs) {
            result.kept.push_back(pair);
            result.decisions.push_back({pair.pair_id, {}, DedupMethod::Llm});
        }
        return result;
    }

    std::map<std::size_t, DedupDecision> decision_by_keeper;
    for (const auto& group : groups) {
        auto& decision = decision_by_keeper[group.front()];
        decision.kept_pair_id = pairs[group.front() - 1].pair_id;
        decision.method = DedupMethod::Llm;
        for (std::size_t i = 1; i < group.size(); ++i) {
            decision.removed_pair_ids.push_back(pairs[group[i] - 1].pair_id);
        }
    }
    for (std::size_t ordinal = 1; ordinal <= pairs.size(); ++ordinal) {
        if (removed.count(ordinal)) continue;
        result.kept.push_back(pairs[ordinal - 1]);
        auto it = decision_by_keeper.find(ordinal);
        if (it != decision_by_keeper.end()) {
            result.decisions.push_back(it->second);
        } else {
            result.decisions.push_back({pairs[ordinal - 1].pair_id, {}, DedupMethod::Llm});
        }
    }
    return result;
}

std::string to_string(Validity validity) {
    switch (validity) {
        case Validity::Valid: return "VALID";
        case Validity::Invalid: return "INVALID";
        case Validity::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

ValidationVerdict validate_claim(const ClaimPair& pair,
                                 const std::vector<ChapterOutline>& outlines,
                                 const PromptTemplate& tmpl, Gateway& gateway,
                                 const ResponseCache& cache, const std::string& model_id) {
    std::ostringstream outline_block;
    for (const auto& outline : outlines) {
        outline_block << "Chapter " << outline.chapter_index << "\n"
                      << serialize_outline(outline) << "\n";
    }

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"outlines", outline_block.str()},
                                {"true_claim", pair.true_claim.text},
                                {"false_claim", pair.false_claim.text}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "validate";

    ChatResponse response = gateway.cached_complete(request, cache);

    ValidationVerdict verdict;
    verdict.pair_id = pair.pair_id;

    static const std::regex verdict_re(R"(^\s*Verdict\s*:\s*(VALID|INVALID)\b.*$)",
                                       std::regex::ECMAScript | std::regex::icase);
    static const std::regex rationale_re(R"(^\s*Rationale\s*:\s*(.*)$)",
                                         std::regex::ECMAScript | std::regex::icase);
    bool found = false;
    for (const auto& line : util::split_lines(response.text)) {
        std::smatch match;
        if (std::regex_match(line, match, verdict_re)) {
            verdict.verdict = util::to_lower(match[1].str()) == "valid" ? Validity::Valid
                                                                        : Validity::Invalid;
            found = true;
        } else if (std::regex_match(line, match, rationale_re)) {
            verdict.rationale = util::trim(match[1].str());
        }
    }
    if (!found) {
        verdict.verdict = Validity::Unknown;
        verdict.rationale = "unparseable judge response";
    }
    if (verdict.verdict == Validity::Invalid && verdict.rationale.empty()) {
        verdict.rationale = "no rationale given";
    }
    return verdict;
}

ClaimGroundedness ground_cot(const ClaimPair& pair, const std::vector<ChapterOutline>& outlines,
                             const PromptTemplate& tmpl, Gateway& gateway,
                             const ResponseCache& cache, const std::string& model_id,
                             std::size_t book_chapter_count) {
    const ChainOfThought& cot = pair.true_claim.cot;
    if (cot.context_items.empty()) {
        throw Error("ground_cot: claim has no context items: " + pair.pair_id);
    }

    ClaimGroundedness grounded;
    grounded.pair_id = pair.pair_id;
    grounded.events_total = cot.context_items.size();

    std::map<std::size_t, const ChapterOutline*> outline_by_index;
    for (const auto& outline : outlines) outline_by_index[outline.chapter_index] = &outline;

    std::ostringstream items_block;
    for (std::size_t i = 0; i < cot.context_items.size(); ++i) {
        const auto& item = cot.context_items[i];
        items_block << (i + 1) << ". [Chapter " << item.chapter_index << "] " << item.event
                    << "\n";
        if (item.chapter_index == 0 || item.chapter_index > book_chapter_count ||
            outline_by_index.count(item.chapter_index) == 0) {
            grounded.citations_correct = false;
        }
    }

    std::ostringstream outline_block;
    for (const auto& outline : outlines) {
        outline_block << "Chapter " << outline.chapter_index << "\n"
                      << serialize_outline(outline) << "\n";
    }

    ChatRequest request;
    request.model_id = model_id;
    request.user = tmpl.render({{"outlines", outline_block.str()},
                                {"claim", pair.true_claim.text},
                                {"events", items_block.str()}});
    request.temperature = 0.0;
    request.max_tokens = 4096;
    request.request_tag = "ground";

    ChatResponse response = gateway.cached_complete(request, cache);

    // Contract: one "N: GROUNDED" / "N: UNGROUNDED" line per item. Items with
    // no parseable verdict stay unjudged and are excluded from the denominator.
    static const std::regex item_re(R"(^\s*(\d+)\s*[:.]\s*(GROUNDED|UNGROUNDED)\b.*$)",
                                    std::regex::ECMAScript | std::regex::icase);
    std::map<std::size_t, bool> verdicts;
    for (const auto& line : util::split_lines(response.text)) {
        std::smatch match;
        if (!std::regex_match(line, match, item_re)) continue;
        std::size_t ordinal = std::stoul(match[1].str());
        if (ordinal == 0 || ordinal > grounded.events_total) continue;
        verdicts[ordinal] = util::to_lower(match[2].str()) == "grounded";
    }
    for (std::size_t i = 1; i <= grounded.events_total; ++i) {
        auto it = verdicts.find(i);
        if (it == verdicts.end()) {
            ++grounded.events_unjudged;
        } else if (it->second) {
            ++grounded.events_grounded;
        }
    }
    return grounded;
}

GroundednessReport aggregate_groundedness(const std::vector<ClaimGroundedness>& per_claim) {
    GroundednessReport report;
    report.per_claim = per_claim;
    std::size_t fully_grounded = 0;
    for (const auto& claim : per_claim) {
        std::size_t judged = claim.events_total - claim.events_unjudged;
        if (judged == 0) continue;
        ++report.claims_counted;
        if (claim.events_grounded == judged) ++fully_grounded;
    }
    if (report.claims_counted > 0) {
        report.fully_grounded_fraction =
            static_cast<double>(fully_grounded) / static_cast<double>(report.claims_counted);
    }
    return report;
}

std::string to_string(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Invalid: return "Invalid";
        case ErrorCategory::Misattribution: return "Misattribution";
        case ErrorCategory::ExplicitReferences: return "ExplicitReferences";
        case ErrorCategory::Duplication: return "Duplication";
        case ErrorCategory::None: return "None";
    }
    return "None";
}

ErrorCategory error_category_from_string(const std::string& s) {
    std::string key = util::to_lower(util::trim(s));
    if (key == "invalid") return ErrorCategory::Invalid;
    if (key == "misattribution" || key == "mis-attribution") return ErrorCategory::Misattribution;
    if (key == "explicitreferences" || key == "explicit references" || key == "explicit_references")
        return ErrorCategory::ExplicitReferences;
    if (key == "duplication") return ErrorCategory::Duplication;
    if (key == "none") return ErrorCategory::None;
    throw SchemaError("unknown error category: " + s, 0);
}

std::vector<ErrorAnnotation> load_annotations_csv(const std::string& csv_text,
                                                  const std::vector<std::string>& known_pair_ids) {
    std::set<std::string> known(known_pair_ids.begin(), known_pair_ids.end());
    std::vector<ErrorAnnotation> annotations;
    std::size_t line_number = 0;
    for (const auto& line : util::split_lines(csv_text)) {
        ++line_number;
        if (util::trim(line).empty()) continue;
        if (line_number == 1 && util::starts_with_icase(util::trim(line), "pair_id")) continue;
        auto fields = parse_csv_row(line);
        if (fields.size() < 2) {
            throw SchemaError("annotation row needs pair_id,category", line_number);
        }
        ErrorAnnotation annotation;
        annotation.pair_id = util::trim(fields[0]);
        annotation.category = error_category_from_string(fields[1]);
        if (fields.size() > 2) annotation.note = util::trim(fields[2]);
        if (!known.empty() && known.count(annotation.pair_id) == 0) {
            throw UnknownPairIdError("annotation references unknown pair: " + annotation.pair_id);
        }
        annotations.push_back(std::move(annotation));
    }
    return annotations;
}

ErrorReport annotate_errors(const std::vector<ErrorAnnotation>& annotations) {
    ErrorReport report;
    report.total = annotations.size();
    for (const auto& annotation : annotations) {
        ++report.counts[annotation.category];
    }
    if (report.total > 0) {
        std::size_t with_error = report.total - report.counts[ErrorCategory::None];
        report.any_error_rate = static_cast<double>(with_error) / static_cast<double>(report.total);
    }
    return report;
}

std::string to_string(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::Event: return "Event";
        case PerturbationKind::Person: return "Person";
        case PerturbationKind::Object: return "Object";
        case PerturbationKind::Location: return "Location";
        case PerturbationKind::Time: return "Time";
        case PerturbationKind::Affect: return "Affect";
    }
    return "Event";
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
    std::string key = util::to_lower(util::trim(s));
    if (key == "event") return PerturbationKind::Event;
    if (key == "person") return PerturbationKind::Person;
    if (key == "object") return PerturbationKind::Object;
    if (key == "location") return PerturbationKind::Location;
    if (key == "time") return PerturbationKind::Time;
    if (key == "affect") return PerturbationKind::Affect;
    throw SchemaError("unknown perturbation kind: " + s, 0);
}

std::vector<PerturbationTag> load_tags_csv(const std::string& csv_text,
                                           const std::vector<std::string>& known_pair_ids) {
    std::set<std::string> known(known_pair_ids.begin(), known_pair_ids.end());
    std::vector<PerturbationTag> tags;
    std::size_t line_number = 0;
    for (const auto& line : util::split_lines(csv_text)) {
        ++line_number;
        if (util::trim(line).empty()) continue;
        if (line_number == 1 && util::starts_with_icase(util::trim(line), "pair_id")) continue;
        auto fields = parse_csv_row(line);
        if (fields.size() < 2) {
            throw SchemaError("tag row needs pair_id,kinds", line_number);
        }
        PerturbationTag tag;
        tag.pair_id = util::trim(fields[0]);
        if (!known.empty() && known.count(tag.pair_id) == 0) {
            throw UnknownPairIdError("tag references unknown pair: " + tag.pair_id);
        }
        // kinds are ;-separated inside the second field
        std::istringstream kinds(fields[1]);
        std::string kind;
        while (std::getline(kinds, kind, ';')) {
            if (util::trim(kind).empty()) continue;
            tag.kinds.push_back(perturbation_kind_from_string(kind));
        }
        if (tag.kinds.empty()) {
            throw SchemaError("tag row has no kinds", line_number);
        }
        tags.push_back(std::move(tag));
    }
    return tags;
}

PerturbationDistribution tag_perturbations(const std::vector<PerturbationTag>& tags) {
    PerturbationDistribution distribution;
    distribution.tagged_pairs = tags.size();
    for (const auto& tag : tags) {
        std::set<PerturbationKind> unique(tag.kinds.begin(), tag.kinds.end());
        for (auto kind : unique) ++distribution.counts[kind];
    }
    if (distribution.tagged_pairs > 0) {
        for (const auto& [kind, count] : distribution.counts) {
            distribution.frequencies[kind] =
                static_cast<double>(count) / static_cast<double>(distribution.tagged_pairs);
        }
    }
    return distribution;
}

}  // namespace clipper
