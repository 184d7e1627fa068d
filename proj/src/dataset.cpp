#include "clipper/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "clipper/errors.hpp"

namespace clipper {

namespace {

using nlohmann::json;

std::size_t to_pair_count(std::size_t target, SplitUnit unit) {
    if (unit == SplitUnit::Pairs) return target;
    return (target + 1) / 2;  // claims -> pairs, rounding up
}

}  // namespace

SplitResult split(const std::vector<ClaimPair>& pairs, const SplitSpec& spec) {
    const std::size_t train_target = to_pair_count(spec.train, spec.unit);
    const std::size_t val_target = to_pair_count(spec.val, spec.unit);
    const std::size_t test_target = to_pair_count(spec.test, spec.unit);
    if (train_target == 0 || val_target == 0 || test_target == 0) {
        throw InfeasibleSpecError("split targets must be positive");
    }
    if (pairs.size() < train_target + val_target + test_target) {
        throw InfeasibleSpecError("not enough pairs: have " + std::to_string(pairs.size()));
    }

    // Book-level test assignment: largest books first until the target is met.
    std::map<std::string, std::vector<const ClaimPair*>> by_book;
    for (const auto& pair : pairs) by_book[pair.book_id].push_back(&pair);
    std::vector<std::pair<std::string, std::size_t>> book_sizes;
    book_sizes.reserve(by_book.size());
    for (const auto& [book_id, members] : by_book) {
        book_sizes.emplace_back(book_id, members.size());
    }
    std::sort(book_sizes.begin(), book_sizes.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    SplitResult result;
    std::size_t test_count = 0;
    for (const auto& [book_id, size] : book_sizes) {
        if (test_count >= test_target) break;
        result.test_books.push_back(book_id);
        for (const ClaimPair* pair : by_book.at(book_id)) result.test.push_back(*pair);
        test_count += size;
    }
    if (test_count < test_target) {
        throw InfeasibleSpecError("test target unreachable even using every book");
    }
    if (by_book.size() == result.test_books.size()) {
        throw InfeasibleSpecError("all books consumed by the test split");
    }

    std::vector<ClaimPair> remaining;
    {
        std::vector<std::string> test_set(result.test_books);
        std::sort(test_set.begin(), test_set.end());
        for (const auto& pair : pairs) {
            if (!std::binary_search(test_set.begin(), test_set.end(), pair.book_id)) {
                remaining.push_back(pair);
            }
        }
    }
    if (remaining.size() < train_target + val_target) {
        throw InfeasibleSpecError("train+val targets exceed remaining pairs");
    }

    deterministic_shuffle(remaining, spec.seed);
    result.train.assign(remaining.begin(),
                        remaining.begin() + static_cast<std::ptrdiff_t>(train_target));
    result.val.assign(remaining.begin() + static_cast<std::ptrdiff_t>(train_target),
                      remaining.end());
    return result;
}

std::vector<SftRecord> to_sft_records(const ClaimPair& pair, const Book& book,
                                      const SftTemplates& templates) {
    std::string full_text = book.preamble;
    for (const auto& ch : book.chapters) {
        if (ch.heading) {
            full_text += *ch.heading;
            full_text.push_back('\n');
        }
        full_text += ch.text;
    }

    auto make_record = [&](const Claim& claim) {
        SftRecord record;
        record.system = templates.system_message;
        record.user = templates.user.render({{"book_text", full_text},
                                             {"title", book.title},
                                             {"author", book.author},
                                             {"claim", claim.text}});
        record.assistant = serialize_cot(claim.cot);
        record.pair_id = pair.pair_id;
        record.book_id = pair.book_id;
        record.scope = pair.scope;
        record.label = claim.label;
        return record;
    };
    return {make_record(pair.true_claim), make_record(pair.false_claim)};
}

void export_jsonl(const std::vector<SftRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& record : records) {
        json body{{"system", record.system},
                  {"user", record.user},
                  {"assistant", record.assistant},
                  {"meta",
                   {{"pair_id", record.pair_id},
                    {"book_id", record.book_id},
                    {"scope", to_string(record.scope)},
                    {"label", to_string(record.label)}}}};
        out << body.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<SftRecord> import_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<SftRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json body;
        try {
            body = json::parse(line);
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("bad JSON: ") + ex.what(), line_number);
        }
        try {
            SftRecord record;
            record.system = body.at("system").get<std::string>();
            record.user = body.at("user").get<std::string>();
            record.assistant = body.at("assistant").get<std::string>();
            const auto& meta = body.at("meta");
            record.pair_id = meta.at("pair_id").get<std::string>();
            record.book_id = meta.at("book_id").get<std::string>();
            record.scope = claim_scope_from_string(meta.at("scope").get<std::string>());
            record.label = claim_label_from_string(meta.at("label").get<std::string>());
            records.push_back(std::move(record));
        } catch (const json::exception& ex) {
            throw SchemaError(std::string("missing field: ") + ex.what(), line_number);
        } catch (const SchemaError&) {
            throw SchemaError("bad scope or label", line_number);
        }
    }
    return records;
}

}  // namespace clipper
