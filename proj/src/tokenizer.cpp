#include "clipper/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

#include "clipper/errors.hpp"

namespace clipper {

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

namespace {

std::string decode_base64(std::string_view in) {
    static const auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
        for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(alphabet[i])] = i;
        return t;
    }();
    std::string out;
    int val = 0;
    int bits = -8;
    for (char c : in) {
        if (c == '=') break;
        int d = table[static_cast<unsigned char>(c)];
        if (d == -1) continue;
        val = (val << 6) + d;
        bits += 6;
        if (bits >= 0) {
            out.push_back(static_cast<char>((val >> bits) & 0xFF));
            bits -= 8;
        }
    }
    return out;
}

enum class CharClass { Letter, Digit, Space, Other };

CharClass classify(unsigned char c) {
    if (std::isalpha(c) || c >= 0x80) return CharClass::Letter;  // UTF-8 bytes stay with letters
    if (std::isdigit(c)) return CharClass::Digit;
    if (std::isspace(c)) return CharClass::Space;
    return CharClass::Other;
}

}  // namespace

BpeTokenizer::BpeTokenizer(std::string tokenizer_name, const std::string& vocab_path)
    : name_(std::move(tokenizer_name)) {
    std::ifstream in(vocab_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open tokenizer vocabulary: " + vocab_path);
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t sp = line.find(' ');
        if (sp == std::string::npos) {
            throw IoError("malformed vocabulary line in " + vocab_path);
        }
        std::string token = decode_base64(std::string_view(line).substr(0, sp));
        int rank = std::stoi(line.substr(sp + 1));
        ranks_.emplace(std::move(token), rank);
    }
    if (ranks_.empty()) {
        throw IoError("empty tokenizer vocabulary: " + vocab_path);
    }
}

std::vector<std::string> BpeTokenizer::encode_pieces(std::string_view text) const {
    // Approximates GPT-style pre-tokenization: a piece is an optional leading
    // space plus a maximal run of one character class.
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t begin = i;
        if (text[i] == ' ') ++i;
        if (i >= text.size()) {
            pieces.emplace_back(text.substr(begin));
            break;
        }
        CharClass cls = classify(static_cast<unsigned char>(text[i]));
        ++i;
        while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == cls &&
               text[i] != ' ') {
            ++i;
        }
        pieces.emplace_back(text.substr(begin, i - begin));
    }
    return pieces;
}

std::size_t BpeTokenizer::count_piece(std::string_view piece) const {
    // Standard BPE: start from bytes, repeatedly merge the adjacent pair with
    // the lowest rank until no merge applies.
    std::vector<std::string> parts;
    parts.reserve(piece.size());
    for (char c : piece) parts.emplace_back(1, c);

    while (parts.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        std::size_t best_index = 0;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            auto it = ranks_.find(parts[i] + parts[i + 1]);
            if (it != ranks_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_index = i;
            }
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        parts[best_index] += parts[best_index + 1];
        parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(best_index) + 1);
    }
    return parts.size();
}

std::size_t BpeTokenizer::count(std::string_view text) const {
    std::size_t total = 0;
    for (const auto& piece : encode_pieces(text)) {
        total += count_piece(piece);
    }
    return total;
}

TokenizerRegistry::TokenizerRegistry() {
    tokenizers_["whitespace"] = std::make_shared<WhitespaceTokenizer>();
}

void TokenizerRegistry::register_tokenizer(const std::string& id,
                                           std::shared_ptr<Tokenizer> tokenizer) {
    tokenizers_[id] = std::move(tokenizer);
}

const Tokenizer& TokenizerRegistry::get(const std::string& id) const {
    auto it = tokenizers_.find(id);
    if (it == tokenizers_.end()) {
        throw UnknownTokenizerError("unknown tokenizer: " + id);
    }
    return *it->second;
}

bool TokenizerRegistry::has(const std::string& id) const { return tokenizers_.count(id) > 0; }

std::size_t count_tokens(const TokenizerRegistry& registry, const std::string& tokenizer_id,
                         std::string_view text) {
    return registry.get(tokenizer_id).count(text);
}

}  // namespace clipper
