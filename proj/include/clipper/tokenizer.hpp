#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clipper {

/// Token counting sits behind this interface so the pipeline can run against
/// the reference o200k_base vocabulary when its file is available and against
/// the whitespace fallback in offline tests. Implementations must be safe to
/// share between worker threads.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::size_t count(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Splits on whitespace runs; "a b c" counts 3. Registered as "whitespace".
class WhitespaceTokenizer : public Tokenizer {
public:
    std::size_t count(std::string_view text) const override;
    std::string name() const override { return "whitespace"; }
};

/// Byte-level BPE over a tiktoken-format vocabulary file (base64 token and
/// rank per line). Pre-tokenizes into word/number/punctuation/space runs, then
/// applies lowest-rank merges within each piece.
class BpeTokenizer : public Tokenizer {
public:
    BpeTokenizer(std::string tokenizer_name, const std::string& vocab_path);

    std::size_t count(std::string_view text) const override;
    std::string name() const override { return name_; }

    std::vector<std::string> encode_pieces(std::string_view text) const;

private:
    std::size_t count_piece(std::string_view piece) const;

    std::string name_;
    std::unordered_map<std::string, int> ranks_;
};

/// Registry mapping tokenizer_id to shared instances. "whitespace" is always
/// present; others are added from config.
class TokenizerRegistry {
public:
    TokenizerRegistry();

    void register_tokenizer(const std::string& id, std::shared_ptr<Tokenizer> tokenizer);

    /// Throws UnknownTokenizerError for ids never registered.
    const Tokenizer& get(const std::string& id) const;
    bool has(const std::string& id) const;

private:
    std::map<std::string, std::shared_ptr<Tokenizer>> tokenizers_;
};

/// count_tokens(text, tokenizer_id): deterministic for fixed inputs.
std::size_t count_tokens(const TokenizerRegistry& registry, const std::string& tokenizer_id,
                         std::string_view text);

}  // namespace clipper
