#pragma once

#include <stdexcept>
#include <string>

namespace clipper {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// --- corpus ---

struct MissingMarkersError : Error {
    using Error::Error;
};

struct NoChaptersFoundError : Error {
    using Error::Error;
};

struct UnknownTokenizerError : Error {
    using Error::Error;
};

struct EmptyCorpusError : Error {
    using Error::Error;
};

// --- gateway ---

struct ProviderError : Error {
    ProviderError(const std::string& msg, int status = 0)
        : Error(msg), status_code(status) {}
    int status_code;
};

struct AuthError : Error {
    using Error::Error;
};

struct CacheError : Error {
    using Error::Error;
};

struct UnknownModelPriceError : Error {
    using Error::Error;
};

// --- LLM response parsing ---

/// Carries the raw model output so malformed responses can be repaired by hand.
struct ParseError : Error {
    ParseError(const std::string& msg, std::string raw_response = {})
        : Error(msg), raw(std::move(raw_response)) {}
    std::string raw;
};

struct MissingTagError : ParseError {
    MissingTagError(const std::string& tag, std::string raw_response = {})
        : ParseError("missing tag: <" + tag + ">", std::move(raw_response)), tag_kind(tag) {}
    std::string tag_kind;
};

struct AmbiguousAnswerError : ParseError {
    using ParseError::ParseError;
};

struct BatchEmptyError : Error {
    using Error::Error;
};

struct InvalidPairError : Error {
    using Error::Error;
};

struct ChapterMismatchError : Error {
    using Error::Error;
};

struct EmptySummaryError : Error {
    using Error::Error;
};

struct ZeroLengthBookError : Error {
    using Error::Error;
};

// --- dataset ---

struct InfeasibleSpecError : Error {
    using Error::Error;
};

struct TemplateError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    SchemaError(const std::string& msg, std::size_t line_number)
        : Error(msg + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
    std::size_t line;
};

// --- evalbench ---

struct EmptyRunError : Error {
    using Error::Error;
};

struct EmptyBookError : Error {
    using Error::Error;
};

struct UnknownKeyError : Error {
    using Error::Error;
};

struct NoDiscordantPairsError : Error {
    using Error::Error;
};

struct AllZeroDifferencesError : Error {
    using Error::Error;
};

struct UnknownPairIdError : Error {
    using Error::Error;
};

}  // namespace clipper
