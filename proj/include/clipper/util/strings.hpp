#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clipper::util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Collapses runs of whitespace (including newlines) to single spaces and trims.
std::string collapse_whitespace(std::string_view s);

/// Lowercase, strip punctuation, collapse whitespace. The canonical form used
/// for exact-duplicate detection.
std::string normalize_for_dedup(std::string_view s);

/// Splits into lines on '\n'; the terminator is not included.
std::vector<std::string> split_lines(std::string_view s);

/// Whitespace-delimited word split.
std::vector<std::string> split_words(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Replaces every occurrence of {{key}} in the template body.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace clipper::util
