#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gseo::text {

[[nodiscard]] std::string trim(std::string_view s);
[[nodiscard]] std::string to_lower(std::string_view s);
[[nodiscard]] std::vector<std::string> split_whitespace(std::string_view s);
[[nodiscard]] std::vector<std::string> split_lines(std::string_view s);
[[nodiscard]] std::size_t word_count(std::string_view s);

// Collapses every whitespace run to a single space and trims.
[[nodiscard]] std::string collapse_whitespace(std::string_view s);

// Keeps the first `max_words` whitespace tokens.
[[nodiscard]] std::string truncate_words(std::string_view s, std::size_t max_words);

[[nodiscard]] bool starts_with_ci(std::string_view s, std::string_view prefix);
[[nodiscard]] bool iequals(std::string_view a, std::string_view b);

// Strips list decorations such as "1.", "2)", "-", "*", "•" from the start
// of a line.
[[nodiscard]] std::string strip_list_marker(std::string_view line);

// Replaces each "{name}" with its value. Braces that do not name a known
// placeholder are left untouched.
[[nodiscard]] std::string render(std::string_view tmpl,
                                 const std::map<std::string, std::string>& values);

}  // namespace gseo::text
