#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace gseo::config {

using Value = std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;
using Table = std::map<std::string, Value>;

// Reads the TOML subset used by experiment configs: `key = value` lines with
// basic strings, integers, floats, booleans and arrays of strings (which may
// span lines), plus '#' comments. Tables are not supported.
// Throws config-error with the line number on malformed input.
Table parse(const std::string& text);
Table parse_file(const std::filesystem::path& path);

}  // namespace gseo::config
