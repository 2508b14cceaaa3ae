#pragma once

#include <map>
#include <string>

namespace gseo::assets {

// Files under assets/ compiled into the library, keyed by relative path
// (e.g. "prompts/summarize.txt", "rubrics/relevance.txt").
const std::map<std::string, std::string>& builtin();

}  // namespace gseo::assets
