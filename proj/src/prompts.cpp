#include "gseo/prompts.hpp"

#include <fstream>
#include <sstream>

#include "gseo/assets.hpp"
#include "gseo/error.hpp"
#include "gseo/text_util.hpp"

namespace gseo {

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  lib.files_ = assets::builtin();
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw Error("io-error", "template directory not found: " + dir.string());
  }
  PromptLibrary lib = builtin();
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    lib.files_[fs::relative(entry.path(), dir).generic_string()] = buf.str();
  }
  return lib;
}

const std::string& PromptLibrary::get(const std::string& key) const {
  auto it = files_.find(key);
  if (it == files_.end()) throw Error("template-missing", "no template " + key);
  return it->second;
}

bool PromptLibrary::contains(const std::string& key) const { return files_.count(key) != 0; }

std::string PromptLibrary::version() const {
  return contains("VERSION") ? text::trim(get("VERSION")) : std::string("unversioned");
}

void PromptLibrary::set(const std::string& key, std::string content) {
  files_[key] = std::move(content);
}

}  // namespace gseo
