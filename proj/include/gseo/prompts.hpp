#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace gseo {

// Versioned set of prompt templates, judge rubrics and labeling taxonomies.
//
// Keys are relative paths such as "prompts/rewrite.txt". The built-in set is
// compiled from the repository's assets/ tree; a directory with the same
// layout can replace it wholesale or overlay individual files.
class PromptLibrary {
 public:
  static PromptLibrary builtin();

  // Loads every regular file under `dir`. Missing files fall back to the
  // built-in set so that a directory may override only what it changes.
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] bool contains(const std::string& key) const;

  [[nodiscard]] const std::string& prompt(const std::string& name) const {
    return get("prompts/" + name + ".txt");
  }

  // Contents of the VERSION file, trimmed.
  [[nodiscard]] std::string version() const;

  void set(const std::string& key, std::string content);

  [[nodiscard]] const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::map<std::string, std::string> files_;
};

}  // namespace gseo
