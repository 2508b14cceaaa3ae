#include "gseo/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gseo/error.hpp"

namespace gseo::config {

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  Table run() {
    Table table;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      const std::size_t key_line = line_;
      std::string key = read_key();
      skip_inline_space();
      expect('=');
      skip_inline_space();
      Value v = read_value();
      end_of_line();
      if (!table.emplace(key, std::move(v)).second) {
        fail(key_line, fmt::format("duplicate key '{}'", key));
      }
    }
    return table;
  }

 private:
  [[noreturn]] void fail(std::size_t line, const std::string& why) const {
    throw Error("config-error", fmt::format("line {}: {}", line, why));
  }
  [[noreturn]] void fail(const std::string& why) const { fail(line_, why); }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void advance() {
    if (s_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_inline_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) advance();
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') advance();
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\r') advance();
      if (peek() == '\n') {
        advance();
        continue;
      }
      break;
    }
  }

  void end_of_line() {
    skip_inline_space();
    skip_comment();
    if (peek() == '\r') advance();
    if (eof()) return;
    if (peek() != '\n') fail(fmt::format("unexpected '{}' after value", peek()));
    advance();
  }

  void expect(char c) {
    if (peek() != c) fail(fmt::format("expected '{}'", c));
    advance();
  }

  std::string read_key() {
    if (peek() == '[') fail("tables are not supported");
    if (peek() == '"') return read_string();
    std::string key;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) {
      key.push_back(peek());
      advance();
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::string read_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = peek();
      advance();
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (eof()) fail("unterminated string");
      char e = peek();
      advance();
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(fmt::format("unsupported escape '\\{}'", e));
      }
    }
    return out;
  }

  // Arrays may span lines and contain comments.
  std::vector<std::string> read_array() {
    expect('[');
    std::vector<std::string> out;
    while (true) {
      skip_blank_lines();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        advance();
        return out;
      }
      if (peek() != '"') fail("arrays may only hold strings");
      out.push_back(read_string());
      skip_blank_lines();
      if (peek() == ',') {
        advance();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Value read_value() {
    if (peek() == '"') return read_string();
    if (peek() == '[') return read_array();
    std::string tok;
    while (!eof() && peek() != '\n' && peek() != '#' && peek() != ' ' && peek() != '\t' && peek() != '\r') {
      tok.push_back(peek());
      advance();
    }
    if (tok.empty()) fail("missing value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    const char* b = digits.data();
    const char* e = digits.data() + digits.size();
    if (*b == '+') ++b;
    if (is_float) {
      std::istringstream in(std::string(b, e));
      in.imbue(std::locale::classic());
      double d = 0;
      in >> d;
      if (!in || in.peek() != std::char_traits<char>::eof()) fail(fmt::format("invalid value '{}'", tok));
      return d;
    }
    std::int64_t i = 0;
    auto [ptr, ec] = std::from_chars(b, e, i);
    if (ec != std::errc{} || ptr != e) fail(fmt::format("invalid value '{}'", tok));
    return i;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

Table parse(const std::string& text) { return Parser(text).run(); }

Table parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config-not-found", fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace gseo::config
