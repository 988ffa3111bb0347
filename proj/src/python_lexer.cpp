#include "fimprobe/python_lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace fimprobe {

SyntaxError::SyntaxError(const std::string& message, std::size_t offset, std::size_t line,
                         std::size_t column)
    : std::runtime_error("syntax error at line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + message),
      reason_(message),
      offset_(offset),
      line_(line),
      column_(column) {}

bool is_python_keyword(std::string_view word) {
  static constexpr std::array<std::string_view, 35> kKeywords = {
      "False", "None",   "True",    "and",      "as",       "assert", "async",
      "await", "break",  "class",   "continue", "def",      "del",    "elif",
      "else",  "except", "finally", "for",      "from",     "global", "if",
      "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
      "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

namespace {

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view word) {
  if (word.empty() || word.size() > 2) return false;
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  static constexpr std::array<std::string_view, 8> kPrefixes = {"r", "u", "b", "f",
                                                                "br", "rb", "fr", "rf"};
  return std::find(kPrefixes.begin(), kPrefixes.end(), lower) != kPrefixes.end();
}

constexpr std::array<std::string_view, 24> kMultiCharOps = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", ">>", "<<", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@="};
constexpr std::string_view kSingleCharOps = "+-*/%@&|^~<>()[]{},:.;=";

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<PyToken> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_ && brackets_.empty()) {
        if (!handle_line_start()) break;
        continue;
      }
      scan_token();
    }
    if (!brackets_.empty()) {
      fail("unexpected EOF: '" + std::string(1, brackets_.back().first) + "' was never closed",
           brackets_.back().second);
    }
    if (line_has_content_) emit(PyTokenType::Newline, pos_, pos_);
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(PyTokenType::Dedent, pos_, pos_);
    }
    emit(PyTokenType::EndMarker, pos_, pos_);
    return std::move(tokens_);
  }

 private:
  [[noreturn]] void fail(const std::string& message, std::size_t offset) const {
    // Recompute line/column for the offending offset.
    std::size_t line = 1, line_start = 0;
    for (std::size_t i = 0; i < offset && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        line_start = i + 1;
      }
    }
    throw SyntaxError(message, offset, line, offset - line_start);
  }

  PyToken& emit(PyTokenType type, std::size_t begin, std::size_t end) {
    PyToken tok;
    tok.type = type;
    tok.begin = begin;
    tok.end = end;
    tok.line = line_;
    tok.column = begin >= line_start_ ? begin - line_start_ : 0;
    tok.depth = static_cast<int>(brackets_.size());
    tokens_.push_back(tok);
    return tokens_.back();
  }

  std::size_t newline_length(std::size_t at) const {
    if (at >= src_.size()) return 0;
    if (src_[at] == '\n') return 1;
    if (src_[at] == '\r') return (at + 1 < src_.size() && src_[at + 1] == '\n') ? 2 : 1;
    return 0;
  }

  void advance_line(std::size_t after) {
    ++line_;
    line_start_ = after;
  }

  // Returns false at end of input.
  bool handle_line_start() {
    std::size_t col = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      char c = src_[p];
      if (c == ' ') {
        ++col;
      } else if (c == '\t') {
        col = (col / 8 + 1) * 8;
      } else if (c == '\f') {
        col = 0;
      } else {
        break;
      }
      ++p;
    }
    pos_ = p;
    if (p >= src_.size()) return false;
    if (src_[p] == '#') {
      scan_comment();
      if (std::size_t nl = newline_length(pos_); nl > 0) {
        emit(PyTokenType::NL, pos_, pos_ + nl);
        pos_ += nl;
        advance_line(pos_);
      }
      return true;
    }
    if (std::size_t nl = newline_length(p); nl > 0) {
      emit(PyTokenType::NL, p, p + nl);
      pos_ = p + nl;
      advance_line(pos_);
      return true;
    }
    if (src_[p] == '\\' && newline_length(p + 1) > 0) {
      // A continuation-only line; treat as blank.
      pos_ = p + 1 + newline_length(p + 1);
      advance_line(pos_);
      return true;
    }
    if (col > indents_.back()) {
      indents_.push_back(col);
      emit(PyTokenType::Indent, line_start_, p);
    } else {
      while (col < indents_.back()) {
        indents_.pop_back();
        emit(PyTokenType::Dedent, p, p);
      }
      if (col != indents_.back()) fail("unindent does not match any outer indentation level", p);
    }
    at_line_start_ = false;
    return true;
  }

  void scan_comment() {
    std::size_t b = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') ++pos_;
    emit(PyTokenType::Comment, b, pos_);
  }

  void scan_token() {
    const char c = src_[pos_];
    const auto uc = static_cast<unsigned char>(c);
    if (c == ' ' || c == '\t' || c == '\f') {
      ++pos_;
      return;
    }
    if (std::size_t nl = newline_length(pos_); nl > 0) {
      if (brackets_.empty() && line_has_content_) {
        emit(PyTokenType::Newline, pos_, pos_ + nl);
        line_has_content_ = false;
      } else {
        emit(PyTokenType::NL, pos_, pos_ + nl);
      }
      pos_ += nl;
      advance_line(pos_);
      if (brackets_.empty()) at_line_start_ = true;
      return;
    }
    if (c == '\\') {
      std::size_t nl = newline_length(pos_ + 1);
      if (nl == 0) fail("unexpected character after line continuation character", pos_);
      pos_ += 1 + nl;
      advance_line(pos_);
      if (pos_ >= src_.size()) fail("unexpected EOF after line continuation", pos_);
      return;
    }
    if (c == '#') {
      scan_comment();
      return;
    }
    line_has_content_ = true;
    if (is_name_start(uc)) {
      std::size_t b = pos_;
      while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      std::string_view word = src_.substr(b, pos_ - b);
      if (pos_ < src_.size() && (src_[pos_] == '\'' || src_[pos_] == '"') && is_string_prefix(word)) {
        scan_string(b, pos_ - b);
        return;
      }
      emit(PyTokenType::Name, b, pos_);
      return;
    }
    if (std::isdigit(uc) ||
        (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      scan_number();
      return;
    }
    if (c == '\'' || c == '"') {
      scan_string(pos_, 0);
      return;
    }
    scan_operator();
  }

  void scan_number() {
    std::size_t b = pos_;
    bool hex = src_.substr(pos_, 2) == "0x" || src_.substr(pos_, 2) == "0X";
    while (pos_ < src_.size()) {
      const auto ch = static_cast<unsigned char>(src_[pos_]);
      if (std::isalnum(ch) || ch == '_' || ch == '.') {
        ++pos_;
        if (!hex && (ch == 'e' || ch == 'E') && pos_ < src_.size() &&
            (src_[pos_] == '+' || src_[pos_] == '-')) {
          ++pos_;
        }
      } else {
        break;
      }
    }
    emit(PyTokenType::Number, b, pos_);
  }

  void scan_string(std::size_t begin, std::size_t prefix_len) {
    const std::size_t qpos = begin + prefix_len;
    const char q = src_[qpos];
    const bool triple = qpos + 2 < src_.size() && src_[qpos + 1] == q && src_[qpos + 2] == q;
    const std::size_t qlen = triple ? 3 : 1;
    const std::size_t start_line = line_;
    const std::size_t start_line_start = line_start_;
    std::size_t p = qpos + qlen;
    while (true) {
      if (p >= src_.size()) {
        fail(triple ? "unterminated triple-quoted string literal" : "unterminated string literal",
             begin);
      }
      const char ch = src_[p];
      if (ch == '\\') {
        std::size_t nl = newline_length(p + 1);
        if (nl > 0) {
          p += 1 + nl;
          advance_line(p);
        } else {
          p += 2;
        }
        continue;
      }
      if (std::size_t nl = newline_length(p); nl > 0) {
        if (!triple) fail("unterminated string literal", begin);
        p += nl;
        advance_line(p);
        continue;
      }
      if (ch == q) {
        if (!triple) {
          ++p;
          break;
        }
        if (p + 2 < src_.size() && src_[p + 1] == q && src_[p + 2] == q) {
          p += 3;
          break;
        }
      }
      ++p;
    }
    // Report the token at its starting line.
    const std::size_t end_line = line_, end_line_start = line_start_;
    line_ = start_line;
    line_start_ = start_line_start;
    PyToken& tok = emit(PyTokenType::String, begin, p);
    tok.string_prefix = prefix_len;
    tok.quote_len = qlen;
    line_ = end_line;
    line_start_ = end_line_start;
    pos_ = p;
  }

  void scan_operator() {
    for (std::string_view op : kMultiCharOps) {
      if (src_.substr(pos_, op.size()) == op) {
        emit(PyTokenType::Op, pos_, pos_ + op.size());
        pos_ += op.size();
        return;
      }
    }
    const char c = src_[pos_];
    if (kSingleCharOps.find(c) == std::string_view::npos) {
      fail(std::string("invalid character '") + c + "'", pos_);
    }
    if (c == '(' || c == '[' || c == '{') {
      emit(PyTokenType::Op, pos_, pos_ + 1);
      brackets_.emplace_back(c, pos_);
    } else if (c == ')' || c == ']' || c == '}') {
      const char open = c == ')' ? '(' : (c == ']' ? '[' : '{');
      if (brackets_.empty()) fail(std::string("unmatched '") + c + "'", pos_);
      if (brackets_.back().first != open) {
        fail(std::string("closing parenthesis '") + c + "' does not match opening parenthesis '" +
                 brackets_.back().first + "'",
             pos_);
      }
      brackets_.pop_back();
      emit(PyTokenType::Op, pos_, pos_ + 1);
    } else {
      emit(PyTokenType::Op, pos_, pos_ + 1);
    }
    ++pos_;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_start_ = 0;
  bool at_line_start_ = true;
  bool line_has_content_ = false;
  std::vector<std::size_t> indents_;
  std::vector<std::pair<char, std::size_t>> brackets_;
  std::vector<PyToken> tokens_;
};

}  // namespace

std::vector<PyToken> tokenize_python(std::string_view source) { return Lexer(source).run(); }

}  // namespace fimprobe
