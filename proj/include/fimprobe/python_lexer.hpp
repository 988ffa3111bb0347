#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fimprobe {

// Raised when a script cannot be tokenized or its statement structure is
// malformed. Offsets are byte positions into the source; line/column are
// 1-based / 0-based respectively.
class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& message, std::size_t offset, std::size_t line, std::size_t column);

  std::size_t offset() const { return offset_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
  std::size_t offset_;
  std::size_t line_;
  std::size_t column_;
};

enum class PyTokenType { Name, Number, String, Op, Comment, Newline, NL, Indent, Dedent, EndMarker };

struct PyToken {
  PyTokenType type;
  std::size_t begin = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  std::size_t line = 1;
  std::size_t column = 0;
  int depth = 0;  // bracket depth before this token
  // String tokens: length of the prefix letters and of the quote run.
  std::size_t string_prefix = 0;
  std::size_t quote_len = 0;

  std::string_view text(std::string_view source) const { return source.substr(begin, end - begin); }
  std::size_t inner_begin() const { return begin + string_prefix + quote_len; }
  std::size_t inner_end() const { return end - quote_len; }
};

// Python 3 tokenizer producing INDENT/DEDENT and logical/non-logical line
// tokens in the style of the standard `tokenize` module. f-strings are kept
// as single string tokens.
std::vector<PyToken> tokenize_python(std::string_view source);

bool is_python_keyword(std::string_view word);

}  // namespace fimprobe
