#include "fimprobe/extraction.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>

#include "fimprobe/util.hpp"

namespace fimprobe {

namespace {

using Tokens = std::vector<PyToken>;

// A logical line made of significant tokens only (no comments, NL, indents).
struct LogicalLine {
  std::vector<std::size_t> toks;  // indices into the token vector
  int level = 0;
  bool after_indent = false;
  std::size_t first_line = 0;
  std::size_t last_line = 0;
};

bool is_significant(PyTokenType t) {
  return t == PyTokenType::Name || t == PyTokenType::Number || t == PyTokenType::String ||
         t == PyTokenType::Op;
}

class ScriptParser {
 public:
  ScriptParser(std::string_view source, const ExtractionOptions& options)
      : src_(source), options_(options), tokens_(tokenize_python(source)) {
    build_lines();
  }

  std::vector<ExtractedIdentifier> extract() {
    validate_structure();
    find_docstrings();
    for (std::size_t li = 0; li < lines_.size(); ++li) analyze_line(li);
    return collect();
  }

  std::vector<TopLevelBlock> top_level_blocks() {
    validate_structure();
    std::vector<TopLevelBlock> blocks;
    for (std::size_t li = 0; li < lines_.size(); ++li) {
      const auto& line = lines_[li];
      if (line.level != 0) continue;
      std::size_t k = 0;
      if (word(line, 0) == "async") k = 1;
      const auto kw = word(line, k);
      if (kw != "def" && kw != "class") continue;
      TopLevelBlock block;
      block.is_class = kw == "class";
      block.name = std::string(text_at(line, k + 1));
      block.first_line = line.first_line;
      block.last_line = line.last_line;
      for (std::size_t lj = li + 1; lj < lines_.size() && lines_[lj].level > 0; ++lj) {
        block.last_line = lines_[lj].last_line;
      }
      blocks.push_back(std::move(block));
    }
    return blocks;
  }

 private:
  const PyToken& tok(std::size_t i) const { return tokens_[i]; }
  std::string_view text(std::size_t i) const { return tokens_[i].text(src_); }
  bool is_op(std::size_t i, std::string_view op) const {
    return tokens_[i].type == PyTokenType::Op && text(i) == op;
  }
  bool is_name(std::size_t i) const { return tokens_[i].type == PyTokenType::Name; }
  bool is_word(std::size_t i, std::string_view w) const { return is_name(i) && text(i) == w; }
  std::string_view word(const LogicalLine& line, std::size_t k) const {
    if (k >= line.toks.size() || !is_name(line.toks[k])) return {};
    return text(line.toks[k]);
  }
  std::string_view text_at(const LogicalLine& line, std::size_t k) const {
    return k < line.toks.size() ? text(line.toks[k]) : std::string_view{};
  }

  [[noreturn]] void fail_at(std::size_t token_index, const std::string& message) const {
    const auto& t = tokens_[std::min(token_index, tokens_.size() - 1)];
    throw SyntaxError(message, t.begin, t.line, t.column);
  }

  void build_lines() {
    int level = 0;
    bool pending_indent = false;
    LogicalLine current;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& t = tokens_[i];
      switch (t.type) {
        case PyTokenType::Indent:
          ++level;
          pending_indent = true;
          break;
        case PyTokenType::Dedent:
          --level;
          break;
        case PyTokenType::Newline:
          if (!current.toks.empty()) {
            current.last_line = t.line;
            lines_.push_back(std::move(current));
          }
          current = LogicalLine{};
          break;
        default:
          if (is_significant(t.type)) {
            if (current.toks.empty()) {
              current.level = level;
              current.after_indent = pending_indent;
              current.first_line = t.line;
              pending_indent = false;
            }
            current.toks.push_back(i);
          }
          break;
      }
    }
  }

  static bool is_compound_keyword(std::string_view w) {
    static constexpr std::array<std::string_view, 13> kCompound = {
        "if", "elif", "else", "for", "while", "try", "except", "finally", "with", "def", "class",
        "async", "match"};
    return std::find(kCompound.begin(), kCompound.end(), w) != kCompound.end() || w == "case";
  }

  // Position (within line.toks) of the colon that closes a compound statement
  // header, if this line is one.
  std::optional<std::size_t> header_colon(const LogicalLine& line) const {
    const auto first = word(line, 0);
    if (!is_compound_keyword(first)) return std::nullopt;
    const bool soft = first == "match" || first == "case";
    int pending_lambda = 0;
    std::optional<std::size_t> colon;
    for (std::size_t k = 0; k < line.toks.size(); ++k) {
      const auto i = line.toks[k];
      if (tok(i).depth != 0) continue;
      if (is_word(i, "lambda")) ++pending_lambda;
      if (is_op(i, ":")) {
        if (pending_lambda > 0) {
          --pending_lambda;
          continue;
        }
        colon = k;
        break;
      }
    }
    if (soft) {
      // `match`/`case` are soft keywords; only a trailing colon makes them headers.
      if (!colon || *colon + 1 != line.toks.size() || line.toks.size() < 3) return std::nullopt;
      const auto second = line.toks[1];
      if (tok(second).type == PyTokenType::Op && (text(second) == "=" || text(second) == "." ||
                                                  text(second) == ":" || text(second) == ",")) {
        return std::nullopt;
      }
      return colon;
    }
    if (first == "async") {
      const auto next = word(line, 1);
      if (next != "def" && next != "for" && next != "with") fail_at(line.toks[0], "invalid syntax");
    }
    if (!colon) fail_at(line.toks.back(), "expected ':'");
    return colon;
  }

  void validate_structure() {
    if (validated_) return;
    validated_ = true;
    header_colons_.resize(lines_.size());
    for (std::size_t li = 0; li < lines_.size(); ++li) {
      const auto& line = lines_[li];
      header_colons_[li] = header_colon(line);
      const auto& colon = header_colons_[li];
      const bool opens_block = colon && *colon + 1 == line.toks.size();
      if (line.after_indent) {
        if (li == 0 || !header_colons_[li - 1] ||
            *header_colons_[li - 1] + 1 != lines_[li - 1].toks.size()) {
          fail_at(line.toks.front(), "unexpected indent");
        }
      }
      if (opens_block && (li + 1 >= lines_.size() || !lines_[li + 1].after_indent)) {
        fail_at(line.toks.back(), "expected an indented block");
      }
      std::size_t k = word(line, 0) == "async" ? 1 : 0;
      const auto kw = word(line, k);
      if (colon && (kw == "def" || kw == "class")) {
        if (k + 1 >= line.toks.size() || !is_name(line.toks[k + 1]) ||
            is_python_keyword(text(line.toks[k + 1]))) {
          fail_at(line.toks[std::min(k + 1, line.toks.size() - 1)], "invalid syntax");
        }
        if (kw == "def" && (k + 2 >= line.toks.size() || !is_op(line.toks[k + 2], "("))) {
          fail_at(line.toks[std::min(k + 2, line.toks.size() - 1)], "expected '('");
        }
      }
      if ((kw == "else" || kw == "try" || kw == "finally") && colon && *colon != k + 1) {
        fail_at(line.toks[k + 1], "expected ':'");
      }
    }
  }

  bool is_docstring_statement(const std::vector<std::size_t>& toks, std::size_t from) const {
    if (from >= toks.size()) return false;
    const auto i = toks[from];
    if (tok(i).type != PyTokenType::String) return false;
    const auto pfx = text(i).substr(0, tok(i).string_prefix);
    for (char c : pfx) {
      if (c == 'f' || c == 'F' || c == 'b' || c == 'B') return false;
    }
    return from + 1 == toks.size() || is_op(toks[from + 1], ";");
  }

  void find_docstrings() {
    if (lines_.empty()) return;
    if (lines_[0].level == 0 && is_docstring_statement(lines_[0].toks, 0)) {
      docstring_tokens_.insert(lines_[0].toks[0]);
    }
    for (std::size_t li = 0; li < lines_.size(); ++li) {
      const auto& colon = header_colons_[li];
      if (!colon) continue;
      const auto& line = lines_[li];
      std::size_t k = word(line, 0) == "async" ? 1 : 0;
      const auto kw = word(line, k);
      if (kw != "def" && kw != "class") continue;
      if (*colon + 1 < line.toks.size()) {
        if (is_docstring_statement(line.toks, *colon + 1)) {
          docstring_tokens_.insert(line.toks[*colon + 1]);
        }
      } else if (li + 1 < lines_.size() && is_docstring_statement(lines_[li + 1].toks, 0)) {
        docstring_tokens_.insert(lines_[li + 1].toks[0]);
      }
    }
  }

  void add_name(IdentifierKind kind, std::size_t token_index) {
    const auto name = text(token_index);
    if (is_python_keyword(name)) return;
    auto& seen = names_[static_cast<std::size_t>(kind)];
    seen.emplace(std::string(name), token_index);
  }

  // Marks bare names inside an assignment target list as bound variables.
  void collect_targets(const std::vector<std::size_t>& toks, std::size_t b, std::size_t e) {
    if (b >= e) return;
    const int base = tok(toks[b]).depth;
    std::size_t s = b;
    for (std::size_t k = b; k <= e; ++k) {
      if (k == e || (tok(toks[k]).depth == base && is_op(toks[k], ","))) {
        collect_target_element(toks, s, k);
        s = k + 1;
      }
    }
  }

  void collect_target_element(const std::vector<std::size_t>& toks, std::size_t s, std::size_t e) {
    while (s < e && (is_op(toks[s], "*") || is_op(toks[s], "**"))) ++s;
    if (s >= e) return;
    if (e - s == 1) {
      if (is_name(toks[s])) add_name(IdentifierKind::Variable, toks[s]);
      return;
    }
    if (is_op(toks[s], "(") || is_op(toks[s], "[")) {
      const int d = tok(toks[s]).depth;
      for (std::size_t k = s + 1; k < e; ++k) {
        if (tok(toks[k]).depth == d) {
          if (k == e - 1) collect_targets(toks, s + 1, e - 1);
          return;
        }
      }
    }
  }

  void analyze_line(std::size_t li) {
    const auto& line = lines_[li];
    const auto& toks = line.toks;
    std::size_t body_start = 0;
    if (const auto& colon = header_colons_[li]) {
      analyze_header(toks, *colon);
      body_start = *colon + 1;
    }
    // Simple statements separated by ';'.
    std::size_t s = body_start;
    for (std::size_t k = body_start; k <= toks.size(); ++k) {
      if (k == toks.size() || (tok(toks[k]).depth == 0 && is_op(toks[k], ";"))) {
        if (k > s) analyze_statement(toks, s, k);
        s = k + 1;
      }
    }
  }

  void analyze_header(const std::vector<std::size_t>& toks, std::size_t colon) {
    std::size_t k = is_word(toks[0], "async") ? 1 : 0;
    const auto kw = text(toks[k]);
    if (kw == "def") {
      add_name(IdentifierKind::Function, toks[k + 1]);
      if (options_.include_parameters) collect_parameters(toks, k + 2, colon);
      scan_expressions(toks, k + 3, colon, /*skip_paren=*/toks[k + 2]);
    } else if (kw == "class") {
      add_name(IdentifierKind::Class, toks[k + 1]);
      const std::size_t paren = k + 2 < colon ? toks[k + 2] : SIZE_MAX;
      scan_expressions(toks, k + 2, colon, paren);
    } else if (kw == "with") {
      collect_with_targets(toks, k + 1, colon);
      scan_expressions(toks, k, colon, SIZE_MAX);
    } else {
      scan_expressions(toks, k, colon, SIZE_MAX);
    }
  }

  void collect_parameters(const std::vector<std::size_t>& toks, std::size_t open, std::size_t end) {
    const int d = tok(toks[open]).depth + 1;
    bool at_start = true;
    for (std::size_t k = open + 1; k < end; ++k) {
      const auto i = toks[k];
      if (tok(i).depth < d) break;
      if (tok(i).depth != d) continue;
      if (is_op(i, ",")) {
        at_start = true;
        continue;
      }
      if (at_start && (is_op(i, "*") || is_op(i, "**") || is_op(i, "/"))) continue;
      if (at_start && is_name(i)) add_name(IdentifierKind::Variable, i);
      at_start = false;
    }
  }

  void collect_with_targets(const std::vector<std::size_t>& toks, std::size_t b, std::size_t e) {
    const int base = tok(toks[b]).depth;
    for (std::size_t k = b; k < e; ++k) {
      const auto i = toks[k];
      if (!is_word(i, "as")) continue;
      const int d = tok(i).depth;
      if (d != base && d != base + 1) continue;
      std::size_t t = k + 1;
      while (t < e && tok(toks[t]).depth >= d && !(tok(toks[t]).depth == d && is_op(toks[t], ","))) {
        ++t;
      }
      collect_targets(toks, k + 1, t);
    }
  }

  // Expression-level bindings: comprehension/for targets, walrus targets and
  // keyword-argument names at call sites.
  void scan_expressions(const std::vector<std::size_t>& toks, std::size_t b, std::size_t e,
                        std::size_t skip_paren) {
    for (std::size_t k = b; k < e; ++k) {
      const auto i = toks[k];
      if (is_word(i, "for")) {
        const int d = tok(i).depth;
        std::size_t t = k + 1;
        while (t < e && !(tok(toks[t]).depth == d && is_word(toks[t], "in"))) ++t;
        if (t < e) collect_targets(toks, k + 1, t);
      } else if (is_name(i) && k + 1 < e && is_op(toks[k + 1], ":=")) {
        add_name(IdentifierKind::Variable, i);
      } else if (is_name(i) && k + 1 < e && is_op(toks[k + 1], "=") && tok(i).depth > 0) {
        if (is_call_keyword(toks, b, k, skip_paren)) add_name(IdentifierKind::Variable, i);
      }
    }
  }

  bool is_call_keyword(const std::vector<std::size_t>& toks, std::size_t b, std::size_t k,
                       std::size_t skip_paren) const {
    const int d = tok(toks[k]).depth;
    bool in_lambda = false;
    for (std::size_t j = k; j-- > b;) {
      const auto i = toks[j];
      if (tok(i).depth == d && is_word(i, "lambda")) in_lambda = true;
      if (tok(i).depth == d - 1) {
        if (!is_op(i, "(") || i == skip_paren || in_lambda || j == b) return false;
        const auto prev = toks[j - 1];
        if (is_name(prev)) return !is_python_keyword(text(prev));
        return is_op(prev, ")") || is_op(prev, "]");
      }
    }
    return false;
  }

  void analyze_statement(const std::vector<std::size_t>& toks, std::size_t b, std::size_t e) {
    const auto first = toks[b];
    const bool keyword_led = is_name(first) && is_python_keyword(text(first)) &&
                             text(first) != "None" && text(first) != "True" &&
                             text(first) != "False";
    if (!keyword_led) {
      int pending_lambda = 0;
      std::optional<std::size_t> annotation;
      std::optional<std::size_t> augmented;
      std::vector<std::size_t> equals;
      for (std::size_t k = b; k < e; ++k) {
        const auto i = toks[k];
        if (tok(i).depth != 0) continue;
        if (is_word(i, "lambda")) ++pending_lambda;
        if (tok(i).type != PyTokenType::Op) continue;
        const auto op = text(i);
        if (op == ":") {
          if (pending_lambda > 0) {
            --pending_lambda;
          } else if (!annotation && equals.empty() && !augmented) {
            annotation = k;
          }
        } else if (op == "=" && pending_lambda == 0) {
          equals.push_back(k);
        } else if (op.size() >= 2 && op.back() == '=' && op != "==" && op != "<=" && op != ">=" &&
                   op != "!=" && op != ":=" && !augmented && equals.empty()) {
          augmented = k;
        }
      }
      if (annotation) {
        collect_targets(toks, b, *annotation);
      } else if (!equals.empty()) {
        std::size_t s = b;
        for (auto eq : equals) {
          collect_targets(toks, s, eq);
          s = eq + 1;
        }
      } else if (augmented) {
        collect_targets(toks, b, *augmented);
      }
    }
    scan_expressions(toks, b, e, SIZE_MAX);
  }

  std::vector<ExtractedIdentifier> collect() {
    std::vector<ExtractedIdentifier> out;
    auto keep = [&](const std::string& t) {
      return !t.empty() && t.size() >= options_.min_identifier_len;
    };

    // Syntactic names are masked at their first non-attribute occurrence.
    std::unordered_map<std::string, std::size_t> first_occurrence;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!is_name(i)) continue;
      if (i > 0 && is_op(i - 1, ".")) continue;
      first_occurrence.emplace(std::string(text(i)), i);
    }
    for (auto kind : {IdentifierKind::Variable, IdentifierKind::Function, IdentifierKind::Class}) {
      for (const auto& [name, idx] : names_[static_cast<std::size_t>(kind)]) {
        if (!keep(name)) continue;
        const auto& t = tok(first_occurrence.at(name));
        out.push_back({kind, name, t.begin, t.end});
      }
    }

    std::set<std::string> seen_strings, seen_docs, seen_comments;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& t = tok(i);
      if (t.type != PyTokenType::String) continue;
      const auto inner = src_.substr(t.inner_begin(), t.inner_end() - t.inner_begin());
      if (docstring_tokens_.count(i)) {
        auto cleaned = clean_docstring(inner);
        if (keep(cleaned) && seen_docs.insert(cleaned).second) {
          out.push_back({IdentifierKind::Docstring, std::move(cleaned), t.begin, t.end});
        }
      } else {
        std::string s(inner);
        if (keep(s) && seen_strings.insert(s).second) {
          out.push_back({IdentifierKind::String, std::move(s), t.inner_begin(), t.inner_end()});
        }
      }
    }

    collect_comments(out, seen_comments, keep);

    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.begin != b.begin) return a.begin < b.begin;
      return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return out;
  }

  template <typename Keep>
  void collect_comments(std::vector<ExtractedIdentifier>& out, std::set<std::string>& seen,
                        const Keep& keep) {
    struct Group {
      std::size_t begin, end, last_line;
      std::string text;
      bool own_line;
    };
    std::optional<Group> group;
    auto flush = [&] {
      if (group && keep(group->text) && seen.insert(group->text).second) {
        out.push_back({IdentifierKind::Comment, group->text, group->begin, group->end});
      }
      group.reset();
    };
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& t = tok(i);
      if (t.type != PyTokenType::Comment) continue;
      const bool own_line = i == 0 || tokens_[i - 1].type == PyTokenType::NL ||
                            tokens_[i - 1].type == PyTokenType::Newline ||
                            tokens_[i - 1].type == PyTokenType::Indent ||
                            tokens_[i - 1].type == PyTokenType::Dedent;
      const auto body = trim(src_.substr(t.begin + 1, t.end - t.begin - 1));
      if (group && own_line && group->own_line && t.line == group->last_line + 1) {
        if (!body.empty()) {
          if (!group->text.empty()) group->text.push_back(' ');
          group->text += body;
        }
        group->end = t.end;
        group->last_line = t.line;
        continue;
      }
      flush();
      group = Group{t.begin, t.end, t.line, body, own_line};
    }
    flush();
  }

  std::string_view src_;
  ExtractionOptions options_;
  Tokens tokens_;
  std::vector<LogicalLine> lines_;
  std::vector<std::optional<std::size_t>> header_colons_;
  bool validated_ = false;
  std::set<std::size_t> docstring_tokens_;
  // Per kind: name -> first binding token (map keeps first insertion only).
  std::array<std::map<std::string, std::size_t>, 6> names_;
};

}  // namespace

std::string clean_docstring(std::string_view raw) {
  auto lines = split_lines(raw);
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  std::size_t margin = SIZE_MAX;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const auto content = l.find_first_not_of(" \t");
    if (content != std::string::npos) margin = std::min(margin, content);
  }
  if (!lines.empty()) {
    const auto s = lines[0].find_first_not_of(" \t");
    lines[0] = s == std::string::npos ? std::string() : lines[0].substr(s);
  }
  if (margin != SIZE_MAX) {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      lines[i] = lines[i].size() > margin ? lines[i].substr(margin) : trim(lines[i]);
    }
  }
  auto blank = [](const std::string& l) { return l.find_first_not_of(" \t") == std::string::npos; };
  std::size_t b = 0, e = lines.size();
  while (b < e && blank(lines[b])) ++b;
  while (e > b && blank(lines[e - 1])) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

std::vector<ExtractedIdentifier> parse_script(const ScriptRecord& record,
                                              const ExtractionOptions& options) {
  return ScriptParser(record.source, options).extract();
}

std::vector<TopLevelBlock> find_top_level_blocks(std::string_view source) {
  return ScriptParser(source, {}).top_level_blocks();
}

std::vector<MaskInstance> make_mask_instances(const ScriptRecord& record,
                                              const std::vector<ExtractedIdentifier>& identifiers) {
  std::vector<MaskInstance> out;
  out.reserve(identifiers.size());
  const std::string_view src = record.source;
  for (const auto& id : identifiers) {
    if (id.text.empty()) throw std::invalid_argument("empty mask target");
    if (id.begin >= id.end || id.end > src.size()) {
      throw std::out_of_range("identifier span outside source for " + record.script_id);
    }
    out.push_back(MaskInstance{record.script_id, id.kind, id.text,
                               std::string(src.substr(0, id.begin)),
                               std::string(src.substr(id.end))});
  }
  return out;
}

namespace {
bool is_continuation_byte(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }
}  // namespace

MaskInstance apply_context_budget(const MaskInstance& instance, std::size_t max_chars) {
  if (max_chars < kMinContextBudget) {
    throw std::invalid_argument("context budget must be at least " +
                                std::to_string(kMinContextBudget));
  }
  const std::size_t p = instance.prefix.size(), s = instance.suffix.size();
  if (p + s <= max_chars) return instance;
  std::size_t keep_prefix = static_cast<std::size_t>(
      static_cast<unsigned __int128>(max_chars) * p / (p + s));
  std::size_t keep_suffix = max_chars - keep_prefix;
  if (keep_suffix > s) {
    keep_prefix += keep_suffix - s;
    keep_suffix = s;
  }
  if (keep_prefix > p) {
    keep_suffix += keep_prefix - p;
    keep_prefix = p;
  }
  MaskInstance out = instance;
  std::size_t cut = p - keep_prefix;
  while (cut < p && is_continuation_byte(instance.prefix[cut])) ++cut;
  out.prefix = instance.prefix.substr(cut);
  std::size_t end = keep_suffix;
  while (end > 0 && end < s && is_continuation_byte(instance.suffix[end])) --end;
  out.suffix = instance.suffix.substr(0, end);
  return out;
}

void export_finetune_records(const std::vector<MaskInstance>& instances, std::ostream& out) {
  for (const auto& inst : instances) {
    nlohmann::ordered_json j;
    j["prefix"] = inst.prefix;
    j["infill"] = inst.target;
    j["suffix"] = inst.suffix;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing fine-tuning records");
}

std::vector<FinetuneRecord> import_finetune_records(std::istream& in) {
  std::vector<FinetuneRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("prefix").get<std::string>(), j.at("infill").get<std::string>(),
                   j.at("suffix").get<std::string>()});
  }
  return out;
}

}  // namespace fimprobe
