#include "fimprobe/clone_baseline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fimprobe/extraction.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

std::vector<CodeUnit> extract_code_units(const ScriptRecord& record) {
  const auto lines = split_lines(record.source);
  std::vector<CodeUnit> units;
  for (const auto& block : find_top_level_blocks(record.source)) {
    CodeUnit unit;
    unit.script_id = record.script_id;
    unit.kind = block.is_class ? CodeUnit::Kind::Class : CodeUnit::Kind::Function;
    unit.name = block.name;
    for (std::size_t l = block.first_line; l <= block.last_line && l <= lines.size(); ++l) {
      std::string line = lines[l - 1];
      if (!line.empty() && line.back() == '\r') line.pop_back();
      unit.body_lines.push_back(std::move(line));
    }
    if (!unit.body_lines.empty()) units.push_back(std::move(unit));
  }
  return units;
}

namespace {
std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out.push_back('\n');
    out += lines[i];
  }
  return out;
}
}  // namespace

std::pair<std::string, std::string> split_half(const CodeUnit& unit) {
  const auto n = unit.body_lines.size();
  if (n < 2) throw TooShort("code unit '" + unit.name + "' has fewer than two lines");
  const auto head = (n + 1) / 2;
  return {join_lines(unit.body_lines, 0, head), join_lines(unit.body_lines, head, n)};
}

std::vector<std::string> tokenize_code(std::string_view text) {
  static const std::array<std::string_view, 24> kOps3 = {
      "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "<<", ">>", "<=", ">=",
      "==",  "!=",  "+=",  "-=",  "*=",  "/=", "%=", "&=", "|=", "^=", ":=", "@="};
  std::vector<std::string> out;
  const auto is_ident = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  };
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < n && text[i] != '\n') ++i;
      continue;
    }
    // String literal, optionally with a short letter prefix.
    std::size_t q = i;
    while (q < n && q - i < 2 && std::isalpha(static_cast<unsigned char>(text[q]))) ++q;
    if (q < n && (text[q] == '"' || text[q] == '\'') &&
        (q == i || std::string_view("rRbBuUfF").find(text[i]) != std::string_view::npos)) {
      const char quote = text[q];
      const bool triple = q + 2 < n && text[q + 1] == quote && text[q + 2] == quote;
      std::size_t j = q + (triple ? 3 : 1);
      while (j < n) {
        if (text[j] == '\\') {
          j += 2;
          continue;
        }
        if (triple) {
          if (text[j] == quote && j + 2 < n && text[j + 1] == quote && text[j + 2] == quote) {
            j += 3;
            break;
          }
        } else if (text[j] == quote) {
          ++j;
          break;
        } else if (text[j] == '\n') {
          break;
        }
        ++j;
      }
      j = std::min(j, n);
      out.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      std::size_t j = i + 1;
      while (j < n && (is_ident(text[j]) || text[j] == '.')) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i + 1;
      while (j < n && is_ident(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    bool matched = false;
    for (auto op : kOps3) {
      if (text.substr(i, op.size()) == op) {
        out.emplace_back(op);
        i += op.size();
        matched = true;
        break;
      }
    }
    if (!matched) out.emplace_back(1, text[i++]);
  }
  return out;
}

namespace {

bool share_kgram(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b,
                 std::size_t k) {
  auto hash = [](std::span<const std::uint32_t> s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : s) h = splitmix64(h ^ v);
    return h;
  };
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(a.size());
  for (std::size_t i = 0; i + k <= a.size(); ++i) seen.insert(hash(a.subspan(i, k)));
  for (std::size_t j = 0; j + k <= b.size(); ++j) {
    if (seen.count(hash(b.subspan(j, k)))) return true;
  }
  return false;
}

}  // namespace

std::size_t gst_coverage(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b,
                         std::size_t min_match_len) {
  if (min_match_len < 1) throw std::invalid_argument("min_match_len must be >= 1");
  const std::size_t n = a.size(), m = b.size();
  if (n < min_match_len || m < min_match_len) return 0;
  // A qualifying tile needs a shared k-gram; skip the quadratic search
  // when there is none (hash collisions only cost time).
  if (n * m > 4096 && min_match_len > 1 && !share_kgram(a, b, min_match_len)) return 0;

  std::vector<char> mark_a(n, 0), mark_b(m, 0);
  std::vector<std::uint32_t> next_row(m + 1), row(m + 1);
  std::size_t covered = 0;
  while (true) {
    // run(i, j) = length of the unmarked common run starting at (i, j),
    // computed from the bottom-right so ties settle on the smallest (i, j).
    std::size_t best_len = 0, best_i = 0, best_j = 0;
    std::fill(next_row.begin(), next_row.end(), 0);
    for (std::size_t ii = n; ii-- > 0;) {
      row[m] = 0;
      for (std::size_t jj = m; jj-- > 0;) {
        const bool ok = !mark_a[ii] && !mark_b[jj] && a[ii] == b[jj];
        const std::uint32_t len = ok ? next_row[jj + 1] + 1 : 0;
        row[jj] = len;
        if (len > 0 && len >= best_len) {
          best_len = len;
          best_i = ii;
          best_j = jj;
        }
      }
      std::swap(row, next_row);
    }
    if (best_len < min_match_len) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      mark_a[best_i + k] = 1;
      mark_b[best_j + k] = 1;
    }
    covered += best_len;
  }
  return covered;
}

namespace {
double tiling_score(std::size_t covered, std::size_t n, std::size_t m) {
  if (n + m == 0) return 100.0;
  return 100.0 * static_cast<double>(2 * covered) / static_cast<double>(n + m);
}
}  // namespace

double greedy_string_tiling_ids(std::span<const std::uint32_t> a,
                                std::span<const std::uint32_t> b, std::size_t min_match_len) {
  if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) std::swap(a, b);
  return tiling_score(gst_coverage(a, b, min_match_len), a.size(), b.size());
}

double greedy_string_tiling(const std::vector<std::string>& a, const std::vector<std::string>& b,
                            std::size_t min_match_len) {
  std::map<std::string_view, std::uint32_t> vocab;
  for (const auto& t : a) vocab.emplace(t, 0);
  for (const auto& t : b) vocab.emplace(t, 0);
  std::uint32_t next = 0;
  for (auto& [tok, id] : vocab) id = next++;  // ids follow token order
  std::vector<std::uint32_t> ia, ib;
  ia.reserve(a.size());
  ib.reserve(b.size());
  for (const auto& t : a) ia.push_back(vocab[t]);
  for (const auto& t : b) ib.push_back(vocab[t]);
  return greedy_string_tiling_ids(ia, ib, min_match_len);
}

TokenizedCorpus::TokenizedCorpus(const std::vector<ScriptRecord>& scripts) {
  std::map<std::string, std::uint32_t> vocab;
  for (const auto& s : scripts) {
    script_ids_.push_back(s.script_id);
    tokens_.push_back(tokenize_code(s.source));
    for (const auto& t : tokens_.back()) vocab.emplace(t, 0);
  }
  for (auto& [tok, id] : vocab) {
    id = static_cast<std::uint32_t>(vocab_.size());
    vocab_.emplace_back(tok, id);
  }
  for (const auto& toks : tokens_) ids_.push_back(intern(toks));
}

std::vector<std::uint32_t> TokenizedCorpus::intern(const std::vector<std::string>& tokens) const {
  // Unknown tokens get ids past the corpus vocabulary; they can never match a
  // corpus token, so their exact value only matters for distinctness.
  std::vector<std::uint32_t> out;
  out.reserve(tokens.size());
  std::map<std::string_view, std::uint32_t> extra;
  for (const auto& t : tokens) {
    auto it = std::lower_bound(vocab_.begin(), vocab_.end(), t,
                               [](const auto& e, const std::string& v) { return e.first < v; });
    if (it != vocab_.end() && it->first == t) {
      out.push_back(it->second);
    } else {
      auto [e, _] = extra.emplace(t, static_cast<std::uint32_t>(vocab_.size() + extra.size()));
      out.push_back(e->second);
    }
  }
  return out;
}

double TokenizedCorpus::similarity(const std::vector<std::string>& tokens, std::size_t i,
                                   std::size_t min_match_len) const {
  const auto ids = intern(tokens);
  std::span<const std::uint32_t> a = ids, b = ids_[i];
  if (std::lexicographical_compare(tokens_[i].begin(), tokens_[i].end(), tokens.begin(),
                                   tokens.end())) {
    std::swap(a, b);
  }
  return tiling_score(gst_coverage(a, b, min_match_len), a.size(), b.size());
}

BaselineOutcome baseline_detect(const CodeUnit& unit, CompletionEndpoint& endpoint,
                                const ModelEndpointConfig& config, const TokenizedCorpus& corpus,
                                double clone_threshold, std::size_t min_match_len) {
  if (corpus.size() == 0) throw std::invalid_argument("corpus sample is empty");
  if (!(clone_threshold >= 0.0 && clone_threshold <= 100.0)) {
    throw std::invalid_argument("clone threshold must be in [0, 100]");
  }
  const auto [prefix, true_suffix] = split_half(unit);
  BaselineOutcome out;
  out.completion = generate_completion(endpoint, config, prefix);
  const auto tokens = tokenize_code(out.completion);
  const auto generated_id = unit.script_id + "::" + unit.name;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CloneComparison c;
    c.generated_id = generated_id;
    c.corpus_script_id = corpus.script_id(i);
    c.similarity_percent = corpus.similarity(tokens, i, min_match_len);
    c.is_clone = c.similarity_percent >= clone_threshold;
    out.hit = out.hit || c.is_clone;
    out.comparisons.push_back(std::move(c));
  }
  return out;
}

BaselineOutcome baseline_detect(const CodeUnit& unit, CompletionEndpoint& endpoint,
                                const ModelEndpointConfig& config,
                                const std::vector<ScriptRecord>& corpus_sample,
                                double clone_threshold, std::size_t min_match_len) {
  return baseline_detect(unit, endpoint, config, TokenizedCorpus(corpus_sample), clone_threshold,
                         min_match_len);
}

std::vector<ScriptRecord> sample_corpus(const std::vector<ScriptRecord>& scripts, double fraction,
                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sample fraction must be in (0, 1]");
  }
  std::map<std::string, std::size_t> sizes;
  for (const auto& s : scripts) ++sizes[s.project_id];
  std::vector<std::string> eligible;
  for (const auto& [project, n] : sizes) {
    if (n >= kMinProjectScripts && n <= kMaxProjectScripts) eligible.push_back(project);
  }
  if (eligible.empty()) {
    throw EmptyAfterFilter("no project has between 10 and 50 scripts");
  }
  const auto k = std::min(
      eligible.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(eligible.size()) - 1e-9)));
  Rng rng(derive_seed(seed, "sample"));
  rng.shuffle(eligible);
  eligible.resize(std::max<std::size_t>(k, 1));
  std::sort(eligible.begin(), eligible.end());
  std::vector<ScriptRecord> out;
  for (const auto& s : scripts) {
    if (std::binary_search(eligible.begin(), eligible.end(), s.project_id)) out.push_back(s);
  }
  return out;
}

void write_comparisons_jsonl(const std::vector<CloneComparison>& rows, std::ostream& out) {
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["generated_id"] = r.generated_id;
    j["corpus_script_id"] = r.corpus_script_id;
    j["similarity_percent"] = r.similarity_percent;
    j["is_clone"] = r.is_clone;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
}

}  // namespace fimprobe
