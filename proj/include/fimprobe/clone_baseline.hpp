#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fimprobe/inference.hpp"
#include "fimprobe/types.hpp"

namespace fimprobe {

struct CodeUnit {
  enum class Kind { Function, Class };
  std::string script_id;
  Kind kind = Kind::Function;
  std::string name;
  std::vector<std::string> body_lines;
};

class TooShort : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
class EmptyAfterFilter : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Top-level functions and classes of a script. Throws SyntaxError.
std::vector<CodeUnit> extract_code_units(const ScriptRecord& record);

// First ceil(n/2) lines and the rest, each newline-joined.
std::pair<std::string, std::string> split_half(const CodeUnit& unit);

// Identifiers, numbers, whole string literals and operators; whitespace and
// comments are dropped, unknown bytes become one-character tokens.
std::vector<std::string> tokenize_code(std::string_view text);

// Tokens covered by greedy tiling, one longest unmarked match at a time; ties
// go to the earliest position in `a`, then in `b`. Order-sensitive.
std::size_t gst_coverage(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b,
                         std::size_t min_match_len);

// 100 * 2 * covered / (|a| + |b|), 100 when both are empty. The sequences are
// put in a canonical (lexicographic) order first, so the score is symmetric.
double greedy_string_tiling_ids(std::span<const std::uint32_t> a,
                                std::span<const std::uint32_t> b, std::size_t min_match_len);
double greedy_string_tiling(const std::vector<std::string>& a, const std::vector<std::string>& b,
                            std::size_t min_match_len);

inline constexpr double kDefaultCloneThreshold = 70.0;
inline constexpr std::size_t kDefaultMinMatchLen = 9;

struct CloneComparison {
  std::string generated_id;
  std::string corpus_script_id;
  double similarity_percent = 0.0;
  bool is_clone = false;
};

// Corpus scripts tokenized once and shared across many comparisons.
class TokenizedCorpus {
 public:
  explicit TokenizedCorpus(const std::vector<ScriptRecord>& scripts);

  std::size_t size() const { return ids_.size(); }
  const std::string& script_id(std::size_t i) const { return script_ids_[i]; }
  double similarity(const std::vector<std::string>& tokens, std::size_t i,
                    std::size_t min_match_len) const;

 private:
  std::vector<std::uint32_t> intern(const std::vector<std::string>& tokens) const;

  std::vector<std::string> script_ids_;
  std::vector<std::vector<std::string>> tokens_;
  std::vector<std::vector<std::uint32_t>> ids_;
  std::vector<std::pair<std::string, std::uint32_t>> vocab_;  // sorted by token
};

struct BaselineOutcome {
  bool hit = false;
  std::string completion;
  std::vector<CloneComparison> comparisons;
};

BaselineOutcome baseline_detect(const CodeUnit& unit, CompletionEndpoint& endpoint,
                                const ModelEndpointConfig& config, const TokenizedCorpus& corpus,
                                double clone_threshold, std::size_t min_match_len);

BaselineOutcome baseline_detect(const CodeUnit& unit, CompletionEndpoint& endpoint,
                                const ModelEndpointConfig& config,
                                const std::vector<ScriptRecord>& corpus_sample,
                                double clone_threshold, std::size_t min_match_len);

// Keeps projects with 10..50 scripts, then samples ceil(fraction * n) of them.
std::vector<ScriptRecord> sample_corpus(const std::vector<ScriptRecord>& scripts, double fraction,
                                        std::uint64_t seed);

inline constexpr std::size_t kMinProjectScripts = 10;
inline constexpr std::size_t kMaxProjectScripts = 50;

void write_comparisons_jsonl(const std::vector<CloneComparison>& rows, std::ostream& out);

}  // namespace fimprobe
