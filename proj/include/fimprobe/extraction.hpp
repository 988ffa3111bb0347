#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fimprobe/python_lexer.hpp"
#include "fimprobe/types.hpp"

namespace fimprobe {

struct ExtractionOptions {
  // Elements whose text is shorter than this are skipped. 0 keeps everything.
  std::size_t min_identifier_len = 0;
  // Also harvest function parameters as Variables.
  bool include_parameters = false;
};

// One unique element of a script. `begin`/`end` delimit the byte span that is
// removed when the element is masked. For syntactic names and String literals
// the span holds exactly `text`. For Comment the span runs from the first '#'
// to the end of the (possibly merged) comment, and `text` is the trimmed
// comment body. For Docstring the span is the whole literal including prefix
// and quotes, and `text` is the cleaned inner text.
struct ExtractedIdentifier {
  IdentifierKind kind = IdentifierKind::Variable;
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ExtractedIdentifier&) const = default;
};

// Harvests every unique element of the six kinds, ordered by first occurrence.
// Throws SyntaxError when the script cannot be parsed.
std::vector<ExtractedIdentifier> parse_script(const ScriptRecord& record,
                                              const ExtractionOptions& options = {});

std::vector<MaskInstance> make_mask_instances(const ScriptRecord& record,
                                              const std::vector<ExtractedIdentifier>& identifiers);

inline constexpr std::size_t kDefaultContextBudget = 6000;
inline constexpr std::size_t kMinContextBudget = 64;

// Trims prefix (from its start) and suffix (from its end) so that their
// combined length fits `max_chars`, splitting the budget proportionally to the
// original lengths. Cuts never split a UTF-8 sequence.
MaskInstance apply_context_budget(const MaskInstance& instance, std::size_t max_chars);

struct FinetuneRecord {
  std::string prefix;
  std::string infill;
  std::string suffix;

  bool operator==(const FinetuneRecord&) const = default;
};

// One JSON object per line with keys "prefix", "infill", "suffix".
void export_finetune_records(const std::vector<MaskInstance>& instances, std::ostream& out);
std::vector<FinetuneRecord> import_finetune_records(std::istream& in);

// Python's inspect.cleandoc.
std::string clean_docstring(std::string_view raw);

// A top-level `def` or `class` block, as 1-based inclusive physical lines.
struct TopLevelBlock {
  bool is_class = false;
  std::string name;
  std::size_t first_line = 0;
  std::size_t last_line = 0;
};

std::vector<TopLevelBlock> find_top_level_blocks(std::string_view source);

}  // namespace fimprobe
