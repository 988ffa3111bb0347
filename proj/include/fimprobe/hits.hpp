#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fimprobe/similarity.hpp"
#include "fimprobe/types.hpp"

namespace fimprobe {

struct KindCount {
  std::size_t hits = 0;
  std::size_t total = 0;  // answered checks

  bool operator==(const KindCount&) const = default;
};

// Per-script normalized hit rates; `rates` and `counts` are indexed by
// feature_index(kind).
struct HitVector {
  std::string script_id;
  std::string project_id;
  std::array<double, 6> rates{};
  std::array<KindCount, 6> counts{};
  std::optional<bool> trained_on;

  double rate(IdentifierKind kind) const { return rates[feature_index(kind)]; }
  const KindCount& count(IdentifierKind kind) const { return counts[feature_index(kind)]; }

  bool operator==(const HitVector&) const = default;
};

struct ScriptInfo {
  std::string project_id;
  std::optional<bool> trained_on;
};
using ScriptIndex = std::map<std::string, ScriptInfo>;

ScriptIndex make_script_index(const std::vector<ScriptRecord>& records);

// Falls back to the first path component of the script id.
std::string project_of(const std::string& script_id, const ScriptIndex* index);

struct HitEvent {
  std::string script_id;
  IdentifierKind kind = IdentifierKind::Variable;
  bool hit = false;

  bool operator==(const HitEvent&) const = default;
};

// Scores every answered prediction; error entries are dropped.
std::vector<HitEvent> score_predictions(const std::vector<ModelPrediction>& predictions,
                                        SimilarityThreshold threshold);

// Groups events by script (output sorted by script id) and normalizes.
std::vector<HitVector> accumulate_events(const std::vector<HitEvent>& events,
                                         const ScriptIndex* index = nullptr);

std::vector<HitVector> accumulate_hits(const std::vector<ModelPrediction>& predictions,
                                       SimilarityThreshold threshold,
                                       const ScriptIndex* index = nullptr);

enum class NoiseTarget { Syntactic, Semantic, Combined };

struct NoiseSpec {
  NoiseTarget target = NoiseTarget::Combined;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

std::string_view to_string(NoiseTarget target);
NoiseTarget parse_noise_target(std::string_view name);

// Suppresses each in-group hit independently with probability spec.ratio.
std::vector<HitEvent> inject_noise(const std::vector<HitEvent>& events, const NoiseSpec& spec);

struct MistakeRow {
  IdentifierKind kind = IdentifierKind::Variable;
  bool trained_on = false;
  std::size_t missed = 0;
  std::size_t contained = 0;
  double percent = 0.0;  // contained / missed * 100, 0 when nothing was missed
};

// Splits on anything that is not [A-Za-z0-9_].
std::vector<std::string> lexeme_tokens(std::string_view text);

// For every missed syntactic prediction, checks whether the target survives
// frequency filtration and appears among the output's retained tokens. Rows
// are emitted for each syntactic kind x label present in the input.
std::vector<MistakeRow> mistake_analysis(const std::vector<ModelPrediction>& predictions,
                                         const ScriptIndex& labels, double filtration_threshold);

inline constexpr const char* kFeatureCsvHeader =
    "script_name,class_hits,function_hits,variable_hits,string_hits,comment_hits,docstring_hits,"
    "trained_on";

void write_feature_csv(const std::vector<HitVector>& rows, std::ostream& out);
void write_feature_jsonl(const std::vector<HitVector>& rows, std::ostream& out);
std::vector<HitVector> read_feature_csv(std::istream& in);
std::vector<HitVector> read_feature_jsonl(std::istream& in);

std::string format_real(double value);

}  // namespace fimprobe
