#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fimprobe {

inline constexpr std::string_view kToolVersion = "0.1.0";

// The six element classes harvested from a script. The first three form the
// syntactic group (matched exactly), the last three the semantic group
// (matched by edit-distance similarity).
enum class IdentifierKind { Variable, Function, Class, String, Comment, Docstring };

inline constexpr std::array<IdentifierKind, 6> kAllKinds = {
    IdentifierKind::Variable, IdentifierKind::Function, IdentifierKind::Class,
    IdentifierKind::String,   IdentifierKind::Comment,  IdentifierKind::Docstring};

enum class IdentifierGroup { Syntactic, Semantic };

constexpr IdentifierGroup group_of(IdentifierKind kind) {
  switch (kind) {
    case IdentifierKind::Variable:
    case IdentifierKind::Function:
    case IdentifierKind::Class:
      return IdentifierGroup::Syntactic;
    case IdentifierKind::String:
    case IdentifierKind::Comment:
    case IdentifierKind::Docstring:
      return IdentifierGroup::Semantic;
  }
  return IdentifierGroup::Semantic;
}

constexpr bool is_syntactic(IdentifierKind kind) {
  return group_of(kind) == IdentifierGroup::Syntactic;
}

std::string_view to_string(IdentifierKind kind);
IdentifierKind parse_kind(std::string_view name);  // throws std::invalid_argument

// Index into feature rows / hit vectors. Order follows the published table
// schema: class, function, variable, string, comment, docstring.
constexpr std::size_t feature_index(IdentifierKind kind) {
  switch (kind) {
    case IdentifierKind::Class: return 0;
    case IdentifierKind::Function: return 1;
    case IdentifierKind::Variable: return 2;
    case IdentifierKind::String: return 3;
    case IdentifierKind::Comment: return 4;
    case IdentifierKind::Docstring: return 5;
  }
  return 0;
}

inline constexpr std::array<IdentifierKind, 6> kFeatureOrder = {
    IdentifierKind::Class,  IdentifierKind::Function, IdentifierKind::Variable,
    IdentifierKind::String, IdentifierKind::Comment,  IdentifierKind::Docstring};

enum class Language { Python };

struct ScriptRecord {
  std::string script_id;
  std::string project_id;
  std::string relative_path;
  std::string source;
  Language language = Language::Python;
  std::optional<bool> trained_on;

  bool operator==(const ScriptRecord&) const = default;
};

struct MaskInstance {
  std::string script_id;
  IdentifierKind kind = IdentifierKind::Variable;
  std::string target;
  std::string prefix;
  std::string suffix;

  bool operator==(const MaskInstance&) const = default;
};

// A model's answer for one MaskInstance. `error` is set when the request
// failed after all retries; such entries carry no output and are excluded from
// hit accounting.
struct ModelPrediction {
  std::string script_id;
  IdentifierKind kind = IdentifierKind::Variable;
  std::string target;
  std::string output;
  double latency_ms = 0.0;
  std::optional<std::string> error;

  bool answered() const { return !error.has_value(); }
  bool operator==(const ModelPrediction&) const = default;
};

}  // namespace fimprobe
