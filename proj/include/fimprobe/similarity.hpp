#pragma once

#include <cstddef>
#include <string_view>

#include "fimprobe/types.hpp"

namespace fimprobe {

// Minimum-similarity percentage a semantic output must reach to count as a hit.
class SimilarityThreshold {
 public:
  static constexpr int kDefault = 20;

  constexpr SimilarityThreshold() = default;
  explicit SimilarityThreshold(int percent);

  constexpr int value() const { return value_; }

 private:
  int value_ = kDefault;
};

// Character-level (byte) edit distance with unit costs.
std::size_t levenshtein(std::string_view a, std::string_view b);

// 100 * (1 - levenshtein / max(|a|, |b|)) after whitespace normalization;
// 100 when both normalized strings are empty.
double similarity_score(std::string_view a, std::string_view b);

// Syntactic kinds: exact match against the trimmed output.
// Semantic kinds: similarity_score(output, target) >= threshold.
bool is_hit(IdentifierKind kind, std::string_view output, std::string_view target,
            SimilarityThreshold threshold);

}  // namespace fimprobe
