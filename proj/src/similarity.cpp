#include "fimprobe/similarity.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "fimprobe/util.hpp"

namespace fimprobe {

SimilarityThreshold::SimilarityThreshold(int percent) : value_(percent) {
  if (percent < 0 || percent > 100) {
    throw std::invalid_argument("similarity threshold must be in [0, 100], got " +
                                std::to_string(percent));
  }
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Single row over the shorter string.
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row[b.size()];
}

double similarity_score(std::string_view a, std::string_view b) {
  const std::string na = collapse_whitespace(a);
  const std::string nb = collapse_whitespace(b);
  const std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 100.0;
  const double d = static_cast<double>(levenshtein(na, nb));
  return 100.0 * (1.0 - d / static_cast<double>(longest));
}

bool is_hit(IdentifierKind kind, std::string_view output, std::string_view target,
            SimilarityThreshold threshold) {
  if (is_syntactic(kind)) return trim(output) == target;
  return similarity_score(output, target) >= static_cast<double>(threshold.value());
}

}  // namespace fimprobe
