#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fimprobe/types.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

// Everyday programming words; shared by the synthetic corpus and the mock
// model so that guesses for unseen code collide with real names at a
// plausible rate.
const std::vector<std::string>& common_words();

bool is_python_builtin(std::string_view name);

// snake_case for variables/functions, CamelCase for classes; one or two words.
std::string make_identifier(Rng& rng, IdentifierKind kind);

// Space-separated words, lower case.
std::string make_phrase(Rng& rng, std::size_t min_words, std::size_t max_words);

// Semantic-kind text of roughly the length the corpus generator produces.
std::string make_semantic_text(Rng& rng, IdentifierKind kind);

}  // namespace fimprobe
