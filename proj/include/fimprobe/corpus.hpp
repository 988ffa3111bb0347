#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fimprobe/types.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

struct SyntheticCorpusOptions {
  std::size_t n_projects = 40;
  std::size_t min_scripts = 10;
  std::size_t max_scripts = 50;
  double trained_fraction = 0.5;  // of projects
  std::uint64_t seed = 0;
};

// Valid, varied Python scripts grouped into projects. Labels are per project:
// every script of a trained project is trained.
std::vector<ScriptRecord> generate_synthetic_corpus(const SyntheticCorpusOptions& options);

std::string generate_python_script(Rng& rng);

// A directory tree (first-level directory = project, script id = path
// relative to the root) or a TSV manifest with columns
// script_id, project_id, path[, trained_on]; paths relative to the manifest.
// Non-Python files in a tree are skipped and reported in `warnings`.
std::vector<ScriptRecord> load_corpus(const std::filesystem::path& path,
                                      std::vector<std::string>* warnings = nullptr);

// Writes every script under `root` plus root/manifest.tsv with labels.
void write_corpus(const std::vector<ScriptRecord>& records, const std::filesystem::path& root);

}  // namespace fimprobe
