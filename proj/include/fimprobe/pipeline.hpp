#pragma once

#include <cstdint>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fimprobe/classification.hpp"
#include "fimprobe/clone_baseline.hpp"
#include "fimprobe/corpus.hpp"
#include "fimprobe/extraction.hpp"
#include "fimprobe/hits.hpp"
#include "fimprobe/inference.hpp"

namespace fimprobe {

enum ExitCode : int { kExitOk = 0, kExitFatal = 1, kExitPartial = 2 };

struct Seeds {
  std::uint64_t split = 11;
  std::uint64_t train = 23;
  std::uint64_t noise = 37;
  std::uint64_t sample = 41;
  std::uint64_t mock = 53;
};

struct RunConfig {
  std::string corpus;  // directory tree or TSV manifest
  std::string output_dir = "fimprobe_out";
  std::string endpoint_kind = "mock";  // mock | http | echo
  ModelEndpointConfig endpoint;
  double memorization_rate = 0.9;
  bool paraphrase = false;
  int threshold = SimilarityThreshold::kDefault;
  RepoCriterion repo_criterion = RepoCriterion::fraction(0.4);
  std::optional<NoiseSpec> noise;  // seed taken from seeds.noise
  ParamGrid grid;
  double test_fraction = kDefaultTestFraction;
  std::size_t context_budget = kDefaultContextBudget;
  ExtractionOptions extraction;
  double clone_threshold = kDefaultCloneThreshold;
  std::size_t min_match_len = kDefaultMinMatchLen;
  double sample_fraction = 0.05;
  int completion_tokens = kDefaultCompletionTokens;
  std::vector<double> sensitivity_ratios{0.1, 0.5, 0.9};
  std::vector<int> sensitivity_thresholds{20, 40, 60, 80};
  std::vector<NoiseTarget> sensitivity_targets{NoiseTarget::Syntactic, NoiseTarget::Semantic,
                                               NoiseTarget::Combined};
  Seeds seeds;
};

// Keys mirror the field names; unknown keys are rejected. The auth token may
// also come from the FIMPROBE_AUTH_TOKEN environment variable.
void apply_config_json(RunConfig& config, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);  // never includes the token
void check_paths(const RunConfig& config);

std::string config_hash(const RunConfig& config);
nlohmann::ordered_json provenance(const RunConfig& config);
// For CSV/JSONL artifacts: <file>.provenance.json next to the file.
void write_provenance_sidecar(const std::filesystem::path& artifact, const RunConfig& config);

// --- in-memory stages -----------------------------------------------------

struct ScriptFailure {
  std::string script_id;
  std::string message;
  std::size_t line = 0;
};

struct ExtractionOutcome {
  std::vector<MaskInstance> instances;
  std::map<std::string, std::array<std::size_t, 6>> counts;  // per script, feature order
  std::vector<ScriptFailure> failures;
};

ExtractionOutcome extract_corpus(const std::vector<ScriptRecord>& corpus,
                                 const ExtractionOptions& options, std::size_t context_budget);

// Scores predictions, optionally suppresses hits, and accumulates per script.
std::vector<HitVector> hit_vectors(const std::vector<ModelPrediction>& predictions,
                                   SimilarityThreshold threshold, const ScriptIndex& index,
                                   const std::optional<NoiseSpec>& noise);

std::vector<RepoCriterion> standard_repo_criteria();  // single, 0.4, 0.6

struct RepoEvaluation {
  RepoCriterion criterion;
  EvalReport report;
};

struct Evaluation {
  EvalReport file_level;
  std::vector<RepoEvaluation> repository_level;
};

// A repository's ground truth is positive when any of its scripts is.
Evaluation evaluate_model(const ForestModel& model, const std::vector<FeatureRow>& rows,
                          const std::vector<RepoCriterion>& criteria);

struct Experiment {
  DatasetSplit split;
  GridResult grid;
  Evaluation evaluation;
};

Experiment run_experiment(const std::vector<HitVector>& hits, double test_fraction,
                          const ParamGrid& grid, const Seeds& seeds);

struct BaselineScriptResult {
  std::string script_id;
  std::string project_id;
  bool hit = false;
  bool label = false;
  std::size_t units = 0;
  std::size_t skipped_units = 0;
};

struct BaselineRun {
  std::size_t sampled_projects = 0;
  std::size_t sampled_scripts = 0;
  std::vector<BaselineScriptResult> scripts;
  std::vector<CloneComparison> comparisons;  // only kept when requested
  std::vector<ScriptFailure> failures;
  EvalReport file_level;
  std::vector<RepoEvaluation> repository_level;
};

// Runs the clone baseline for every labeled script in `targets`.
BaselineRun run_baseline(const std::vector<ScriptRecord>& targets,
                         const std::vector<ScriptRecord>& corpus, CompletionEndpoint& endpoint,
                         const RunConfig& config, bool keep_comparisons);

// --- file-backed commands (stage outputs live in config.output_dir) --------

std::filesystem::path out_path(const RunConfig& config, const std::string& name);

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::string> messages;
};

CommandResult cmd_generate_corpus(const SyntheticCorpusOptions& options,
                                  const std::filesystem::path& root);
CommandResult cmd_extract(const RunConfig& config);
CommandResult cmd_infer(const RunConfig& config, const std::filesystem::path& instances,
                        CompletionEndpoint* endpoint_override = nullptr);
CommandResult cmd_compare(const RunConfig& config, const std::filesystem::path& predictions);
CommandResult cmd_train(const RunConfig& config, const std::filesystem::path& features);
CommandResult cmd_predict(const RunConfig& config, const std::filesystem::path& model,
                          const std::filesystem::path& features);
CommandResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& model,
                           const std::filesystem::path& features);
CommandResult cmd_sensitivity(const RunConfig& config, const std::filesystem::path& predictions);
CommandResult cmd_baseline(const RunConfig& config,
                           CompletionEndpoint* endpoint_override = nullptr);

}  // namespace fimprobe
