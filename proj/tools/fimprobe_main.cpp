#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "fimprobe/pipeline.hpp"

using namespace fimprobe;

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::string> corpus, output_dir, endpoint_kind, base_url, model_name, prompt_style;
  std::optional<int> threshold, batch_size, max_retries, max_new_tokens;
  std::optional<long> timeout_ms;
  std::optional<double> temperature, memorization_rate, test_fraction, sample_fraction,
      clone_threshold, noise_ratio;
  std::optional<std::string> noise_target, repo_criterion;
  std::optional<std::size_t> min_match_len, context_budget;
  std::optional<std::uint64_t> seed_split, seed_train, seed_noise, seed_sample, seed_mock;
  bool paraphrase = false;
  bool include_parameters = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_file, "JSON run configuration");
  cmd->add_option("--corpus", o.corpus, "corpus directory or TSV manifest");
  cmd->add_option("-o,--out", o.output_dir, "output directory");
  cmd->add_option("--endpoint", o.endpoint_kind, "mock | http | echo");
  cmd->add_option("--base-url", o.base_url, "completion endpoint URL");
  cmd->add_option("--model-name", o.model_name);
  cmd->add_option("--prompt-style", o.prompt_style, "santacoder_fim | raw_triple_field");
  cmd->add_option("--max-new-tokens", o.max_new_tokens);
  cmd->add_option("--temperature", o.temperature);
  cmd->add_option("--timeout-ms", o.timeout_ms);
  cmd->add_option("--max-retries", o.max_retries);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--memorization-rate", o.memorization_rate, "mock model recall probability");
  cmd->add_flag("--paraphrase", o.paraphrase, "mock completions rename identifiers");
  cmd->add_option("-t,--threshold", o.threshold, "semantic similarity threshold (percent)");
  cmd->add_option("--noise-target", o.noise_target, "syntactic | semantic | combined");
  cmd->add_option("--noise-ratio", o.noise_ratio, "hit suppression probability");
  cmd->add_option("--repo-criterion", o.repo_criterion, "single_positive or a fraction");
  cmd->add_option("--test-fraction", o.test_fraction);
  cmd->add_option("--context-budget", o.context_budget, "max prefix+suffix characters");
  cmd->add_flag("--include-parameters", o.include_parameters, "treat parameters as variables");
  cmd->add_option("--sample-fraction", o.sample_fraction, "baseline corpus sample fraction");
  cmd->add_option("--clone-threshold", o.clone_threshold, "baseline clone threshold (percent)");
  cmd->add_option("--min-match-len", o.min_match_len, "tiling minimum match length");
  cmd->add_option("--seed-split", o.seed_split);
  cmd->add_option("--seed-train", o.seed_train);
  cmd->add_option("--seed-noise", o.seed_noise);
  cmd->add_option("--seed-sample", o.seed_sample);
  cmd->add_option("--seed-mock", o.seed_mock);
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (!o.config_file.empty()) {
    c = load_run_config(o.config_file);
  } else if (const char* token = std::getenv("FIMPROBE_AUTH_TOKEN"); token && *token) {
    c.endpoint.auth_token = token;
  }
  if (o.corpus) c.corpus = *o.corpus;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.endpoint_kind) c.endpoint_kind = *o.endpoint_kind;
  if (o.base_url) c.endpoint.base_url = *o.base_url;
  if (o.model_name) c.endpoint.model_name = *o.model_name;
  if (o.prompt_style) c.endpoint.prompt_style = parse_prompt_style(*o.prompt_style);
  if (o.max_new_tokens) c.endpoint.max_new_tokens = *o.max_new_tokens;
  if (o.temperature) c.endpoint.temperature = *o.temperature;
  if (o.timeout_ms) c.endpoint.request_timeout = std::chrono::milliseconds(*o.timeout_ms);
  if (o.max_retries) c.endpoint.max_retries = *o.max_retries;
  if (o.batch_size) c.endpoint.batch_size = *o.batch_size;
  if (o.memorization_rate) c.memorization_rate = *o.memorization_rate;
  if (o.paraphrase) c.paraphrase = true;
  if (o.threshold) c.threshold = SimilarityThreshold(*o.threshold).value();
  if (o.noise_target || o.noise_ratio) {
    NoiseSpec spec = c.noise.value_or(NoiseSpec{});
    if (o.noise_target) spec.target = parse_noise_target(*o.noise_target);
    if (o.noise_ratio) spec.ratio = *o.noise_ratio;
    c.noise = spec;
  }
  if (o.repo_criterion) {
    c.repo_criterion = *o.repo_criterion == "single_positive"
                           ? RepoCriterion::single_positive()
                           : RepoCriterion::fraction(std::stod(*o.repo_criterion));
  }
  if (o.test_fraction) c.test_fraction = *o.test_fraction;
  if (o.context_budget) c.context_budget = *o.context_budget;
  if (o.include_parameters) c.extraction.include_parameters = true;
  if (o.sample_fraction) c.sample_fraction = *o.sample_fraction;
  if (o.clone_threshold) c.clone_threshold = *o.clone_threshold;
  if (o.min_match_len) c.min_match_len = *o.min_match_len;
  if (o.seed_split) c.seeds.split = *o.seed_split;
  if (o.seed_train) c.seeds.train = *o.seed_train;
  if (o.seed_noise) c.seeds.noise = *o.seed_noise;
  if (o.seed_sample) c.seeds.sample = *o.seed_sample;
  if (o.seed_mock) c.seeds.mock = *o.seed_mock;
  c.endpoint.validate();
  check_paths(c);
  return c;
}

std::filesystem::path or_default(const std::string& given, const RunConfig& c,
                                 const std::string& name) {
  return given.empty() ? std::filesystem::path(c.output_dir) / name : std::filesystem::path(given);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe whether code was part of a model's training data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Overrides o;

  std::string instances, predictions, features, model;
  auto* extract = app.add_subcommand("extract", "mask every element of every script");
  auto* infer = app.add_subcommand("infer", "query the model for each masked element");
  infer->add_option("instances", instances, "instance file (default <out>/instances.jsonl)");
  auto* compare = app.add_subcommand("compare", "score predictions into hit vectors");
  compare->add_option("predictions", predictions, "prediction log");
  auto* train = app.add_subcommand("train", "grid-search and persist a classifier");
  train->add_option("features", features, "feature CSV or JSONL");
  auto* predict = app.add_subcommand("predict", "classify scripts and repositories");
  predict->add_option("--model", model, "model file");
  predict->add_option("features", features, "feature CSV or JSONL");
  auto* evaluate = app.add_subcommand("evaluate", "score the classifier on its held-out split");
  evaluate->add_option("--model", model, "model file");
  evaluate->add_option("features", features, "feature CSV or JSONL");
  auto* sensitivity =
      app.add_subcommand("sensitivity", "sweep noise targets, ratios and thresholds");
  sensitivity->add_option("predictions", predictions, "prediction log");
  auto* baseline = app.add_subcommand("baseline", "run the clone-detection baseline");
  for (auto* cmd : {extract, infer, compare, train, predict, evaluate, sensitivity, baseline}) {
    add_common(cmd, o);
  }

  SyntheticCorpusOptions gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate-corpus", "write a synthetic labeled corpus");
  generate->add_option("dir", gen_out, "destination directory")->required();
  generate->add_option("--projects", gen.n_projects);
  generate->add_option("--min-scripts", gen.min_scripts);
  generate->add_option("--max-scripts", gen.max_scripts);
  generate->add_option("--trained-fraction", gen.trained_fraction);
  generate->add_option("--seed", gen.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    CommandResult result;
    if (generate->parsed()) {
      result = cmd_generate_corpus(gen, gen_out);
    } else {
      const auto config = resolve(o);
      if (extract->parsed()) {
        result = cmd_extract(config);
      } else if (infer->parsed()) {
        result = cmd_infer(config, or_default(instances, config, "instances.jsonl"));
      } else if (compare->parsed()) {
        result = cmd_compare(config, or_default(predictions, config, "predictions.jsonl"));
      } else if (train->parsed()) {
        result = cmd_train(config, or_default(features, config, "features.jsonl"));
      } else if (predict->parsed()) {
        result = cmd_predict(config, or_default(model, config, "model.json"),
                             or_default(features, config, "features.jsonl"));
      } else if (evaluate->parsed()) {
        result = cmd_evaluate(config, or_default(model, config, "model.json"),
                              or_default(features, config, "features.jsonl"));
      } else if (sensitivity->parsed()) {
        result = cmd_sensitivity(config, or_default(predictions, config, "predictions.jsonl"));
      } else if (baseline->parsed()) {
        result = cmd_baseline(config);
      }
    }
    for (const auto& m : result.messages) std::cerr << m << '\n';
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "fimprobe: " << e.what() << '\n';
    return kExitFatal;
  }
}
