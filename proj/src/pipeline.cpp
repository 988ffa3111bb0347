#include "fimprobe/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fimprobe/python_lexer.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

namespace {

using ojson = nlohmann::ordered_json;

std::string max_features_name(MaxFeatures m) { return m == MaxFeatures::Sqrt ? "sqrt" : "log2"; }
std::string criterion_name(SplitCriterion c) { return c == SplitCriterion::Gini ? "gini" : "entropy"; }

MaxFeatures parse_max_features(const std::string& s) {
  if (s == "sqrt") return MaxFeatures::Sqrt;
  if (s == "log2") return MaxFeatures::Log2;
  throw std::invalid_argument("max_features must be sqrt or log2, got " + s);
}

SplitCriterion parse_criterion(const std::string& s) {
  if (s == "gini") return SplitCriterion::Gini;
  if (s == "entropy") return SplitCriterion::Entropy;
  throw std::invalid_argument("criterion must be gini or entropy, got " + s);
}

RepoCriterion parse_repo_criterion(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "single_positive") {
    return RepoCriterion::single_positive();
  }
  if (j.is_number()) return RepoCriterion::fraction(j.get<double>());
  throw std::invalid_argument("repo_criterion must be \"single_positive\" or a fraction");
}

ojson repo_criterion_json(const RepoCriterion& c) {
  if (c.mode == RepoCriterion::Mode::SinglePositive) return "single_positive";
  return c.theta;
}

ojson params_json(const ForestParams& p) {
  return {{"n_estimators", p.n_estimators},
          {"max_features", max_features_name(p.max_features)},
          {"max_depth", p.max_depth},
          {"criterion", criterion_name(p.criterion)}};
}

template <typename Fn>
void for_keys(const nlohmann::json& obj, const std::string& where, Fn&& fn) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!fn(it.key(), it.value())) {
      throw std::invalid_argument("unknown config key " + where + "." + it.key());
    }
  }
}

std::uint64_t as_seed(const nlohmann::json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw std::invalid_argument("seeds must be non-negative integers");
}

}  // namespace

void apply_config_json(RunConfig& c, const nlohmann::json& doc) {
  for_keys(doc, "config", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "corpus") c.corpus = v.get<std::string>();
    else if (k == "output_dir") c.output_dir = v.get<std::string>();
    else if (k == "endpoint_kind") c.endpoint_kind = v.get<std::string>();
    else if (k == "memorization_rate") c.memorization_rate = v.get<double>();
    else if (k == "paraphrase") c.paraphrase = v.get<bool>();
    else if (k == "threshold") c.threshold = SimilarityThreshold(v.get<int>()).value();
    else if (k == "repo_criterion") c.repo_criterion = parse_repo_criterion(v);
    else if (k == "test_fraction") c.test_fraction = v.get<double>();
    else if (k == "context_budget") c.context_budget = v.get<std::size_t>();
    else if (k == "min_identifier_len") c.extraction.min_identifier_len = v.get<std::size_t>();
    else if (k == "include_parameters") c.extraction.include_parameters = v.get<bool>();
    else if (k == "clone_threshold") c.clone_threshold = v.get<double>();
    else if (k == "min_match_len") c.min_match_len = v.get<std::size_t>();
    else if (k == "sample_fraction") c.sample_fraction = v.get<double>();
    else if (k == "completion_tokens") c.completion_tokens = v.get<int>();
    else if (k == "noise") {
      if (v.is_null()) {
        c.noise.reset();
      } else {
        NoiseSpec spec;
        for_keys(v, "noise", [&](const std::string& nk, const nlohmann::json& nv) {
          if (nk == "target") spec.target = parse_noise_target(nv.get<std::string>());
          else if (nk == "ratio") spec.ratio = nv.get<double>();
          else return false;
          return true;
        });
        c.noise = spec;
      }
    } else if (k == "endpoint") {
      auto& e = c.endpoint;
      for_keys(v, "endpoint", [&](const std::string& ek, const nlohmann::json& ev) {
        if (ek == "base_url") e.base_url = ev.get<std::string>();
        else if (ek == "auth_token") e.auth_token = ev.get<std::string>();
        else if (ek == "model_name") e.model_name = ev.get<std::string>();
        else if (ek == "prompt_style") e.prompt_style = parse_prompt_style(ev.get<std::string>());
        else if (ek == "max_new_tokens") e.max_new_tokens = ev.get<int>();
        else if (ek == "temperature") e.temperature = ev.get<double>();
        else if (ek == "request_timeout_ms") e.request_timeout = std::chrono::milliseconds(ev.get<long>());
        else if (ek == "max_retries") e.max_retries = ev.get<int>();
        else if (ek == "batch_size") e.batch_size = ev.get<int>();
        else if (ek == "backoff_ms") e.backoff_base = std::chrono::milliseconds(ev.get<long>());
        else return false;
        return true;
      });
    } else if (k == "grid") {
      for_keys(v, "grid", [&](const std::string& gk, const nlohmann::json& gv) {
        if (gk == "n_estimators") c.grid.n_estimators = gv.get<std::vector<int>>();
        else if (gk == "max_depth") c.grid.max_depth = gv.get<std::vector<int>>();
        else if (gk == "max_features") {
          c.grid.max_features.clear();
          for (const auto& s : gv) c.grid.max_features.push_back(parse_max_features(s.get<std::string>()));
        } else if (gk == "criterion") {
          c.grid.criteria.clear();
          for (const auto& s : gv) c.grid.criteria.push_back(parse_criterion(s.get<std::string>()));
        } else {
          return false;
        }
        return true;
      });
    } else if (k == "sensitivity") {
      for_keys(v, "sensitivity", [&](const std::string& sk, const nlohmann::json& sv) {
        if (sk == "ratios") c.sensitivity_ratios = sv.get<std::vector<double>>();
        else if (sk == "thresholds") c.sensitivity_thresholds = sv.get<std::vector<int>>();
        else if (sk == "targets") {
          c.sensitivity_targets.clear();
          for (const auto& s : sv) c.sensitivity_targets.push_back(parse_noise_target(s.get<std::string>()));
        } else {
          return false;
        }
        return true;
      });
    } else if (k == "seeds") {
      for_keys(v, "seeds", [&](const std::string& sk, const nlohmann::json& sv) {
        if (sk == "split") c.seeds.split = as_seed(sv);
        else if (sk == "train") c.seeds.train = as_seed(sv);
        else if (sk == "noise") c.seeds.noise = as_seed(sv);
        else if (sk == "sample") c.seeds.sample = as_seed(sv);
        else if (sk == "mock") c.seeds.mock = as_seed(sv);
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig config;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  apply_config_json(config, doc);
  // Relative corpus paths are resolved against the config file's directory.
  if (!config.corpus.empty() && std::filesystem::path(config.corpus).is_relative()) {
    config.corpus = (path.parent_path() / config.corpus).lexically_normal().string();
  }
  if (const char* token = std::getenv("FIMPROBE_AUTH_TOKEN"); token && *token) {
    config.endpoint.auth_token = token;
  }
  return config;
}

nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  ojson j;
  j["corpus"] = c.corpus;
  j["output_dir"] = c.output_dir;
  j["endpoint_kind"] = c.endpoint_kind;
  j["endpoint"] = {{"base_url", c.endpoint.base_url},
                   {"model_name", c.endpoint.model_name},
                   {"prompt_style", to_string(c.endpoint.prompt_style)},
                   {"max_new_tokens", c.endpoint.max_new_tokens},
                   {"temperature", c.endpoint.temperature},
                   {"request_timeout_ms", c.endpoint.request_timeout.count()},
                   {"max_retries", c.endpoint.max_retries},
                   {"batch_size", c.endpoint.batch_size},
                   {"backoff_ms", c.endpoint.backoff_base.count()}};
  j["memorization_rate"] = c.memorization_rate;
  j["paraphrase"] = c.paraphrase;
  j["threshold"] = c.threshold;
  j["repo_criterion"] = repo_criterion_json(c.repo_criterion);
  if (c.noise) {
    j["noise"] = {{"target", to_string(c.noise->target)}, {"ratio", c.noise->ratio}};
  } else {
    j["noise"] = nullptr;
  }
  ojson grid;
  grid["n_estimators"] = c.grid.n_estimators;
  grid["max_features"] = ojson::array();
  for (auto m : c.grid.max_features) grid["max_features"].push_back(max_features_name(m));
  grid["max_depth"] = c.grid.max_depth;
  grid["criterion"] = ojson::array();
  for (auto cr : c.grid.criteria) grid["criterion"].push_back(criterion_name(cr));
  j["grid"] = grid;
  j["test_fraction"] = c.test_fraction;
  j["context_budget"] = c.context_budget;
  j["min_identifier_len"] = c.extraction.min_identifier_len;
  j["include_parameters"] = c.extraction.include_parameters;
  j["clone_threshold"] = c.clone_threshold;
  j["min_match_len"] = c.min_match_len;
  j["sample_fraction"] = c.sample_fraction;
  j["completion_tokens"] = c.completion_tokens;
  ojson targets = ojson::array();
  for (auto t : c.sensitivity_targets) targets.push_back(to_string(t));
  j["sensitivity"] = {{"ratios", c.sensitivity_ratios},
                      {"thresholds", c.sensitivity_thresholds},
                      {"targets", targets}};
  j["seeds"] = {{"split", c.seeds.split},
                {"train", c.seeds.train},
                {"noise", c.seeds.noise},
                {"sample", c.seeds.sample},
                {"mock", c.seeds.mock}};
  return j;
}

void check_paths(const RunConfig& config) {
  if (!config.corpus.empty() && !std::filesystem::exists(config.corpus)) {
    throw std::runtime_error("corpus path does not exist: " + config.corpus);
  }
}

std::string config_hash(const RunConfig& config) {
  return to_hex(fnv1a64(run_config_to_json(config).dump()));
}

nlohmann::ordered_json provenance(const RunConfig& config) {
  ojson j;
  j["tool_version"] = std::string(kToolVersion);
  j["config_hash"] = config_hash(config);
  j["seeds"] = run_config_to_json(config)["seeds"];
  j["threshold"] = config.threshold;
  return j;
}

void write_provenance_sidecar(const std::filesystem::path& artifact, const RunConfig& config) {
  ojson j;
  j["artifact"] = artifact.filename().string();
  j["provenance"] = provenance(config);
  write_file(artifact.string() + ".provenance.json", j.dump(2) + "\n");
}

// --- in-memory stages -----------------------------------------------------

ExtractionOutcome extract_corpus(const std::vector<ScriptRecord>& corpus,
                                 const ExtractionOptions& options, std::size_t context_budget) {
  ExtractionOutcome out;
  for (const auto& record : corpus) {
    try {
      const auto ids = parse_script(record, options);
      auto& counts = out.counts[record.script_id];
      counts.fill(0);
      for (const auto& id : ids) ++counts[feature_index(id.kind)];
      for (auto& inst : make_mask_instances(record, ids)) {
        out.instances.push_back(apply_context_budget(inst, context_budget));
      }
    } catch (const SyntaxError& e) {
      out.failures.push_back({record.script_id, e.reason(), e.line()});
    }
  }
  return out;
}

std::vector<HitVector> hit_vectors(const std::vector<ModelPrediction>& predictions,
                                   SimilarityThreshold threshold, const ScriptIndex& index,
                                   const std::optional<NoiseSpec>& noise) {
  auto events = score_predictions(predictions, threshold);
  if (noise) events = inject_noise(events, *noise);
  return accumulate_events(events, &index);
}

std::vector<RepoCriterion> standard_repo_criteria() {
  return {RepoCriterion::single_positive(), RepoCriterion::fraction(0.4),
          RepoCriterion::fraction(0.6)};
}

namespace {

std::vector<RepoEvaluation> repository_reports(
    const std::vector<std::tuple<std::string, bool, bool>>& verdicts,  // project, predicted, label
    const std::vector<RepoCriterion>& criteria) {
  std::map<std::string, std::pair<std::vector<bool>, bool>> projects;
  for (const auto& [project, predicted, label] : verdicts) {
    auto& p = projects[project];
    p.first.push_back(predicted);
    p.second = p.second || label;
  }
  std::vector<RepoEvaluation> out;
  for (const auto& criterion : criteria) {
    std::vector<bool> predicted, actual;
    for (const auto& [project, p] : projects) {
      predicted.push_back(aggregate_repository(p.first, criterion));
      actual.push_back(p.second);
    }
    out.push_back({criterion, compute_metrics(predicted, actual)});
  }
  return out;
}

}  // namespace

Evaluation evaluate_model(const ForestModel& model, const std::vector<FeatureRow>& rows,
                          const std::vector<RepoCriterion>& criteria) {
  Evaluation ev;
  std::vector<bool> predicted, actual;
  std::vector<std::tuple<std::string, bool, bool>> verdicts;
  for (const auto& r : rows) {
    const bool p = predict_script(model, r.features).label;
    predicted.push_back(p);
    actual.push_back(r.label);
    verdicts.emplace_back(r.project_id, p, r.label);
  }
  ev.file_level = compute_metrics(predicted, actual);
  ev.repository_level = repository_reports(verdicts, criteria);
  return ev;
}

Experiment run_experiment(const std::vector<HitVector>& hits, double test_fraction,
                          const ParamGrid& grid, const Seeds& seeds) {
  Experiment ex;
  ex.split = split_dataset(to_feature_rows(hits), test_fraction, seeds.split);
  ex.grid = grid_search(ex.split, grid, seeds.train);
  ex.evaluation = evaluate_model(ex.grid.best, ex.split.test, standard_repo_criteria());
  return ex;
}

BaselineRun run_baseline(const std::vector<ScriptRecord>& targets,
                         const std::vector<ScriptRecord>& corpus, CompletionEndpoint& endpoint,
                         const RunConfig& config, bool keep_comparisons) {
  BaselineRun run;
  const auto sample = sample_corpus(corpus, config.sample_fraction, config.seeds.sample);
  std::set<std::string> projects;
  for (const auto& s : sample) projects.insert(s.project_id);
  run.sampled_projects = projects.size();
  run.sampled_scripts = sample.size();
  const TokenizedCorpus tokenized(sample);
  auto endpoint_config = config.endpoint;
  endpoint_config.max_new_tokens = config.completion_tokens;

  std::vector<std::tuple<std::string, bool, bool>> verdicts;
  std::vector<bool> predicted, actual;
  for (const auto& script : targets) {
    if (!script.trained_on) continue;
    BaselineScriptResult res{script.script_id, script.project_id, false, *script.trained_on, 0, 0};
    std::vector<CodeUnit> units;
    try {
      units = extract_code_units(script);
    } catch (const SyntaxError& e) {
      run.failures.push_back({script.script_id, e.reason(), e.line()});
    }
    for (const auto& unit : units) {
      if (unit.body_lines.size() < 2) {
        ++res.skipped_units;
        continue;
      }
      ++res.units;
      try {
        auto outcome = baseline_detect(unit, endpoint, endpoint_config, tokenized,
                                       config.clone_threshold, config.min_match_len);
        res.hit = res.hit || outcome.hit;
        if (keep_comparisons) {
          for (auto& c : outcome.comparisons) run.comparisons.push_back(std::move(c));
        }
      } catch (const std::runtime_error& e) {
        run.failures.push_back({script.script_id + "::" + unit.name, e.what(), 0});
      }
    }
    predicted.push_back(res.hit);
    actual.push_back(res.label);
    verdicts.emplace_back(res.project_id, res.hit, res.label);
    run.scripts.push_back(std::move(res));
  }
  run.file_level = compute_metrics(predicted, actual);
  run.repository_level = repository_reports(verdicts, standard_repo_criteria());
  return run;
}

// --- file-backed commands ---------------------------------------------------

std::filesystem::path out_path(const RunConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.output_dir);
  return std::filesystem::path(config.output_dir) / name;
}

namespace {

std::vector<ScriptRecord> load_configured_corpus(const RunConfig& config,
                                                 std::vector<std::string>* warnings) {
  if (config.corpus.empty()) throw std::runtime_error("no corpus configured");
  return load_corpus(config.corpus, warnings);
}

ScriptIndex configured_index(const RunConfig& config) {
  if (config.corpus.empty()) return {};
  return make_script_index(load_configured_corpus(config, nullptr));
}

std::vector<HitVector> read_features(const std::filesystem::path& path, const ScriptIndex& index) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  auto rows = path.extension() == ".jsonl" ? read_feature_jsonl(in) : read_feature_csv(in);
  for (auto& r : rows) {
    if (auto it = index.find(r.script_id); it != index.end()) {
      r.project_id = it->second.project_id;
      if (!r.trained_on) r.trained_on = it->second.trained_on;
    }
  }
  return rows;
}

void write_json(const std::filesystem::path& path, const ojson& doc) {
  write_file(path, doc.dump(2) + "\n");
}

ojson failures_json(const std::vector<ScriptFailure>& failures) {
  ojson arr = ojson::array();
  for (const auto& f : failures) {
    arr.push_back({{"script_id", f.script_id}, {"line", f.line}, {"message", f.message}});
  }
  return arr;
}

ojson evaluation_json(const Evaluation& ev) {
  ojson j;
  j["file_level"] = report_to_json(ev.file_level);
  ojson rows = ojson::array();
  for (const auto& r : ev.repository_level) {
    ojson row;
    row["criterion"] = r.criterion.describe();
    row["report"] = report_to_json(r.report);
    rows.push_back(row);
  }
  j["repository_level"] = rows;
  return j;
}

std::string pred_key(const std::string& script, IdentifierKind kind, const std::string& target) {
  std::string k = script;
  k.push_back('\x1f');
  k += to_string(kind);
  k.push_back('\x1f');
  k += target;
  return k;
}

std::unique_ptr<CompletionEndpoint> configured_endpoint(const RunConfig& config) {
  std::vector<ScriptRecord> corpus;
  if (config.endpoint_kind == "mock") corpus = load_configured_corpus(config, nullptr);
  return make_endpoint(config.endpoint_kind, corpus,
                       MockOptions{config.memorization_rate, config.seeds.mock, config.paraphrase});
}

}  // namespace

CommandResult cmd_generate_corpus(const SyntheticCorpusOptions& options,
                                  const std::filesystem::path& root) {
  const auto corpus = generate_synthetic_corpus(options);
  write_corpus(corpus, root);
  return {kExitOk, {"wrote " + std::to_string(corpus.size()) + " scripts in " +
                    std::to_string(options.n_projects) + " projects to " + root.string()}};
}

CommandResult cmd_extract(const RunConfig& config) {
  CommandResult result;
  std::vector<std::string> warnings;
  const auto corpus = load_configured_corpus(config, &warnings);
  const auto outcome = extract_corpus(corpus, config.extraction, config.context_budget);

  const auto instances_path = out_path(config, "instances.jsonl");
  std::ostringstream buf;
  write_instances_jsonl(outcome.instances, buf);
  write_file(instances_path, buf.str());
  write_provenance_sidecar(instances_path, config);

  ojson report;
  report["provenance"] = provenance(config);
  report["scripts_total"] = corpus.size();
  report["instances_total"] = outcome.instances.size();
  ojson scripts = ojson::array();
  for (const auto& [id, counts] : outcome.counts) {
    ojson c;
    for (auto kind : kFeatureOrder) c[std::string(to_string(kind))] = counts[feature_index(kind)];
    scripts.push_back({{"script_id", id}, {"counts", c}});
  }
  report["scripts"] = scripts;
  report["errors"] = failures_json(outcome.failures);
  report["warnings"] = warnings;
  write_json(out_path(config, "extraction_report.json"), report);

  for (const auto& w : warnings) result.messages.push_back("warning: " + w);
  for (const auto& f : outcome.failures) {
    result.messages.push_back("syntax error in " + f.script_id + " line " +
                              std::to_string(f.line) + ": " + f.message);
  }
  result.messages.push_back("extracted " + std::to_string(outcome.instances.size()) +
                            " instances from " + std::to_string(outcome.counts.size()) +
                            " scripts");
  if (!outcome.failures.empty()) result.exit_code = kExitPartial;
  return result;
}

CommandResult cmd_infer(const RunConfig& config, const std::filesystem::path& instances_path,
                        CompletionEndpoint* endpoint_override) {
  CommandResult result;
  std::ifstream in(instances_path);
  if (!in) throw std::runtime_error("cannot open instance file " + instances_path.string());
  const auto instances = read_instances_jsonl(in);

  const auto log_path = out_path(config, "predictions.jsonl");
  std::map<std::string, ModelPrediction> previous;
  if (std::filesystem::exists(log_path)) {
    std::ifstream prev(log_path);
    for (auto& p : read_predictions_jsonl(prev)) {
      if (p.answered()) previous.emplace(pred_key(p.script_id, p.kind, p.target), std::move(p));
    }
  }
  std::vector<MaskInstance> todo;
  std::vector<std::size_t> todo_index;
  std::vector<ModelPrediction> merged(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (auto it = previous.find(pred_key(inst.script_id, inst.kind, inst.target));
        it != previous.end()) {
      merged[i] = it->second;
    } else {
      todo.push_back(inst);
      todo_index.push_back(i);
    }
  }
  std::size_t errors = 0;
  if (!todo.empty()) {
    std::unique_ptr<CompletionEndpoint> owned;
    CompletionEndpoint* endpoint = endpoint_override;
    if (!endpoint) {
      owned = configured_endpoint(config);
      endpoint = owned.get();
    }
    auto fresh = predict_batch(*endpoint, config.endpoint, todo);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      if (!fresh[k].answered()) ++errors;
      merged[todo_index[k]] = std::move(fresh[k]);
    }
  }
  std::ostringstream buf;
  write_predictions_jsonl(merged, buf);
  write_file(log_path, buf.str());
  write_provenance_sidecar(log_path, config);
  result.messages.push_back("queried " + std::to_string(todo.size()) + ", reused " +
                            std::to_string(instances.size() - todo.size()) + ", errors " +
                            std::to_string(errors));
  if (errors > 0) result.exit_code = kExitPartial;
  return result;
}

CommandResult cmd_compare(const RunConfig& config, const std::filesystem::path& predictions_path) {
  std::ifstream in(predictions_path);
  if (!in) throw std::runtime_error("cannot open prediction log " + predictions_path.string());
  const auto predictions = read_predictions_jsonl(in);
  const auto index = configured_index(config);
  std::optional<NoiseSpec> noise = config.noise;
  if (noise) noise->seed = config.seeds.noise;
  const auto hits = hit_vectors(predictions, SimilarityThreshold(config.threshold), index, noise);

  const auto csv_path = out_path(config, "features.csv");
  std::ostringstream csv;
  write_feature_csv(hits, csv);
  write_file(csv_path, csv.str());
  write_provenance_sidecar(csv_path, config);
  const auto jsonl_path = out_path(config, "features.jsonl");
  std::ostringstream jsonl;
  write_feature_jsonl(hits, jsonl);
  write_file(jsonl_path, jsonl.str());
  write_provenance_sidecar(jsonl_path, config);
  return {kExitOk, {"wrote hit vectors for " + std::to_string(hits.size()) + " scripts"}};
}

CommandResult cmd_train(const RunConfig& config, const std::filesystem::path& features) {
  const auto hits = read_features(features, configured_index(config));
  Seeds seeds = config.seeds;
  const auto ex = run_experiment(hits, config.test_fraction, config.grid, seeds);

  ojson doc;
  doc["provenance"] = provenance(config);
  ojson split;
  split["test_fraction"] = config.test_fraction;
  split["train_scripts"] = ojson::array();
  for (const auto& r : ex.split.train) split["train_scripts"].push_back(r.script_id);
  split["test_scripts"] = ojson::array();
  for (const auto& r : ex.split.test) split["test_scripts"].push_back(r.script_id);
  doc["split"] = split;
  ojson grid = ojson::array();
  for (const auto& e : ex.grid.entries) {
    grid.push_back({{"params", params_json(e.params)}, {"report", report_to_json(e.report)}});
  }
  doc["grid"] = grid;
  doc["selected"] = {{"params", params_json(ex.grid.best.params)},
                     {"test_report", report_to_json(ex.grid.best_report)}};
  ojson importance;
  for (auto kind : kFeatureOrder) {
    importance[std::string(to_string(kind)) + "_hits"] =
        ex.grid.best.feature_importances[feature_index(kind)];
  }
  doc["feature_importances"] = importance;
  std::vector<FeatureRow> all = ex.split.train;
  all.insert(all.end(), ex.split.test.begin(), ex.split.test.end());
  const auto corr = spearman_matrix(all);
  ojson names = ojson::array();
  for (auto kind : kFeatureOrder) names.push_back(std::string(to_string(kind)) + "_hits");
  names.push_back("trained_on");
  ojson matrix = ojson::array();
  for (const auto& row : corr) matrix.push_back(row);
  doc["spearman"] = {{"columns", names}, {"matrix", matrix}};
  doc["model"] = forest_to_json(ex.grid.best);
  write_json(out_path(config, "model.json"), doc);

  return {kExitOk,
          {"selected " + describe(ex.grid.best.params) + " with test F-score " +
           format_real(ex.grid.best_report.f_score)}};
}

namespace {

struct LoadedModel {
  ForestModel forest;
  std::set<std::string> test_scripts;
};

LoadedModel load_model_file(const std::filesystem::path& path) {
  const auto doc = nlohmann::json::parse(read_file(path));
  LoadedModel m;
  m.forest = forest_from_json(doc.contains("model") ? doc.at("model") : doc);
  if (doc.contains("split")) {
    for (const auto& s : doc["split"].at("test_scripts")) m.test_scripts.insert(s.get<std::string>());
  }
  return m;
}

}  // namespace

CommandResult cmd_predict(const RunConfig& config, const std::filesystem::path& model_path,
                          const std::filesystem::path& features) {
  const auto model = load_model_file(model_path);
  const auto hits = read_features(features, configured_index(config));
  std::ostringstream scripts;
  scripts << "script_name,votes,trained_on_predicted\n";
  std::map<std::string, std::vector<bool>> by_project;
  for (const auto& h : hits) {
    const auto v = predict_script(model.forest, h.rates);
    scripts << h.script_id << ',' << format_real(v.votes) << ',' << (v.label ? 1 : 0) << '\n';
    by_project[h.project_id].push_back(v.label);
  }
  std::ostringstream repos;
  repos << "project_id,criterion,trained_on_predicted\n";
  for (const auto& [project, verdicts] : by_project) {
    repos << project << ',' << config.repo_criterion.describe() << ','
          << (aggregate_repository(verdicts, config.repo_criterion) ? 1 : 0) << '\n';
  }
  const auto script_path = out_path(config, "script_verdicts.csv");
  write_file(script_path, scripts.str());
  write_provenance_sidecar(script_path, config);
  const auto repo_path = out_path(config, "repository_verdicts.csv");
  write_file(repo_path, repos.str());
  write_provenance_sidecar(repo_path, config);
  return {kExitOk, {"predicted " + std::to_string(hits.size()) + " scripts in " +
                    std::to_string(by_project.size()) + " repositories"}};
}

CommandResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& model_path,
                           const std::filesystem::path& features) {
  const auto model = load_model_file(model_path);
  auto rows = to_feature_rows(read_features(features, configured_index(config)));
  if (!model.test_scripts.empty()) {
    std::erase_if(rows, [&](const FeatureRow& r) { return !model.test_scripts.count(r.script_id); });
  }
  if (rows.empty()) throw InsufficientData("no labeled scripts to evaluate");
  const auto ev = evaluate_model(model.forest, rows, standard_repo_criteria());
  ojson doc;
  doc["provenance"] = provenance(config);
  doc["evaluated_scripts"] = rows.size();
  const auto body = evaluation_json(ev);
  doc["file_level"] = body["file_level"];
  doc["repository_level"] = body["repository_level"];
  write_json(out_path(config, "evaluation.json"), doc);
  return {kExitOk, {"file-level F-score " + format_real(ev.file_level.f_score)}};
}

CommandResult cmd_sensitivity(const RunConfig& config,
                              const std::filesystem::path& predictions_path) {
  std::ifstream in(predictions_path);
  if (!in) throw std::runtime_error("cannot open prediction log " + predictions_path.string());
  const auto predictions = read_predictions_jsonl(in);
  const auto index = configured_index(config);
  ojson rows = ojson::array();
  auto run_one = [&](int threshold, const std::optional<NoiseSpec>& noise) {
    const auto hits = hit_vectors(predictions, SimilarityThreshold(threshold), index, noise);
    const auto ex = run_experiment(hits, config.test_fraction, config.grid, config.seeds);
    ojson row;
    row["threshold"] = threshold;
    row["noise_target"] = noise ? ojson(std::string(to_string(noise->target))) : ojson(nullptr);
    row["noise_ratio"] = noise ? noise->ratio : 0.0;
    row["selected"] = params_json(ex.grid.best.params);
    const auto body = evaluation_json(ex.evaluation);
    row["file_level"] = body["file_level"];
    row["repository_level"] = body["repository_level"];
    rows.push_back(row);
  };
  for (int threshold : config.sensitivity_thresholds) {
    run_one(threshold, std::nullopt);
    for (auto target : config.sensitivity_targets) {
      for (double ratio : config.sensitivity_ratios) {
        run_one(threshold, NoiseSpec{target, ratio, config.seeds.noise});
      }
    }
  }
  ojson doc;
  doc["provenance"] = provenance(config);
  doc["runs"] = rows;
  write_json(out_path(config, "sensitivity.json"), doc);
  return {kExitOk, {"ran " + std::to_string(rows.size()) + " sensitivity configurations"}};
}

CommandResult cmd_baseline(const RunConfig& config, CompletionEndpoint* endpoint_override) {
  std::vector<std::string> warnings;
  const auto corpus = load_configured_corpus(config, &warnings);
  std::unique_ptr<CompletionEndpoint> owned;
  CompletionEndpoint* endpoint = endpoint_override;
  if (!endpoint) {
    owned = configured_endpoint(config);
    endpoint = owned.get();
  }
  const auto run = run_baseline(corpus, corpus, *endpoint, config, true);

  const auto cmp_path = out_path(config, "baseline_comparisons.jsonl");
  std::ostringstream buf;
  write_comparisons_jsonl(run.comparisons, buf);
  write_file(cmp_path, buf.str());
  write_provenance_sidecar(cmp_path, config);

  ojson doc;
  doc["provenance"] = provenance(config);
  doc["sampled_projects"] = run.sampled_projects;
  doc["sampled_scripts"] = run.sampled_scripts;
  doc["clone_threshold"] = config.clone_threshold;
  doc["min_match_len"] = config.min_match_len;
  ojson scripts = ojson::array();
  std::map<std::string, std::pair<bool, bool>> projects;
  for (const auto& s : run.scripts) {
    scripts.push_back({{"script_id", s.script_id},
                       {"project_id", s.project_id},
                       {"hit", s.hit},
                       {"trained_on", s.label},
                       {"units", s.units},
                       {"skipped_units", s.skipped_units}});
    auto& p = projects[s.project_id];
    p.first = p.first || s.hit;
    p.second = p.second || s.label;
  }
  doc["scripts"] = scripts;
  ojson proj = ojson::array();
  for (const auto& [id, p] : projects) {
    proj.push_back({{"project_id", id}, {"hit", p.first}, {"trained_on", p.second}});
  }
  doc["projects"] = proj;
  doc["file_level"] = report_to_json(run.file_level);
  ojson repo = ojson::array();
  for (const auto& r : run.repository_level) {
    repo.push_back({{"criterion", r.criterion.describe()}, {"report", report_to_json(r.report)}});
  }
  doc["repository_level"] = repo;
  doc["failures"] = failures_json(run.failures);
  write_json(out_path(config, "baseline_report.json"), doc);

  CommandResult result;
  for (const auto& w : warnings) result.messages.push_back("warning: " + w);
  result.messages.push_back("sampled " + std::to_string(run.sampled_projects) + " projects (" +
                            std::to_string(run.sampled_scripts) + " scripts)");
  result.messages.push_back("baseline file-level F-score " + format_real(run.file_level.f_score));
  if (!run.failures.empty()) result.exit_code = kExitPartial;
  return result;
}

}  // namespace fimprobe
