#pragma once

#include <chrono>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fimprobe/types.hpp"

namespace fimprobe {

enum class PromptStyle { SantaCoderFIM, RawTripleField };

std::string_view to_string(PromptStyle style);
PromptStyle parse_prompt_style(std::string_view name);

inline constexpr int kDefaultMaskTokens = 128;
inline constexpr int kDefaultCompletionTokens = 512;

struct ModelEndpointConfig {
  std::string base_url = "http://127.0.0.1:8080/v1/completions";
  std::optional<std::string> auth_token;
  std::string model_name = "santacoder";
  PromptStyle prompt_style = PromptStyle::SantaCoderFIM;
  int max_new_tokens = kDefaultMaskTokens;
  double temperature = 0.0;
  std::chrono::milliseconds request_timeout{60000};
  int max_retries = 3;
  int batch_size = 4;
  std::chrono::milliseconds backoff_base{500};

  // Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

inline constexpr std::string_view kFimPrefix = "<fim-prefix>";
inline constexpr std::string_view kFimSuffix = "<fim-suffix>";
inline constexpr std::string_view kFimMiddle = "<fim-middle>";
inline constexpr std::string_view kEndOfText = "<|endoftext|>";

std::string build_fim_prompt(const MaskInstance& instance, PromptStyle style);

class EndpointUnreachable : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class AuthFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class Timeout : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
// 5xx / 429 responses: retried like connection failures.
class ServerError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Any other non-success response; not retried.
class BadResponse : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class MissingLabel : public std::invalid_argument {
 public:
  explicit MissingLabel(const std::string& script_id)
      : std::invalid_argument("script has no trained_on label: " + script_id),
        script_id(script_id) {}
  std::string script_id;
};

// Something that can fill a masked span or continue a prefix. Implementations
// must be safe to call from several threads at once.
class CompletionEndpoint {
 public:
  virtual ~CompletionEndpoint() = default;
  virtual std::string infill(const MaskInstance& instance, const ModelEndpointConfig& config) = 0;
  virtual std::string continue_text(const std::string& prefix,
                                    const ModelEndpointConfig& config) = 0;
  // In-process models report zero latency so their logs are reproducible.
  virtual bool measures_latency() const { return true; }
};

// JSON over HTTP(S): POST {model, prompt | prefix+suffix, max_tokens,
// temperature} -> {text}.
class HttpEndpoint : public CompletionEndpoint {
 public:
  std::string infill(const MaskInstance& instance, const ModelEndpointConfig& config) override;
  std::string continue_text(const std::string& prefix, const ModelEndpointConfig& config) override;

 private:
  std::string post(const std::string& body, const ModelEndpointConfig& config);
};

// Returns the target verbatim.
class EchoModel : public CompletionEndpoint {
 public:
  std::string infill(const MaskInstance& instance, const ModelEndpointConfig&) override {
    return instance.target;
  }
  std::string continue_text(const std::string&, const ModelEndpointConfig&) override { return {}; }
  bool measures_latency() const override { return false; }
};

struct MockOptions {
  double memorization_rate = 0.9;
  std::uint64_t noise_seed = 0;
  // Rename identifiers consistently in open-ended completions.
  bool paraphrase = false;
};

// Deterministic in-process stand-in for a code model. Scripts labeled as
// trained are "memorized": their masked elements are reproduced with
// probability memorization_rate. Other scripts get plausible but unrelated
// guesses drawn from the same vocabulary the synthetic corpus uses.
class MockModel : public CompletionEndpoint {
 public:
  MockModel(const std::vector<ScriptRecord>& corpus, MockOptions options);

  std::string infill(const MaskInstance& instance, const ModelEndpointConfig& config) override;
  std::string continue_text(const std::string& prefix, const ModelEndpointConfig& config) override;
  bool measures_latency() const override { return false; }

 private:
  struct Entry {
    const ScriptRecord* record;
    std::vector<std::pair<std::size_t, std::size_t>> blocks;  // byte ranges
  };
  std::vector<ScriptRecord> corpus_;
  std::map<std::string, Entry> by_id_;
  MockOptions options_;
};

std::unique_ptr<CompletionEndpoint> make_endpoint(const std::string& kind,
                                                  const std::vector<ScriptRecord>& corpus,
                                                  const MockOptions& mock);

// One prediction per instance in input order. Failures after retries become
// entries with `error` set. Up to config.batch_size requests run at once.
std::vector<ModelPrediction> predict_batch(CompletionEndpoint& endpoint,
                                           const ModelEndpointConfig& config,
                                           const std::vector<MaskInstance>& instances);

// Open-ended continuation; errors propagate after retries.
std::string generate_completion(CompletionEndpoint& endpoint, const ModelEndpointConfig& config,
                                const std::string& prefix);

// Cuts text at the end-of-text sentinel and keeps at most `max_tokens`
// whitespace-delimited chunks.
std::string truncate_completion(std::string_view text, int max_tokens);

void write_predictions_jsonl(const std::vector<ModelPrediction>& predictions, std::ostream& out);
std::vector<ModelPrediction> read_predictions_jsonl(std::istream& in);

void write_instances_jsonl(const std::vector<MaskInstance>& instances, std::ostream& out);
std::vector<MaskInstance> read_instances_jsonl(std::istream& in);

}  // namespace fimprobe
