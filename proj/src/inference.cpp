#include "fimprobe/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fimprobe/extraction.hpp"
#include "fimprobe/python_lexer.hpp"
#include "fimprobe/util.hpp"
#include "fimprobe/vocabulary.hpp"

namespace fimprobe {

std::string_view to_string(PromptStyle style) {
  return style == PromptStyle::SantaCoderFIM ? "santacoder_fim" : "raw_triple_field";
}

PromptStyle parse_prompt_style(std::string_view name) {
  if (name == "santacoder_fim") return PromptStyle::SantaCoderFIM;
  if (name == "raw_triple_field") return PromptStyle::RawTripleField;
  throw std::invalid_argument("unknown prompt style: " + std::string(name));
}

void ModelEndpointConfig::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (request_timeout.count() <= 0) throw std::invalid_argument("request_timeout must be > 0");
}

std::string build_fim_prompt(const MaskInstance& instance, PromptStyle style) {
  if (style == PromptStyle::RawTripleField) return instance.prefix;
  std::string out;
  out.reserve(instance.prefix.size() + instance.suffix.size() + 36);
  out.append(kFimPrefix).append(instance.prefix);
  out.append(kFimSuffix).append(instance.suffix);
  out.append(kFimMiddle);
  return out;
}

std::string truncate_completion(std::string_view text, int max_tokens) {
  if (auto eos = text.find(kEndOfText); eos != std::string_view::npos) text = text.substr(0, eos);
  std::size_t i = 0, last_end = 0;
  int chunks = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    if (chunks == max_tokens) return std::string(text.substr(0, last_end));
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    last_end = i;
    ++chunks;
  }
  return std::string(text);
}

// --- HTTP ----------------------------------------------------------------

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string HttpEndpoint::post(const std::string& body, const ModelEndpointConfig& config) {
  const auto url = split_url(config.base_url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.request_timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config.request_timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (config.auth_token) headers.emplace("Authorization", "Bearer " + *config.auth_token);

  auto res = client.Post(url.path, headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto what = httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write) {
      throw Timeout(what);
    }
    throw EndpointUnreachable(what);
  }
  if (res->status == 401 || res->status == 403) {
    throw AuthFailure("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 429 || res->status >= 500) {
    throw ServerError("HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BadResponse("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BadResponse(std::string("response is not JSON: ") + e.what());
  }
  if (doc.contains("text") && doc["text"].is_string()) return doc["text"].get<std::string>();
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    return doc["choices"][0].at("text").get<std::string>();
  }
  throw BadResponse("response has no 'text' field");
}

std::string HttpEndpoint::infill(const MaskInstance& instance, const ModelEndpointConfig& config) {
  nlohmann::ordered_json body;
  body["model"] = config.model_name;
  if (config.prompt_style == PromptStyle::SantaCoderFIM) {
    body["prompt"] = build_fim_prompt(instance, config.prompt_style);
  } else {
    body["prefix"] = instance.prefix;
    body["suffix"] = instance.suffix;
  }
  body["max_tokens"] = config.max_new_tokens;
  body["temperature"] = config.temperature;
  return post(body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), config);
}

std::string HttpEndpoint::continue_text(const std::string& prefix,
                                        const ModelEndpointConfig& config) {
  nlohmann::ordered_json body;
  body["model"] = config.model_name;
  body["prompt"] = prefix;
  body["max_tokens"] = config.max_new_tokens;
  body["temperature"] = config.temperature;
  return post(body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), config);
}

// --- mock ----------------------------------------------------------------

namespace {

char random_letter(Rng& rng) { return static_cast<char>('a' + rng.below(26)); }

std::string perturb(const std::string& target, Rng& rng) {
  std::string out = target;
  const std::size_t subs = std::min<std::size_t>(2, out.size());
  for (std::size_t k = 0; k < subs; ++k) {
    const auto pos = rng.below(out.size());
    char c = random_letter(rng);
    if (c == out[pos]) c = c == 'z' ? 'a' : static_cast<char>(c + 1);
    out[pos] = c;
  }
  for (int k = 0; k < 5; ++k) out.push_back(random_letter(rng));
  return out;
}

std::string paraphrase_code(std::string_view code, std::uint64_t seed) {
  const auto& words = common_words();
  std::string out;
  out.reserve(code.size() + code.size() / 2);
  std::size_t i = 0;
  while (i < code.size()) {
    const unsigned char c = static_cast<unsigned char>(code[i]);
    if (std::isdigit(c)) {
      while (i < code.size() && (std::isalnum(static_cast<unsigned char>(code[i])) ||
                                 code[i] == '_' || code[i] == '.')) {
        out.push_back(code[i++]);
      }
      continue;
    }
    if (!(std::isalpha(c) || c == '_')) {
      out.push_back(code[i++]);
      continue;
    }
    const std::size_t start = i;
    while (i < code.size() &&
           (std::isalnum(static_cast<unsigned char>(code[i])) || code[i] == '_')) {
      ++i;
    }
    const auto name = code.substr(start, i - start);
    if (is_python_keyword(name) || is_python_builtin(name)) {
      out.append(name);
      continue;
    }
    const auto h = derive_seed(seed, "rename", name);
    std::string renamed = words[h % words.size()] + "_" + words[(h >> 32) % words.size()];
    if (std::isupper(static_cast<unsigned char>(name[0]))) {
      renamed[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(renamed[0])));
    }
    out += renamed;
  }
  return out;
}

// An unseen script's element is guessed, not recalled: half the time the
// guess for a name is some identifier visible near the gap (as a real model
// would copy a name used a few lines later), otherwise a plausible fresh one.
std::string guess_unseen(const MaskInstance& instance, Rng& rng) {
  constexpr std::size_t kWindow = 400;
  if (!is_syntactic(instance.kind) || rng.below(2) == 0) {
    return make_semantic_text(rng, instance.kind);
  }
  std::vector<std::string> seen;
  auto collect = [&](std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
      const unsigned char c = static_cast<unsigned char>(text[i]);
      if (!(std::isalpha(c) || c == '_')) {
        ++i;
        if (std::isdigit(c)) {
          while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        }
        continue;
      }
      const std::size_t start = i;
      while (i < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
        ++i;
      }
      const auto name = text.substr(start, i - start);
      if (!is_python_keyword(name) && !is_python_builtin(name)) seen.emplace_back(name);
    }
  };
  const std::string_view prefix = instance.prefix, suffix = instance.suffix;
  // Cut windows at line boundaries so no identifier is split.
  auto head = prefix.substr(prefix.size() - std::min(prefix.size(), kWindow));
  if (auto nl = head.find('\n'); nl != std::string_view::npos && head.size() < prefix.size()) {
    head.remove_prefix(nl + 1);
  }
  auto tail = suffix.substr(0, std::min(suffix.size(), kWindow));
  if (auto nl = tail.rfind('\n'); nl != std::string_view::npos && tail.size() < suffix.size()) {
    tail = tail.substr(0, nl);
  }
  collect(head);
  collect(tail);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  if (seen.empty()) return make_identifier(rng, instance.kind);
  return rng.pick(seen);
}

std::string random_code(Rng& rng) {
  std::string out;
  const auto lines = rng.between(2, 6);
  for (std::int64_t k = 0; k < lines; ++k) {
    out += "    ";
    switch (rng.below(3)) {
      case 0:
        out += make_identifier(rng, IdentifierKind::Variable) + " = " +
               make_identifier(rng, IdentifierKind::Function) + "(" +
               make_identifier(rng, IdentifierKind::Variable) + ")";
        break;
      case 1:
        out += make_identifier(rng, IdentifierKind::Variable) + " += " +
               std::to_string(rng.between(1, 100));
        break;
      default:
        out += "return " + make_identifier(rng, IdentifierKind::Variable);
        break;
    }
    if (k + 1 < lines) out.push_back('\n');
  }
  return out;
}

std::pair<std::size_t, std::size_t> line_range_bytes(const std::string& source,
                                                     std::size_t first_line,
                                                     std::size_t last_line) {
  std::size_t line = 1, begin = 0;
  std::size_t pos = 0;
  while (line < first_line && pos < source.size()) {
    if (source[pos++] == '\n') ++line;
  }
  begin = pos;
  while (pos < source.size()) {
    if (source[pos] == '\n') {
      if (line == last_line) break;
      ++line;
    }
    ++pos;
  }
  return {begin, pos};
}

}  // namespace

MockModel::MockModel(const std::vector<ScriptRecord>& corpus, MockOptions options)
    : corpus_(corpus), options_(options) {
  if (!(options.memorization_rate >= 0.0 && options.memorization_rate <= 1.0)) {
    throw std::invalid_argument("memorization_rate must be in [0, 1]");
  }
  for (const auto& r : corpus_) {
    if (!r.trained_on) throw MissingLabel(r.script_id);
  }
  for (const auto& r : corpus_) {
    Entry entry{&r, {}};
    if (*r.trained_on) {
      try {
        for (const auto& b : find_top_level_blocks(r.source)) {
          entry.blocks.push_back(line_range_bytes(r.source, b.first_line, b.last_line));
        }
      } catch (const SyntaxError&) {
        // Unparsable scripts still answer infill queries.
      }
    }
    by_id_.emplace(r.script_id, std::move(entry));
  }
}

std::string MockModel::infill(const MaskInstance& instance, const ModelEndpointConfig& config) {
  Rng rng(derive_seed(options_.noise_seed, instance.script_id, to_string(instance.kind),
                      instance.target));
  const auto it = by_id_.find(instance.script_id);
  const bool trained = it != by_id_.end() && *it->second.record->trained_on;
  std::string out;
  if (!trained) {
    out = guess_unseen(instance, rng);
  } else if (rng.uniform01() < options_.memorization_rate) {
    out = instance.target;
  } else {
    out = perturb(instance.target, rng);
  }
  return truncate_completion(out, config.max_new_tokens);
}

std::string MockModel::continue_text(const std::string& prefix,
                                     const ModelEndpointConfig& config) {
  Rng rng(derive_seed(options_.noise_seed, "complete", prefix));
  std::string out;
  if (!prefix.empty()) {
    for (const auto& [id, entry] : by_id_) {
      const auto& src = entry.record->source;
      for (const auto& [begin, end] : entry.blocks) {
        if (end - begin < prefix.size() || src.compare(begin, prefix.size(), prefix) != 0) {
          continue;
        }
        if (rng.uniform01() < options_.memorization_rate) {
          auto rest = src.substr(begin + prefix.size(), end - begin - prefix.size());
          if (!rest.empty() && rest.front() == '\n') rest.erase(0, 1);
          out = options_.paraphrase ? paraphrase_code(rest, options_.noise_seed) : rest;
        } else {
          out = random_code(rng);
        }
        return truncate_completion(out, config.max_new_tokens);
      }
    }
  }
  return truncate_completion(random_code(rng), config.max_new_tokens);
}

std::unique_ptr<CompletionEndpoint> make_endpoint(const std::string& kind,
                                                  const std::vector<ScriptRecord>& corpus,
                                                  const MockOptions& mock) {
  if (kind == "http") return std::make_unique<HttpEndpoint>();
  if (kind == "mock") return std::make_unique<MockModel>(corpus, mock);
  if (kind == "echo") return std::make_unique<EchoModel>();
  throw std::invalid_argument("unknown endpoint kind: " + kind);
}

// --- batching --------------------------------------------------------------

namespace {

template <typename Fn>
std::string with_retries(const ModelEndpointConfig& config, Fn&& call) {
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const AuthFailure&) {
      throw;
    } catch (const BadResponse&) {
      throw;
    } catch (const std::runtime_error&) {
      if (attempt >= config.max_retries) throw;
      std::this_thread::sleep_for(config.backoff_base * (1LL << std::min(attempt, 16)));
    }
  }
}

std::string describe_error(const std::exception& e) {
  const char* kind = "Error";
  if (dynamic_cast<const AuthFailure*>(&e)) kind = "AuthFailure";
  else if (dynamic_cast<const Timeout*>(&e)) kind = "Timeout";
  else if (dynamic_cast<const EndpointUnreachable*>(&e)) kind = "EndpointUnreachable";
  else if (dynamic_cast<const ServerError*>(&e)) kind = "ServerError";
  else if (dynamic_cast<const BadResponse*>(&e)) kind = "BadResponse";
  return std::string(kind) + ": " + e.what();
}

}  // namespace

std::vector<ModelPrediction> predict_batch(CompletionEndpoint& endpoint,
                                           const ModelEndpointConfig& config,
                                           const std::vector<MaskInstance>& instances) {
  config.validate();
  std::vector<ModelPrediction> out(instances.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      const auto& inst = instances[i];
      auto& pred = out[i];
      pred.script_id = inst.script_id;
      pred.kind = inst.kind;
      pred.target = inst.target;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        pred.output = with_retries(config, [&] { return endpoint.infill(inst, config); });
      } catch (const std::exception& e) {
        pred.error = describe_error(e);
      }
      if (endpoint.measures_latency()) {
        pred.latency_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
      }
    }
  };
  const auto n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), instances.size());
  if (n_threads <= 1) {
    work();
    return out;
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  return out;
}

std::string generate_completion(CompletionEndpoint& endpoint, const ModelEndpointConfig& config,
                                const std::string& prefix) {
  config.validate();
  return with_retries(config, [&] { return endpoint.continue_text(prefix, config); });
}

// --- logs ------------------------------------------------------------------

namespace {
std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}
}  // namespace

void write_predictions_jsonl(const std::vector<ModelPrediction>& predictions, std::ostream& out) {
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["script_id"] = p.script_id;
    j["kind"] = to_string(p.kind);
    j["target"] = p.target;
    j["output"] = p.output;
    j["latency_ms"] = p.latency_ms;
    if (p.error) j["error"] = *p.error;
    out << dump_line(j) << '\n';
  }
}

std::vector<ModelPrediction> read_predictions_jsonl(std::istream& in) {
  std::vector<ModelPrediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ModelPrediction p;
      p.script_id = j.at("script_id").get<std::string>();
      p.kind = parse_kind(j.at("kind").get<std::string>());
      p.target = j.at("target").get<std::string>();
      p.output = j.value("output", "");
      p.latency_ms = j.value("latency_ms", 0.0);
      if (j.contains("error") && !j["error"].is_null()) p.error = j["error"].get<std::string>();
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error("prediction log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_instances_jsonl(const std::vector<MaskInstance>& instances, std::ostream& out) {
  for (const auto& m : instances) {
    nlohmann::ordered_json j;
    j["script_id"] = m.script_id;
    j["kind"] = to_string(m.kind);
    j["target"] = m.target;
    j["prefix"] = m.prefix;
    j["suffix"] = m.suffix;
    out << dump_line(j) << '\n';
  }
}

std::vector<MaskInstance> read_instances_jsonl(std::istream& in) {
  std::vector<MaskInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("script_id").get<std::string>(),
                     parse_kind(j.at("kind").get<std::string>()),
                     j.at("target").get<std::string>(), j.at("prefix").get<std::string>(),
                     j.at("suffix").get<std::string>()});
    } catch (const std::exception& e) {
      throw std::runtime_error("instance file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fimprobe
