#include "fimprobe/hits.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "fimprobe/util.hpp"

namespace fimprobe {

ScriptIndex make_script_index(const std::vector<ScriptRecord>& records) {
  ScriptIndex index;
  for (const auto& r : records) index[r.script_id] = ScriptInfo{r.project_id, r.trained_on};
  return index;
}

std::string project_of(const std::string& script_id, const ScriptIndex* index) {
  if (index) {
    if (auto it = index->find(script_id); it != index->end()) return it->second.project_id;
  }
  const auto slash = script_id.find('/');
  return slash == std::string::npos ? script_id : script_id.substr(0, slash);
}

std::vector<HitEvent> score_predictions(const std::vector<ModelPrediction>& predictions,
                                        SimilarityThreshold threshold) {
  std::vector<HitEvent> events;
  events.reserve(predictions.size());
  for (const auto& p : predictions) {
    if (!p.answered()) continue;
    events.push_back({p.script_id, p.kind, is_hit(p.kind, p.output, p.target, threshold)});
  }
  return events;
}

std::vector<HitVector> accumulate_events(const std::vector<HitEvent>& events,
                                         const ScriptIndex* index) {
  std::map<std::string, HitVector> by_script;
  for (const auto& e : events) {
    auto [it, inserted] = by_script.try_emplace(e.script_id);
    auto& hv = it->second;
    if (inserted) {
      hv.script_id = e.script_id;
      hv.project_id = project_of(e.script_id, index);
      if (index) {
        if (auto info = index->find(e.script_id); info != index->end()) {
          hv.trained_on = info->second.trained_on;
        }
      }
    }
    auto& c = hv.counts[feature_index(e.kind)];
    ++c.total;
    if (e.hit) ++c.hits;
  }
  std::vector<HitVector> out;
  out.reserve(by_script.size());
  for (auto& [id, hv] : by_script) {
    for (std::size_t k = 0; k < 6; ++k) {
      const auto& c = hv.counts[k];
      hv.rates[k] = c.total == 0 ? 0.0 : static_cast<double>(c.hits) / static_cast<double>(c.total);
    }
    out.push_back(std::move(hv));
  }
  return out;
}

std::vector<HitVector> accumulate_hits(const std::vector<ModelPrediction>& predictions,
                                       SimilarityThreshold threshold, const ScriptIndex* index) {
  return accumulate_events(score_predictions(predictions, threshold), index);
}

std::string_view to_string(NoiseTarget target) {
  switch (target) {
    case NoiseTarget::Syntactic: return "syntactic";
    case NoiseTarget::Semantic: return "semantic";
    case NoiseTarget::Combined: return "combined";
  }
  return "combined";
}

NoiseTarget parse_noise_target(std::string_view name) {
  for (auto t : {NoiseTarget::Syntactic, NoiseTarget::Semantic, NoiseTarget::Combined}) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown noise target: " + std::string(name));
}

namespace {
bool in_target(IdentifierKind kind, NoiseTarget target) {
  switch (target) {
    case NoiseTarget::Syntactic: return is_syntactic(kind);
    case NoiseTarget::Semantic: return !is_syntactic(kind);
    case NoiseTarget::Combined: return true;
  }
  return false;
}
}  // namespace

std::vector<HitEvent> inject_noise(const std::vector<HitEvent>& events, const NoiseSpec& spec) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
    throw std::invalid_argument("noise ratio must be in [0, 1]");
  }
  std::vector<HitEvent> out = events;
  Rng rng(derive_seed(spec.seed, "noise"));
  for (auto& e : out) {
    if (!e.hit || !in_target(e.kind, spec.target)) continue;
    if (rng.uniform01() < spec.ratio) e.hit = false;
  }
  return out;
}

std::vector<std::string> lexeme_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<MistakeRow> mistake_analysis(const std::vector<ModelPrediction>& predictions,
                                         const ScriptIndex& labels, double filtration_threshold) {
  if (!(filtration_threshold > 0.0 && filtration_threshold <= 1.0)) {
    throw std::invalid_argument("filtration threshold must be in (0, 1]");
  }
  std::unordered_map<std::string, std::size_t> freq;
  std::size_t total = 0;
  std::vector<std::vector<std::string>> outputs(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (!p.answered() || !is_syntactic(p.kind)) continue;
    outputs[i] = lexeme_tokens(p.output);
    for (const auto& t : outputs[i]) ++freq[t];
    total += outputs[i].size();
  }
  auto retained = [&](const std::string& token) {
    if (total == 0) return true;
    auto it = freq.find(token);
    const double f = it == freq.end() ? 0.0
                                      : static_cast<double>(it->second) / static_cast<double>(total);
    return f <= filtration_threshold;
  };

  std::map<std::pair<std::size_t, bool>, MistakeRow> cells;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (!p.answered() || !is_syntactic(p.kind)) continue;
    auto info = labels.find(p.script_id);
    if (info == labels.end() || !info->second.trained_on) continue;
    const bool label = *info->second.trained_on;
    auto& row = cells[{feature_index(p.kind), label}];
    row.kind = p.kind;
    row.trained_on = label;
    if (is_hit(p.kind, p.output, p.target, SimilarityThreshold(100))) continue;
    ++row.missed;
    const auto& toks = outputs[i];
    if (retained(p.target) && std::find(toks.begin(), toks.end(), p.target) != toks.end()) {
      ++row.contained;
    }
  }
  std::vector<MistakeRow> out;
  for (auto& [key, row] : cells) {
    row.percent = row.missed == 0 ? 0.0
                                  : 100.0 * static_cast<double>(row.contained) /
                                        static_cast<double>(row.missed);
    out.push_back(row);
  }
  return out;
}

std::string format_real(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_rate(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 0.0 || v > 1.0) {
    throw std::runtime_error("invalid hit rate '" + s + "'");
  }
  return v;
}

}  // namespace

void write_feature_csv(const std::vector<HitVector>& rows, std::ostream& out) {
  out << kFeatureCsvHeader << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.script_id);
    for (double rate : r.rates) out << ',' << format_real(rate);
    out << ',' << (r.trained_on ? (*r.trained_on ? "1" : "0") : "") << '\n';
  }
}

std::vector<HitVector> read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("feature CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kFeatureCsvHeader) throw std::runtime_error("unexpected feature CSV header: " + line);
  std::vector<HitVector> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = parse_csv_line(line);
    if (f.size() != 8) {
      throw std::runtime_error("feature CSV line " + std::to_string(lineno) + ": expected 8 fields");
    }
    HitVector hv;
    hv.script_id = f[0];
    hv.project_id = project_of(hv.script_id, nullptr);
    for (std::size_t k = 0; k < 6; ++k) hv.rates[k] = parse_rate(f[k + 1]);
    if (f[7] == "1" || f[7] == "true") {
      hv.trained_on = true;
    } else if (f[7] == "0" || f[7] == "false") {
      hv.trained_on = false;
    } else if (!f[7].empty()) {
      throw std::runtime_error("feature CSV line " + std::to_string(lineno) + ": bad trained_on");
    }
    rows.push_back(std::move(hv));
  }
  return rows;
}

void write_feature_jsonl(const std::vector<HitVector>& rows, std::ostream& out) {
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["script_name"] = r.script_id;
    j["project_id"] = r.project_id;
    for (auto kind : kFeatureOrder) j[std::string(to_string(kind)) + "_hits"] = r.rate(kind);
    j["trained_on"] =
        r.trained_on ? nlohmann::ordered_json(*r.trained_on) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json counts;
    for (auto kind : kFeatureOrder) {
      counts[std::string(to_string(kind))] = {{"hits", r.count(kind).hits},
                                              {"total", r.count(kind).total}};
    }
    j["counts"] = counts;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
}

std::vector<HitVector> read_feature_jsonl(std::istream& in) {
  std::vector<HitVector> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    HitVector hv;
    hv.script_id = j.at("script_name").get<std::string>();
    hv.project_id = j.value("project_id", project_of(hv.script_id, nullptr));
    for (auto kind : kFeatureOrder) {
      const auto key = std::string(to_string(kind));
      hv.rates[feature_index(kind)] = j.at(key + "_hits").get<double>();
      if (j.contains("counts")) {
        const auto& c = j["counts"].at(key);
        hv.counts[feature_index(kind)] = {c.at("hits").get<std::size_t>(),
                                          c.at("total").get<std::size_t>()};
      }
    }
    if (!j.at("trained_on").is_null()) hv.trained_on = j["trained_on"].get<bool>();
    rows.push_back(std::move(hv));
  }
  return rows;
}

}  // namespace fimprobe
