#include "fimprobe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fimprobe/python_lexer.hpp"
#include "fimprobe/vocabulary.hpp"

namespace fimprobe {

namespace {

class ScriptWriter {
 public:
  explicit ScriptWriter(Rng& rng) : rng_(rng) {}

  std::string fresh(IdentifierKind kind) {
    for (;;) {
      auto name = make_identifier(rng_, kind);
      if (is_python_keyword(name) || is_python_builtin(name)) continue;
      if (used_.insert(name).second) return name;
    }
  }

  std::string phrase(std::size_t lo, std::size_t hi) { return make_phrase(rng_, lo, hi); }
  bool chance(double p) { return rng_.uniform01() < p; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) { return rng_.between(lo, hi); }
  const std::string& pick(const std::vector<std::string>& v) { return rng_.pick(v); }

  void line(int indent, const std::string& text) {
    out_.append(static_cast<std::size_t>(indent) * 4, ' ');
    out_ += text;
    out_.push_back('\n');
  }
  void blank() { out_.push_back('\n'); }
  void docstring(int indent) {
    auto text = make_semantic_text(rng_, IdentifierKind::Docstring);
    if (chance(0.5)) {
      line(indent, "\"\"\"" + text + "\"\"\"");
    } else {
      line(indent, "\"\"\"");
      line(indent, text);
      if (chance(0.5)) {
        line(indent, "");
        line(indent, "Returns:");
        line(indent + 1, phrase(2, 5));
      }
      line(indent, "\"\"\"");
    }
  }
  void comment(int indent) { line(indent, "# " + phrase(3, 8)); }

  // A few statements that define and use local variables.
  void body(int indent, std::vector<std::string> locals, const std::vector<std::string>& callees) {
    if (locals.empty()) locals.push_back(std::to_string(between(1, 9)));
    auto operand = [&] {
      return chance(0.8) ? pick(locals) : std::to_string(between(1, 100));
    };
    const auto n = between(2, 5);
    for (std::int64_t s = 0; s < n; ++s) {
      if (chance(0.3)) comment(indent);
      const auto v = fresh(IdentifierKind::Variable);
      switch (rng_.below(6)) {
        case 0:
          line(indent, v + " = " + operand() + " " + pick(kOps) + " " + operand());
          break;
        case 1: {
          const std::string callee =
              callees.empty() || chance(0.4) ? fresh(IdentifierKind::Function) : pick(callees);
          line(indent, v + " = " + callee + "(" + operand() + ", \"" + phrase(1, 4) + "\")");
          break;
        }
        case 2: {
          const auto x = fresh(IdentifierKind::Variable);
          line(indent, v + " = [" + x + " * " + std::to_string(between(2, 9)) + " for " + x +
                           " in range(" + operand() + ")]");
          break;
        }
        case 3: {
          const auto item = fresh(IdentifierKind::Variable);
          line(indent, v + " = 0");
          line(indent, "for " + item + " in range(" + operand() + "):");
          line(indent + 1, v + " += " + item);
          break;
        }
        case 4:
          line(indent, v + " = \"" + phrase(1, 4) + "\"");
          if (chance(0.5)) line(indent, "print(" + v + ", " + operand() + ")");
          break;
        default:
          line(indent, v + " = " + operand());
          line(indent, "if " + v + " > " + std::to_string(between(1, 50)) + ":");
          if (chance(0.4)) comment(indent + 1);
          line(indent + 1, v + " = " + v + " - " + operand());
          break;
      }
      locals.push_back(v);
    }
    line(indent, "return " + locals.back());
  }

  std::string take() { return std::move(out_); }

 private:
  inline static const std::vector<std::string> kOps = {"+", "-", "*", "//", "%"};
  Rng& rng_;
  std::set<std::string> used_;
  std::string out_;
};

}  // namespace

std::string generate_python_script(Rng& rng) {
  static const std::vector<std::string> modules = {"os", "sys", "json", "math", "re",
                                                   "time", "random", "logging"};
  ScriptWriter w(rng);
  if (w.chance(0.5)) {
    w.docstring(0);
    w.blank();
  }
  const auto n_imports = w.between(0, 2);
  for (std::int64_t i = 0; i < n_imports; ++i) w.line(0, "import " + w.pick(modules));
  if (n_imports > 0) w.blank();
  const auto n_globals = w.between(0, 2);
  for (std::int64_t i = 0; i < n_globals; ++i) {
    if (w.chance(0.3)) w.comment(0);
    const auto name = w.fresh(IdentifierKind::Variable);
    w.line(0, name + " = " +
                  (w.chance(0.5) ? "\"" + w.phrase(1, 4) + "\"" : std::to_string(w.between(1, 999))));
  }
  if (n_globals > 0) w.blank();

  std::vector<std::string> functions;
  if (w.chance(0.4)) {
    const auto cls = w.fresh(IdentifierKind::Class);
    w.blank();
    w.line(0, "class " + cls + ":");
    if (w.chance(0.6)) w.docstring(1);
    const auto a = w.fresh(IdentifierKind::Variable), b = w.fresh(IdentifierKind::Variable);
    w.line(1, "def __init__(self, " + a + ", " + b + "):");
    w.line(2, "self." + a + " = " + a);
    w.line(2, "self." + b + " = " + b);
    const auto n_methods = w.between(1, 2);
    for (std::int64_t m = 0; m < n_methods; ++m) {
      w.blank();
      const auto method = w.fresh(IdentifierKind::Function);
      const auto p = w.fresh(IdentifierKind::Variable);
      w.line(1, "def " + method + "(self, " + p + "):");
      if (w.chance(0.4)) w.docstring(2);
      w.body(2, {p, "self." + a}, functions);
    }
    w.blank();
  }
  const auto n_functions = w.between(1, 3);
  for (std::int64_t f = 0; f < n_functions; ++f) {
    w.blank();
    const auto name = w.fresh(IdentifierKind::Function);
    std::vector<std::string> params;
    const auto n_params = w.between(0, 3);
    for (std::int64_t p = 0; p < n_params; ++p) params.push_back(w.fresh(IdentifierKind::Variable));
    std::string sig;
    for (const auto& p : params) sig += (sig.empty() ? "" : ", ") + p;
    w.line(0, "def " + name + "(" + sig + "):");
    if (w.chance(0.5)) w.docstring(1);
    w.body(1, params, functions);
    functions.push_back(name);
  }
  if (w.chance(0.5)) {
    w.blank();
    w.blank();
    w.line(0, "if __name__ == \"__main__\":");
    const auto v = w.fresh(IdentifierKind::Variable);
    w.line(1, v + " = " + functions.back() + "(" + ")");
    w.line(1, "print(" + v + ")");
  }
  return w.take();
}

std::vector<ScriptRecord> generate_synthetic_corpus(const SyntheticCorpusOptions& options) {
  if (options.min_scripts < 1 || options.min_scripts > options.max_scripts) {
    throw std::invalid_argument("invalid script count range");
  }
  if (!(options.trained_fraction >= 0.0 && options.trained_fraction <= 1.0)) {
    throw std::invalid_argument("trained_fraction must be in [0, 1]");
  }
  Rng rng(derive_seed(options.seed, "corpus"));
  std::vector<bool> trained(options.n_projects, false);
  const auto n_trained = static_cast<std::size_t>(
      std::llround(options.trained_fraction * static_cast<double>(options.n_projects)));
  for (std::size_t p = 0; p < n_trained; ++p) trained[p] = true;
  rng.shuffle(trained);

  std::vector<ScriptRecord> out;
  for (std::size_t p = 0; p < options.n_projects; ++p) {
    char project[32];
    std::snprintf(project, sizeof(project), "project_%03zu", p);
    const auto n = static_cast<std::size_t>(rng.between(
        static_cast<std::int64_t>(options.min_scripts), static_cast<std::int64_t>(options.max_scripts)));
    for (std::size_t s = 0; s < n; ++s) {
      char file[32];
      std::snprintf(file, sizeof(file), "module_%03zu.py", s);
      ScriptRecord r;
      r.project_id = project;
      r.relative_path = std::string(project) + "/" + file;
      r.script_id = r.relative_path;
      r.source = generate_python_script(rng);
      r.trained_on = trained[p];
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

std::optional<bool> parse_label(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw std::runtime_error(where + ": bad trained_on value '" + s + "'");
}

std::vector<ScriptRecord> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<ScriptRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (!header_seen) {
      header_seen = true;
      if (!f.empty() && f[0] == "script_id") continue;
    }
    const auto where = manifest.string() + ":" + std::to_string(lineno);
    if (f.size() < 3) throw std::runtime_error(where + ": expected at least 3 tab-separated fields");
    ScriptRecord r;
    r.script_id = f[0];
    r.project_id = f[1];
    r.relative_path = f[2];
    r.source = read_file(base / f[2]);
    if (f.size() > 3) r.trained_on = parse_label(f[3], where);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<ScriptRecord> load_corpus(const std::filesystem::path& path,
                                      std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw std::runtime_error("corpus path does not exist: " + path.string());
  if (fs::is_regular_file(path)) return load_manifest(path);
  if (fs::exists(path / "manifest.tsv")) return load_manifest(path / "manifest.tsv");

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ScriptRecord> out;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, path).generic_string();
    if (f.extension() != ".py") {
      if (warnings) warnings->push_back("skipping non-Python file " + rel);
      continue;
    }
    ScriptRecord r;
    r.script_id = rel;
    r.relative_path = rel;
    const auto slash = rel.find('/');
    r.project_id = slash == std::string::npos ? std::string(".") : rel.substr(0, slash);
    r.source = read_file(f);
    out.push_back(std::move(r));
  }
  if (out.empty() && warnings) warnings->push_back("corpus contains no Python scripts");
  return out;
}

void write_corpus(const std::vector<ScriptRecord>& records, const std::filesystem::path& root) {
  std::ostringstream manifest;
  manifest << "script_id\tproject_id\tpath\ttrained_on\n";
  for (const auto& r : records) {
    write_file(root / r.relative_path, r.source);
    manifest << r.script_id << '\t' << r.project_id << '\t' << r.relative_path << '\t'
             << (r.trained_on ? (*r.trained_on ? "1" : "0") : "") << '\n';
  }
  write_file(root / "manifest.tsv", manifest.str());
}

}  // namespace fimprobe
