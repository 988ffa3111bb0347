#include "fimprobe/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace fimprobe {

const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words = {
      "data",    "value",   "result",  "item",    "index",   "count",   "total",   "name",
      "path",    "file",    "line",    "text",    "key",     "config",  "user",    "list",
      "table",   "record",  "row",     "column",  "size",    "length",  "offset",  "buffer",
      "cache",   "state",   "status",  "error",   "message", "request", "response", "client",
      "server",  "node",    "edge",    "graph",   "tree",    "queue",   "stack",   "token",
      "score",   "weight",  "label",   "model",   "batch",   "input",   "output",  "source",
      "target",  "start",   "end",     "limit",   "page",    "query",   "event",   "handler",
      "task",    "job",     "worker",  "timer",   "delay",   "image",   "pixel",   "frame",
      "report",  "summary", "field",   "entry",   "option",  "setting", "account", "order",
      "price",   "amount",  "date",    "time",    "number",  "word",    "char",    "header",
      "payload", "session", "context", "parser",  "reader",  "writer",  "loader",  "builder",
      "manager", "service", "factory", "helper",  "matrix",  "vector",  "point",   "shape"};
  return words;
}

bool is_python_builtin(std::string_view name) {
  static const std::set<std::string, std::less<>> builtins = {
      "abs",       "all",        "any",       "bool",     "bytes",     "callable", "chr",
      "dict",      "dir",        "enumerate", "filter",   "float",     "format",   "getattr",
      "hasattr",   "hash",       "id",        "input",    "int",       "isinstance",
      "issubclass", "iter",      "len",       "list",     "map",       "max",      "min",
      "next",      "object",     "open",      "ord",      "pow",       "print",    "range",
      "repr",      "reversed",   "round",     "set",      "setattr",   "slice",    "sorted",
      "staticmethod", "classmethod", "property", "str",    "sum",       "super",    "tuple",
      "type",      "vars",       "zip",       "self",     "cls",       "Exception", "ValueError",
      "TypeError", "KeyError",   "IndexError", "RuntimeError", "NotImplementedError",
      "os",        "sys",        "json",      "math",     "re",        "time",     "random",
      "collections", "itertools", "functools", "typing",  "pathlib",   "logging",  "append",
      "extend",    "items",      "keys",      "values",   "get",       "join",     "split",
      "strip",     "lower",      "upper",     "replace",  "startswith", "endswith", "update",
      "pop",       "__init__",   "__name__",  "__main__", "__repr__",  "__str__",  "__eq__"};
  return builtins.count(name) > 0;
}

std::string make_identifier(Rng& rng, IdentifierKind kind) {
  const auto& words = common_words();
  const std::size_t n = rng.below(3) == 0 ? 1 : 2;
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string w = rng.pick(words);
    if (kind == IdentifierKind::Class) {
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    } else if (i > 0) {
      out.push_back('_');
    }
    out += w;
  }
  if (kind == IdentifierKind::Function && n == 1) {
    static const std::vector<std::string> verbs = {"get", "load", "parse", "build", "compute",
                                                   "update", "check", "make", "read", "write"};
    out = rng.pick(verbs) + "_" + out;
  }
  return out;
}

std::string make_phrase(Rng& rng, std::size_t min_words, std::size_t max_words) {
  static const std::vector<std::string> glue = {"the", "a", "of", "for", "to", "and", "in",
                                                "with", "from", "each", "new", "all"};
  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(min_words), static_cast<std::int64_t>(max_words)));
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out.push_back(' ');
    out += rng.below(3) == 0 ? rng.pick(glue) : rng.pick(common_words());
  }
  return out;
}

std::string make_semantic_text(Rng& rng, IdentifierKind kind) {
  switch (kind) {
    case IdentifierKind::String: return make_phrase(rng, 1, 4);
    case IdentifierKind::Comment: return make_phrase(rng, 3, 8);
    case IdentifierKind::Docstring: {
      auto text = make_phrase(rng, 4, 10);
      text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
      return text + ".";
    }
    default: return make_identifier(rng, kind);
  }
}

}  // namespace fimprobe
