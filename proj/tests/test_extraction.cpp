#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fimprobe/corpus.hpp"
#include "fimprobe/extraction.hpp"

namespace fimprobe {
namespace {

const char* const kSample = R"(def print_input_string(input_string):
    """
    This function prints the input string.
    Args:
        input_string(str): the string to be printed
    """
    # store the input string in a variable
    dummy_variable  = input_string
    # print the input string
    print(input_string)

def add_variables(a, b):
    """
    This function adds two variables.
    Args:
        a (float): first variable
        b (float): second variable
    Returns:
        float: result of the addition
    """
    # add the two variables and
    # store the result in a new variable
    c = a + b
    # return the result
    return c

print_input_string("hello World!")

result = add_variables(a=1, b=2)
)";

ScriptRecord record(std::string source, std::string id = "p/s.py") {
  ScriptRecord r;
  r.script_id = std::move(id);
  r.project_id = "p";
  r.relative_path = r.script_id;
  r.source = std::move(source);
  return r;
}

std::vector<std::string> texts_of(const std::vector<ExtractedIdentifier>& ids, IdentifierKind k) {
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (id.kind == k) out.push_back(id.text);
  }
  return out;
}

TEST(ParseScript, SampleScriptElements) {
  const auto ids = parse_script(record(kSample));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Variable),
            (std::vector<std::string>{"dummy_variable", "a", "b", "c", "result"}));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Function),
            (std::vector<std::string>{"print_input_string", "add_variables"}));
  EXPECT_TRUE(texts_of(ids, IdentifierKind::Class).empty());
  EXPECT_EQ(texts_of(ids, IdentifierKind::String), (std::vector<std::string>{"hello World!"}));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Comment),
            (std::vector<std::string>{
                "store the input string in a variable", "print the input string",
                "add the two variables and store the result in a new variable",
                "return the result"}));
  const auto docs = texts_of(ids, IdentifierKind::Docstring);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0],
            "This function prints the input string.\nArgs:\n    input_string(str): the string to "
            "be printed");
  EXPECT_TRUE(starts_with(docs[1], "This function adds two variables.\nArgs:\n    a (float)"));
  EXPECT_NE(docs[1].find("Returns:\n    float: result of the addition"), std::string::npos);
}

TEST(ParseScript, EmptyModule) { EXPECT_TRUE(parse_script(record("")).empty()); }

TEST(ParseScript, DuplicateNameKeepsFirstOccurrence) {
  const auto ids = parse_script(record("x = 1\nx = 2\n"));
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0].kind, IdentifierKind::Variable);
  EXPECT_EQ(ids[0].text, "x");
  EXPECT_EQ(ids[0].begin, 0u);
  EXPECT_EQ(ids[0].end, 1u);
}

TEST(ParseScript, ClassesAndBindingForms) {
  const std::string src =
      "class Shape(object):\n"
      "    '''A shape.'''\n"
      "    def area(self, scale=2):\n"
      "        total: int = 0\n"
      "        for idx, item in enumerate(self.parts):\n"
      "            total += item\n"
      "        with open('f') as handle:\n"
      "            pass\n"
      "        return total\n";
  const auto ids = parse_script(record(src));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Class), (std::vector<std::string>{"Shape"}));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Function), (std::vector<std::string>{"area"}));
  EXPECT_EQ(texts_of(ids, IdentifierKind::Docstring), (std::vector<std::string>{"A shape."}));
  EXPECT_EQ(texts_of(ids, IdentifierKind::String), (std::vector<std::string>{"f"}));
  const auto vars = texts_of(ids, IdentifierKind::Variable);
  for (const char* v : {"total", "idx", "item", "handle"}) {
    EXPECT_NE(std::find(vars.begin(), vars.end(), v), vars.end()) << v;
  }
  EXPECT_EQ(std::find(vars.begin(), vars.end(), "scale"), vars.end());

  ExtractionOptions with_params;
  with_params.include_parameters = true;
  const auto vars2 = texts_of(parse_script(record(src), with_params), IdentifierKind::Variable);
  EXPECT_NE(std::find(vars2.begin(), vars2.end(), "scale"), vars2.end());
}

TEST(ParseScript, MinimumLengthFilter) {
  ExtractionOptions opts;
  opts.min_identifier_len = 2;
  const auto vars = texts_of(parse_script(record(kSample), opts), IdentifierKind::Variable);
  EXPECT_EQ(vars, (std::vector<std::string>{"dummy_variable", "result"}));
}

TEST(ParseScript, SyntaxErrorsCarryAPosition) {
  for (const char* bad : {"def f(:\n    pass\n", "x = (1, 2\n", "if x\n    y = 1\n",
                          "s = 'unterminated\n", "def g():\nreturn 1\n"}) {
    try {
      parse_script(record(bad));
      ADD_FAILURE() << "accepted: " << bad;
    } catch (const SyntaxError& e) {
      EXPECT_GE(e.line(), 1u) << bad;
    }
  }
}

TEST(MaskInstances, SampleScriptGivesFourteen) {
  const auto rec = record(kSample);
  const auto ids = parse_script(rec);
  const auto inst = make_mask_instances(rec, ids);
  ASSERT_EQ(inst.size(), 14u);
  std::array<int, 6> per{};
  for (const auto& i : inst) ++per[static_cast<std::size_t>(i.kind)];
  EXPECT_EQ(per, (std::array<int, 6>{5, 2, 0, 1, 4, 2}));
}

TEST(MaskInstances, VariableContextMatchesListing) {
  const auto rec = record(kSample);
  const auto inst = make_mask_instances(rec, parse_script(rec));
  auto it = std::find_if(inst.begin(), inst.end(),
                         [](const MaskInstance& m) { return m.target == "dummy_variable"; });
  ASSERT_NE(it, inst.end());
  EXPECT_TRUE(it->prefix.ends_with("# store the input string in a variable\n    "));
  EXPECT_TRUE(starts_with(it->suffix, "  = input_string"));
}

TEST(MaskInstances, BoundaryElement) {
  const auto rec = record("x=1");
  const auto inst = make_mask_instances(rec, parse_script(rec));
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].prefix, "");
  EXPECT_EQ(inst[0].target, "x");
  EXPECT_EQ(inst[0].suffix, "=1");
}

// Property: every instance reconstructs its source, targets are non-empty, no
// duplicate (kind, text), and parsing is deterministic.
TEST(MaskInstances, ReconstructionOverGeneratedScripts) {
  Rng rng(2024);
  for (int n = 0; n < 60; ++n) {
    const auto rec = record(generate_python_script(rng), "gen/" + std::to_string(n) + ".py");
    const auto ids = parse_script(rec);
    ASSERT_EQ(ids, parse_script(rec));
    const auto inst = make_mask_instances(rec, ids);
    ASSERT_EQ(inst.size(), ids.size());
    std::set<std::pair<IdentifierKind, std::string>> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ASSERT_LT(ids[i].begin, ids[i].end);
      ASSERT_LE(ids[i].end, rec.source.size());
      ASSERT_FALSE(inst[i].target.empty());
      ASSERT_TRUE(seen.insert({ids[i].kind, ids[i].text}).second) << ids[i].text;
      const auto span = rec.source.substr(ids[i].begin, ids[i].end - ids[i].begin);
      ASSERT_EQ(inst[i].prefix + span + inst[i].suffix, rec.source);
      if (ids[i].kind != IdentifierKind::Comment && ids[i].kind != IdentifierKind::Docstring) {
        ASSERT_EQ(span, ids[i].text);
      }
    }
  }
}

MaskInstance with_context(std::size_t prefix_len, std::size_t suffix_len) {
  MaskInstance m;
  m.script_id = "s";
  m.target = "T";
  for (std::size_t i = 0; i < prefix_len; ++i) m.prefix.push_back(static_cast<char>('a' + i % 26));
  for (std::size_t i = 0; i < suffix_len; ++i) m.suffix.push_back(static_cast<char>('A' + i % 26));
  return m;
}

TEST(ContextBudget, UnderBudgetIsIdentity) {
  MaskInstance m;
  m.target = "x";
  m.prefix = "abc";
  m.suffix = "de";
  EXPECT_EQ(apply_context_budget(m, 1000), m);
}

TEST(ContextBudget, ProportionalSplit) {
  const auto m = with_context(900, 300);
  const auto out = apply_context_budget(m, 400);
  EXPECT_EQ(out.prefix, m.prefix.substr(600));
  EXPECT_EQ(out.suffix, m.suffix.substr(0, 100));
}

TEST(ContextBudget, EmptyPrefix) {
  const auto m = with_context(0, 500);
  const auto out = apply_context_budget(m, 100);
  EXPECT_EQ(out.prefix, "");
  EXPECT_EQ(out.suffix, m.suffix.substr(0, 100));
}

TEST(ContextBudget, KeepsTextNearestTheMask) {
  Rng rng(9);
  for (int i = 0; i < 300; ++i) {
    const auto m = with_context(rng.below(2000), rng.below(2000));
    const std::size_t budget = 64 + rng.below(1500);
    const auto out = apply_context_budget(m, budget);
    if (m.prefix.size() + m.suffix.size() <= budget) {
      ASSERT_EQ(out, m);
      continue;
    }
    ASSERT_LE(out.prefix.size() + out.suffix.size(), budget);
    ASSERT_TRUE(m.prefix.ends_with(out.prefix));
    ASSERT_TRUE(starts_with(m.suffix, out.suffix));
    ASSERT_EQ(out.target, m.target);
  }
}

TEST(ContextBudget, NeverSplitsUtf8) {
  MaskInstance m;
  m.target = "x";
  for (int i = 0; i < 100; ++i) m.prefix += "\xC3\xA9";  // é
  m.suffix = "";
  const auto out = apply_context_budget(m, 65);
  EXPECT_LE(out.prefix.size(), 65u);
  EXPECT_EQ(out.prefix.size() % 2, 0u);
}

TEST(Finetune, SampleRecordAndRoundTrip) {
  const auto rec = record(kSample);
  const auto inst = make_mask_instances(rec, parse_script(rec));
  std::ostringstream out;
  export_finetune_records(inst, out);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 14);
  EXPECT_NE(text.find("\"infill\":\"dummy_variable\""), std::string::npos);

  std::istringstream in(text);
  const auto back = import_finetune_records(in);
  ASSERT_EQ(back.size(), inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    EXPECT_EQ(back[i], (FinetuneRecord{inst[i].prefix, inst[i].target, inst[i].suffix}));
  }

  std::ostringstream empty;
  export_finetune_records({}, empty);
  EXPECT_EQ(empty.str(), "");
}

TEST(CleanDocstring, MatchesPythonCleandoc) {
  EXPECT_EQ(clean_docstring("\n    Summary.\n\n    Detail\n        nested\n    "),
            "Summary.\n\nDetail\n    nested");
  EXPECT_EQ(clean_docstring("One line."), "One line.");
  EXPECT_EQ(clean_docstring("First\n   second"), "First\nsecond");
}

TEST(TopLevelBlocks, FindsDefsAndClasses) {
  const auto blocks = find_top_level_blocks(kSample);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].name, "print_input_string");
  EXPECT_EQ(blocks[0].first_line, 1u);
  EXPECT_EQ(blocks[0].last_line, 10u);
  EXPECT_EQ(blocks[1].name, "add_variables");
  EXPECT_EQ(blocks[1].first_line, 12u);
  EXPECT_FALSE(blocks[1].is_class);
}

}  // namespace
}  // namespace fimprobe
