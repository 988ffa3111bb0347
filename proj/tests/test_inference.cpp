#include <gtest/gtest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fimprobe/extraction.hpp"
#include "fimprobe/inference.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {
namespace {

MaskInstance instance(std::string script, IdentifierKind kind, std::string target) {
  MaskInstance m;
  m.script_id = std::move(script);
  m.kind = kind;
  m.target = std::move(target);
  m.prefix = "def f():\n    ";
  m.suffix = " = 3\n    return 1\n";
  return m;
}

ScriptRecord script(std::string id, bool trained, std::string source = "x = 1\n") {
  ScriptRecord r;
  r.script_id = std::move(id);
  r.project_id = "p";
  r.source = std::move(source);
  r.trained_on = trained;
  return r;
}

TEST(Prompt, FimLayout) {
  MaskInstance m;
  m.prefix = "A";
  m.suffix = "B";
  EXPECT_EQ(build_fim_prompt(m, PromptStyle::SantaCoderFIM), "<fim-prefix>A<fim-suffix>B<fim-middle>");
  EXPECT_EQ(build_fim_prompt(m, PromptStyle::RawTripleField), "A");
  EXPECT_EQ(parse_prompt_style(to_string(PromptStyle::RawTripleField)), PromptStyle::RawTripleField);
  EXPECT_THROW(parse_prompt_style("chat"), std::invalid_argument);
}

TEST(Config, Validation) {
  ModelEndpointConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.temperature = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_retries = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Truncate, SentinelAndChunkLimit) {
  EXPECT_EQ(truncate_completion("abc<|endoftext|>junk", 10), "abc");
  EXPECT_EQ(truncate_completion("one two three", 1), "one");
  EXPECT_EQ(truncate_completion("one two three", 2), "one two");
  EXPECT_EQ(truncate_completion("one two", 5), "one two");
  EXPECT_EQ(truncate_completion("", 3), "");
}

TEST(Mock, FullRecallReproducesTrainedTargets) {
  std::vector<ScriptRecord> corpus{script("p/t.py", true), script("p/u.py", false)};
  MockModel mock(corpus, {1.0, 7, false});
  const ModelEndpointConfig cfg;
  for (auto k : kAllKinds) {
    EXPECT_EQ(mock.infill(instance("p/t.py", k, "dummy_variable"), cfg), "dummy_variable");
  }
  EXPECT_FALSE(mock.measures_latency());
}

TEST(Mock, ZeroRecallNeverExact) {
  std::vector<ScriptRecord> corpus{script("p/t.py", true)};
  MockModel mock(corpus, {0.0, 7, false});
  for (int i = 0; i < 100; ++i) {
    const auto target = "name_" + std::to_string(i);
    EXPECT_NE(mock.infill(instance("p/t.py", IdentifierKind::Variable, target), {}), target);
  }
}

TEST(Mock, Deterministic) {
  std::vector<ScriptRecord> corpus{script("p/t.py", true), script("p/u.py", false)};
  MockModel a(corpus, {0.5, 3, false}), b(corpus, {0.5, 3, false});
  for (int i = 0; i < 50; ++i) {
    const auto inst = instance(i % 2 ? "p/t.py" : "p/u.py", kAllKinds[i % 6], "t" + std::to_string(i));
    EXPECT_EQ(a.infill(inst, {}), b.infill(inst, {}));
  }
  EXPECT_EQ(a.continue_text("def f", {}), b.continue_text("def f", {}));
}

TEST(Mock, UnseenScriptsRarelyMatchSyntacticTargets) {
  std::vector<ScriptRecord> corpus{script("p/u.py", false)};
  MockModel mock(corpus, {0.9, 1, false});
  int exact = 0;
  for (int i = 0; i < 200; ++i) {
    const auto t = "unusual_name_" + std::to_string(i);
    exact += mock.infill(instance("p/u.py", IdentifierKind::Function, t), {}) == t;
  }
  EXPECT_EQ(exact, 0);
}

TEST(Mock, RequiresLabels) {
  std::vector<ScriptRecord> corpus{script("p/t.py", true)};
  corpus.push_back(script("p/x.py", false));
  corpus.back().trained_on.reset();
  try {
    MockModel mock(corpus, {});
    FAIL() << "accepted unlabeled script";
  } catch (const MissingLabel& e) {
    EXPECT_EQ(e.script_id, "p/x.py");
  }
  EXPECT_THROW(MockModel(std::vector<ScriptRecord>{}, {1.5, 0, false}), std::invalid_argument);
}

TEST(Mock, ContinuesMemorizedBlocks) {
  const std::string src = "def add(a, b):\n    c = a + b\n    return c\n\nx = add(1, 2)\n";
  std::vector<ScriptRecord> corpus{script("p/t.py", true, src)};
  MockModel exact(corpus, {1.0, 2, false});
  ModelEndpointConfig cfg;
  cfg.max_new_tokens = 512;
  EXPECT_EQ(exact.continue_text("def add(a, b):", cfg), "    c = a + b\n    return c");

  MockModel renamed(corpus, {1.0, 2, true});
  const auto para = renamed.continue_text("def add(a, b):", cfg);
  EXPECT_NE(para, "    c = a + b\n    return c");
  EXPECT_NE(para.find("return"), std::string::npos);
}

TEST(Batch, AlignedWithInputAndCapturesErrors) {
  class Flaky : public CompletionEndpoint {
   public:
    std::string infill(const MaskInstance& m, const ModelEndpointConfig&) override {
      if (m.target == "bad") throw EndpointUnreachable("down");
      if (m.target == "auth") throw AuthFailure("denied");
      return m.target + "!";
    }
    std::string continue_text(const std::string&, const ModelEndpointConfig&) override {
      return {};
    }
  } flaky;
  std::vector<MaskInstance> in;
  for (int i = 0; i < 40; ++i) in.push_back(instance("s", IdentifierKind::Variable, "t" + std::to_string(i)));
  in[7].target = "bad";
  in[9].target = "auth";
  ModelEndpointConfig cfg;
  cfg.batch_size = 4;
  cfg.max_retries = 1;
  cfg.backoff_base = std::chrono::milliseconds(1);
  const auto out = predict_batch(flaky, cfg, in);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].target, in[i].target);
    if (i == 7 || i == 9) continue;
    EXPECT_TRUE(out[i].answered());
    EXPECT_EQ(out[i].output, in[i].target + "!");
  }
  ASSERT_TRUE(out[7].error);
  EXPECT_TRUE(starts_with(*out[7].error, "EndpointUnreachable"));
  ASSERT_TRUE(out[9].error);
  EXPECT_TRUE(starts_with(*out[9].error, "AuthFailure"));
}

TEST(Logs, PredictionAndInstanceRoundTrip) {
  std::vector<ModelPrediction> preds(2);
  preds[0] = {"p/a.py", IdentifierKind::Comment, "tgt", "out\n\"q\"", 1.5, std::nullopt};
  preds[1] = {"p/b.py", IdentifierKind::Class, "C", "", 0.0, std::string("Timeout: slow")};
  std::stringstream s;
  write_predictions_jsonl(preds, s);
  EXPECT_EQ(read_predictions_jsonl(s), preds);

  std::vector<MaskInstance> inst{instance("p/a.py", IdentifierKind::Docstring, "Doc.\n  more")};
  std::stringstream t;
  write_instances_jsonl(inst, t);
  EXPECT_EQ(read_instances_jsonl(t), inst);
}

// A local completion server; each test installs its own handler.
class HttpFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
  }
  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  ModelEndpointConfig config() const {
    ModelEndpointConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions";
    c.request_timeout = std::chrono::milliseconds(2000);
    c.backoff_base = std::chrono::milliseconds(1);
    c.max_retries = 2;
    c.batch_size = 1;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpFixture, SendsFimPromptAndParsesText) {
  std::string seen_body, seen_auth;
  server_.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"text": "dummy_variable"})", "application/json");
  });
  start();
  auto cfg = config();
  cfg.auth_token = "sekret";
  HttpEndpoint http;
  EXPECT_EQ(http.infill(instance("s", IdentifierKind::Variable, "x"), cfg), "dummy_variable");
  const auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body.at("prompt"), build_fim_prompt(instance("s", IdentifierKind::Variable, "x"),
                                                PromptStyle::SantaCoderFIM));
  EXPECT_EQ(body.at("max_tokens"), 128);
  EXPECT_EQ(seen_auth, "Bearer sekret");
}

TEST_F(HttpFixture, ChoicesShapeAndRawFields) {
  std::string seen_body;
  server_.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(R"({"choices": [{"text": "abc"}]})", "application/json");
  });
  start();
  auto cfg = config();
  cfg.prompt_style = PromptStyle::RawTripleField;
  HttpEndpoint http;
  EXPECT_EQ(http.infill(instance("s", IdentifierKind::Variable, "x"), cfg), "abc");
  const auto body = nlohmann::json::parse(seen_body);
  EXPECT_TRUE(body.contains("prefix"));
  EXPECT_TRUE(body.contains("suffix"));
  EXPECT_EQ(generate_completion(http, cfg, "def f"), "abc");
}

TEST_F(HttpFixture, UnauthorizedIsNotRetried) {
  std::atomic<int> calls{0};
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  start();
  HttpEndpoint http;
  const auto out = predict_batch(http, config(), {instance("s", IdentifierKind::Variable, "x")});
  ASSERT_TRUE(out[0].error);
  EXPECT_TRUE(starts_with(*out[0].error, "AuthFailure"));
  EXPECT_EQ(calls.load(), 1);
}

TEST_F(HttpFixture, ServerErrorsAreRetried) {
  std::atomic<int> calls{0};
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"text": "ok"})", "application/json");
  });
  start();
  HttpEndpoint http;
  const auto out = predict_batch(http, config(), {instance("s", IdentifierKind::Variable, "x")});
  EXPECT_TRUE(out[0].answered());
  EXPECT_EQ(out[0].output, "ok");
  EXPECT_EQ(calls.load(), 3);
  EXPECT_GE(out[0].latency_ms, 0.0);
}

TEST_F(HttpFixture, BadPayloadIsReported) {
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  start();
  HttpEndpoint http;
  EXPECT_THROW(http.infill(instance("s", IdentifierKind::Variable, "x"), config()), BadResponse);
}

TEST_F(HttpFixture, SlowServerTimesOut) {
  server_.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"text": "late"})", "application/json");
  });
  start();
  auto cfg = config();
  cfg.request_timeout = std::chrono::milliseconds(150);
  cfg.max_retries = 0;
  HttpEndpoint http;
  EXPECT_THROW(http.infill(instance("s", IdentifierKind::Variable, "x"), cfg), Timeout);
}

TEST(Http, UnreachableEndpoint) {
  // Grab a free port, then close it so nothing is listening there.
  int port = 0;
  {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    ASSERT_GE(fd, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    ::close(fd);
  }
  ModelEndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/completions";
  cfg.request_timeout = std::chrono::milliseconds(500);
  HttpEndpoint http;
  EXPECT_THROW(http.infill(instance("s", IdentifierKind::Variable, "x"), cfg), EndpointUnreachable);
}

TEST(Endpoints, Factory) {
  EXPECT_NE(dynamic_cast<EchoModel*>(make_endpoint("echo", {}, {}).get()), nullptr);
  EXPECT_NE(dynamic_cast<HttpEndpoint*>(make_endpoint("http", {}, {}).get()), nullptr);
  EXPECT_THROW(make_endpoint("carrier-pigeon", {}, {}), std::invalid_argument);
}

}  // namespace
}  // namespace fimprobe
