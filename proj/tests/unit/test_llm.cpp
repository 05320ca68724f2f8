#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "kpc/errors.hpp"
#include "kpc/http_provider.hpp"
#include "kpc/llm.hpp"
#include "kpc/mock_provider.hpp"

using namespace kpc;
using json = nlohmann::json;
using std::chrono::milliseconds;

TEST(Extract, LastParsableTaggedRegion) {
  const std::string r = "reasoning <Step1>{bad</Step1> more <Step1>\n```json\n{\"a\": 1}\n```\n</Step1> tail";
  EXPECT_EQ(json::parse(extract_tagged_json(r, "Step1")), json({{"a", 1}}));
  EXPECT_EQ(json::parse(extract_tagged_json("<Step2>{\"x\":2}</Step2><Step2>{\"x\":3}</Step2>", "Step2"))["x"], 3);
}

TEST(Extract, FallsBackToLastBalancedObject) {
  const std::string r = "The answer is {\"a\": {\"b\": \"}\"}} and then {\"c\": 1} ok";
  EXPECT_EQ(json::parse(extract_tagged_json(r, "Step1")), json({{"c", 1}}));
}

TEST(Extract, NothingParses) {
  EXPECT_THROW(extract_tagged_json("I cannot help with that.", "Step1"), NoAnswerError);
  EXPECT_THROW(extract_tagged_json("<Step1>nope</Step1>", "Step1"), NoAnswerError);
}

TEST(Tokens, Estimate) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("hello world"), 2u);
  EXPECT_EQ(estimate_tokens("a,b"), 3u);
}

TEST(RateLimiter, SlidingWindowOnVirtualClock) {
  VirtualClock clock;
  RateLimiter lim(3, clock);
  EXPECT_EQ(lim.acquire().count(), 0);
  EXPECT_EQ(lim.acquire().count(), 0);
  EXPECT_EQ(lim.acquire().count(), 0);
  EXPECT_EQ(lim.acquire().count(), 60'000);
  clock.sleep_for(milliseconds(500));
  EXPECT_EQ(lim.acquire().count(), 60'500);
  EXPECT_EQ(lim.acquire().count(), 60'500);
  EXPECT_EQ(lim.acquire().count(), 120'000);
}

TEST(RateLimiter, NeverMoreThanLimitInAnyWindow) {
  VirtualClock clock;
  RateLimiter lim(5, clock);
  std::vector<long long> grants;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 6; ++i) {
        const auto g = lim.acquire().count();
        std::lock_guard lock(mu);
        grants.push_back(g);
      }
    });
  }
  for (auto& t : threads) t.join();
  std::sort(grants.begin(), grants.end());
  ASSERT_EQ(grants.size(), 24u);
  for (std::size_t i = 5; i < grants.size(); ++i) EXPECT_GE(grants[i] - grants[i - 5], 60'000);
}

TEST(ProviderConfig, PresetsAndValidation) {
  const auto o = ProviderConfig::preset("openai");
  EXPECT_EQ(o.kind, ProviderKind::OpenAI);
  EXPECT_EQ(o.api_key_env, "OPENAI_API_KEY");
  EXPECT_EQ(o.temperature, 0.0);
  EXPECT_EQ(ProviderConfig::preset("anthropic").kind, ProviderKind::Anthropic);
  EXPECT_THROW(ProviderConfig::preset("nope"), ConfigError);

  auto bad = o;
  bad.temperature = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = o;
  bad.timeout_s = 0;
  EXPECT_THROW(bad.validate(), ConfigError);

  const auto j = json::parse(R"({"preset": "deepseek", "max_retries": 1})");
  const auto c = ProviderConfig::from_json(j);
  EXPECT_EQ(c.model_name, "deepseek-chat");
  EXPECT_EQ(c.max_retries, 1);
  EXPECT_EQ(ProviderConfig::from_json(c.to_json()).to_json(), c.to_json());
}

// ---------------------------------------------------------------- http

namespace {

class FakeTransport : public HttpTransport {
 public:
  std::vector<HttpResponse> replies;
  std::vector<HttpRequest> seen;

  HttpResponse post(const HttpRequest& r) override {
    seen.push_back(r);
    if (seen.size() > replies.size()) return replies.back();
    return replies[seen.size() - 1];
  }
};

const std::string kOpenAiOk =
    R"({"choices": [{"message": {"content": "hi"}}], "usage": {"prompt_tokens": 7, "completion_tokens": 2}})";

struct HttpFixture : ::testing::Test {
  void SetUp() override { setenv("KPC_TEST_KEY", "secret", 1); }
  void TearDown() override { unsetenv("KPC_TEST_KEY"); }

  ProviderConfig cfg(ProviderKind k = ProviderKind::OpenAI) {
    ProviderConfig c = ProviderConfig::preset(k == ProviderKind::OpenAI ? "openai" : "anthropic");
    c.api_key_env = "KPC_TEST_KEY";
    c.base_url = "http://localhost:1/v1/";
    c.max_retries = 2;
    return c;
  }

  VirtualClock clock;
  std::shared_ptr<FakeTransport> transport = std::make_shared<FakeTransport>();
  std::vector<Message> turns{{Role::User, "q"}};
};

}  // namespace

TEST_F(HttpFixture, OpenAiRequestShape) {
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  const auto r = p.build_request("sys", turns, "k");
  EXPECT_EQ(r.url, "http://localhost:1/v1/chat/completions");
  EXPECT_EQ(r.headers.at(0), (std::pair<std::string, std::string>{"Authorization", "Bearer k"}));
  const auto body = json::parse(r.body);
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "q");
}

TEST_F(HttpFixture, AnthropicRequestShape) {
  HttpChatProvider p(cfg(ProviderKind::Anthropic), transport, nullptr, clock);
  const auto r = p.build_request("sys", turns, "k");
  EXPECT_EQ(r.url, "http://localhost:1/v1/messages");
  const auto body = json::parse(r.body);
  EXPECT_EQ(body["system"], "sys");
  EXPECT_EQ(body["messages"].size(), 1u);
  const auto c = p.parse_response(
      R"({"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}], "usage": {"input_tokens": 3, "output_tokens": 4}})");
  EXPECT_EQ(c.text, "ab");
  EXPECT_EQ(c.usage.output_tokens, 4u);
}

TEST_F(HttpFixture, RetriesTransientThenSucceeds) {
  transport->replies = {{503, "busy"}, {0, "", true, "timeout"}, {200, kOpenAiOk}};
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  const auto c = p.complete("sys", turns, {});
  EXPECT_EQ(c.text, "hi");
  EXPECT_EQ(c.usage.input_tokens, 7u);
  EXPECT_EQ(transport->seen.size(), 3u);
  EXPECT_EQ(clock.now().count(), 1000 + 2000);
}

TEST_F(HttpFixture, RateLimitExhausted) {
  transport->replies = {{429, "slow down"}};
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  EXPECT_THROW(p.complete("sys", turns, {}), RateLimitExhaustedError);
  EXPECT_EQ(transport->seen.size(), 3u);
}

TEST_F(HttpFixture, AuthFailsFast) {
  transport->replies = {{401, "no"}};
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  EXPECT_THROW(p.complete("sys", turns, {}), AuthError);
  EXPECT_EQ(transport->seen.size(), 1u);

  unsetenv("KPC_TEST_KEY");
  EXPECT_THROW(p.complete("sys", turns, {}), AuthError);
  EXPECT_EQ(transport->seen.size(), 1u);
}

TEST_F(HttpFixture, ClientErrorNotRetried) {
  transport->replies = {{400, "bad"}};
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  EXPECT_THROW(p.complete("sys", turns, {}), ProviderError);
  EXPECT_EQ(transport->seen.size(), 1u);
}

TEST_F(HttpFixture, TimeoutsExhausted) {
  transport->replies = {{0, "", true, "read"}};
  HttpChatProvider p(cfg(), transport, nullptr, clock);
  EXPECT_THROW(p.complete("sys", turns, {}), TimeoutError);
}

TEST_F(HttpFixture, LimiterGatesEveryAttempt) {
  transport->replies = {{500, ""}, {200, kOpenAiOk}};
  auto lim = std::make_shared<RateLimiter>(1, clock);
  HttpChatProvider p(cfg(), transport, lim, clock);
  p.complete("sys", turns, {});
  EXPECT_GE(clock.now().count(), 60'000);
}

// ---------------------------------------------------------------- mock

namespace {

SemanticModel gold() {
  return parse_model(R"({
    "semantic_triples": [["ex:PersonA1", "ex:name", "name"], ["ex:DateA1", "ex:value", "born"],
                         ["ex:PlaceA1", "ex:label", "city"]],
    "internal_link_triples": [["ex:PersonA1", "ex:born_on", "ex:DateA1"], ["ex:PersonA1", "ex:lives_in", "ex:PlaceA1"]]})");
}

}  // namespace

TEST(Mock, ScriptedGoldRoundTrips) {
  MockScript s;
  s.add_gold("src", gold());
  MockProvider p(s);
  const auto c2 = p.complete("", {}, {"src", Stage::Chain2});
  EXPECT_EQ(parse_model(extract_tagged_json(c2.text, "Step2")), gold());
  const auto c1 = p.complete("", {}, {"src", Stage::Chain1});
  EXPECT_EQ(parse_labels(extract_tagged_json(c1.text, "Step1")).semantic_triples, gold().semantic_triples);
  EXPECT_GT(c1.usage.output_tokens, 0u);
  EXPECT_THROW(p.complete("", {}, {"other", Stage::Chain1}), ProviderError);
}

TEST(Mock, CorruptionIsDeterministic) {
  const CorruptionSpec spec{1, 2, 1};
  const auto a = corrupt_model(gold(), spec, 7, "src", Stage::Chain2);
  EXPECT_EQ(a, corrupt_model(gold(), spec, 7, "src", Stage::Chain2));
  bool differs = false;
  for (std::uint64_t seed = 8; seed < 20 && !differs; ++seed) {
    differs = corrupt_model(gold(), spec, seed, "src", Stage::Chain2) != a;
  }
  EXPECT_TRUE(differs);
}

TEST(Mock, DropRemovesExactlyK) {
  for (std::size_t k = 0; k <= 5; ++k) {
    const auto m = corrupt_model(gold(), {k, 0, 0}, 1, "s", Stage::Chain2);
    EXPECT_EQ(m.size(), gold().size() - k);
  }
}

TEST(Mock, InjectedInstancesAreDisconnected) {
  const auto m = corrupt_model(gold(), {0, 2, 0}, 3, "s", Stage::Chain2);
  EXPECT_EQ(m.internal_link_triples.size(), gold().internal_link_triples.size() + 1);
  EXPECT_EQ(prune(m, {"name", "born", "city"}), gold());

  const auto labels = corrupt_model(gold(), {0, 2, 0}, 3, "s", Stage::Chain1);
  EXPECT_EQ(labels.semantic_triples.size(), gold().semantic_triples.size() + 2);
  EXPECT_EQ(prune(labels, {"name", "born", "city"}), gold());
}

TEST(Mock, RenameSuffixesProperties) {
  const auto m = corrupt_model(gold(), {0, 0, 2}, 3, "s", Stage::Chain2);
  std::size_t renamed = 0;
  for (const auto& t : m.semantic_triples) renamed += t.property.ends_with("_renamed");
  for (const auto& t : m.internal_link_triples) renamed += t.property.ends_with("_renamed");
  EXPECT_EQ(renamed, 2u);
}

TEST(Mock, ScriptJsonRoundTrip) {
  MockScript s;
  s.add_gold("a", gold());
  s.corruption[Stage::Chain2] = {1, 2, 0};
  s.seed = 99;
  const auto back = MockScript::from_json(s.to_json());
  EXPECT_EQ(back.responses, s.responses);
  EXPECT_EQ(back.corruption, s.corruption);
  EXPECT_EQ(back.seed, 99u);
}
