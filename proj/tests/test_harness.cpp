#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <regex>
#include <sstream>

#include "c2lab/harness/report.hpp"
#include "c2lab/harness/runner.hpp"
#include "c2lab/harness/scenario.hpp"

using namespace c2lab;
using namespace c2lab::harness;

namespace {

const std::string kScenarios = std::string(C2LAB_SOURCE_DIR) + "/scenarios/";

ScenarioSpec reference() { return load_scenario(kScenarios + "reference.json"); }

std::vector<std::string> problems_of(const std::string& text) {
  try {
    parse_scenario(text, C2LAB_SOURCE_DIR);
  } catch (const ValidationErrors& e) {
    return e.problems();
  }
  return {};
}

nlohmann::json reference_json() { return nlohmann::json::parse(read_file(kScenarios + "reference.json")); }

bool has_problem(const std::vector<std::string>& ps, const std::string& field) {
  return std::any_of(ps.begin(), ps.end(), [&](const std::string& p) { return p.starts_with(field); });
}

std::string phases(const RunReport& r) {
  std::string s;
  for (auto p : r.phase_trace) s += std::string(to_string(p)) + " ";
  return s;
}

}  // namespace

TEST(Scenario, ReferenceLoads) {
  const auto s = reference();
  EXPECT_EQ(s.agent.plan.fact_prompt_keys.size(), 4u);
  EXPECT_EQ(to_text(s.vfs.read("/home/alice/passwords.txt")), "hunter2\n");
  EXPECT_EQ(s.expected_c2_host(), "198.51.100.7");
  EXPECT_EQ(s.attacker_script.size(), 2u);
  EXPECT_EQ(s.c2_policy.allowed_agents.size(), 2u);
  EXPECT_TRUE(s.detectors.signatures);
}

TEST(Scenario, CollectsAllProblems) {
  auto j = reference_json();
  j["ports"]["proxy"] = j["ports"]["c2"];
  j["fact_table"].erase("How many days are in a week");
  j["noise"]["corruption_probability"] = 1.5;
  j["agent"]["exfil_encoding"] = "rot13";
  j["attacker_script"][1]["at"] = 10;
  j["attacker_script"][0]["command"] = "format c:";
  const auto ps = problems_of(j.dump());
  EXPECT_TRUE(has_problem(ps, "ports"));
  EXPECT_TRUE(has_problem(ps, "fact_table"));
  EXPECT_TRUE(has_problem(ps, "noise.corruption_probability"));
  EXPECT_TRUE(has_problem(ps, "agent.exfil_encoding"));
  EXPECT_TRUE(has_problem(ps, "attacker_script[1].at"));
  EXPECT_TRUE(has_problem(ps, "attacker_script[0].command"));
  EXPECT_GE(ps.size(), 6u);
}

TEST(Scenario, MorePrecondition) {
  auto j = reference_json();
  j["fact_table"]["How many days are in a week"] = 700;
  EXPECT_TRUE(has_problem(problems_of(j.dump()), "fact_table"));
  j = reference_json();
  j["plugins"] = nlohmann::json::array();
  EXPECT_TRUE(has_problem(problems_of(j.dump()), "plugins"));
  j = reference_json();
  j["agent"]["fact_prompt_keys"].erase(0);
  EXPECT_TRUE(has_problem(problems_of(j.dump()), "agent.fact_prompt_keys"));
  j = reference_json();
  j["detectors"]["signatures"] = "missing.tsv";
  EXPECT_FALSE(problems_of(j.dump()).empty());
  j = reference_json();
  j.erase("ports");
  EXPECT_TRUE(has_problem(problems_of(j.dump()), "ports"));
}

TEST(Scenario, ParseErrorHasPosition) {
  try {
    parse_scenario("{\n  \"seed\": 1,\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Run, ReferenceLedger) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_scenario(reference());
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_LT(elapsed, std::chrono::seconds(5));

  EXPECT_EQ(r.outcome, "script_complete");
  EXPECT_EQ(r.messages_used, 10);
  EXPECT_EQ(r.proxy_budget_spent, 10);
  EXPECT_FALSE(r.budget_exhausted);
  const auto sum = r.ledger_summary();
  EXPECT_EQ(sum.at("address"), 4);
  EXPECT_EQ(sum.at("payload"), 1);
  EXPECT_EQ(sum.at("announce"), 1);
  EXPECT_EQ(sum.at("poll"), 2);
  EXPECT_EQ(sum.at("report"), 2);
  EXPECT_EQ(r.c2_address, "198.51.100.7");
  EXPECT_EQ(phases(r), "Fresh Addressed Armed Polling ");

  ASSERT_EQ(r.commands_executed.size(), 2u);
  EXPECT_EQ(r.commands_executed[0].output, "alice\n/home/alice\n.\n..\npasswords.txt");
  ASSERT_EQ(r.exfil_records.size(), 3u);
  EXPECT_EQ(to_text(*r.exfil_records[0].decoded), "extracted_data\n");
  EXPECT_EQ(*r.exfil_records[2].decoded, to_bytes("hunter2\n"));
}

TEST(Run, MessageConservationAtEveryTick) {
  const auto spec = reference();
  int checks = 0;
  Simulation* sim_ptr = nullptr;
  RunOptions opt;
  opt.on_tick = [&](VirtualTime) {
    ASSERT_EQ(sim_ptr->agent().messages_used(), sim_ptr->proxy().spent(spec.agent.session));
    ++checks;
  };
  Simulation sim(spec, opt);
  sim_ptr = &sim;
  for (const auto& e : spec.attacker_script) sim.queue(e);
  ASSERT_TRUE(sim.setup());
  while (!(sim.all_published() && sim.caught_up())) sim.tick();
  EXPECT_EQ(sim.agent().messages_used(), sim.proxy().spent(spec.agent.session));
  EXPECT_EQ(checks, 2);
}

TEST(Run, CausalEventLog) {
  const auto r = run_scenario(reference());
  std::map<std::uint64_t, std::uint64_t> request_seq;
  std::uint64_t last_seq = 0;
  VirtualTime last_at{0};
  for (const auto& e : r.events) {
    EXPECT_GT(e.seq, last_seq);
    EXPECT_GE(e.at, last_at);
    last_seq = e.seq;
    last_at = e.at;
    if (e.kind.ends_with("_request")) request_seq[e.correlation] = e.seq;
    if (e.kind.ends_with("_response") || e.kind == "prompt_error") {
      ASSERT_TRUE(request_seq.contains(e.correlation)) << e.kind << " " << e.correlation;
      EXPECT_LT(request_seq[e.correlation], e.seq);
    }
  }
}

TEST(Run, BlockedAccessTouchesNothing) {
  const auto r = run_scenario(load_scenario(kScenarios + "blocked.json"));
  EXPECT_EQ(r.outcome, "llm_access_blocked");
  EXPECT_TRUE(r.exfil_records.empty());
  EXPECT_TRUE(r.commands_executed.empty());
  EXPECT_EQ(r.messages_used, 0);
  for (const auto& e : r.events) EXPECT_NE(e.kind, "fetch_request");
  // Schema stays complete for an empty run.
  const auto j = to_json(r);
  for (const char* f : kReportFields) EXPECT_TRUE(j.contains(f)) << f;
}

TEST(Run, NoisyBootstrapFails) {
  const auto r = run_scenario(load_scenario(kScenarios + "noisy.json"));
  EXPECT_TRUE(r.outcome == "bootstrap_failed" || r.outcome == "budget_exhausted") << r.outcome;
  EXPECT_TRUE(r.commands_executed.empty());
  EXPECT_EQ(r.messages_used, 7);
  EXPECT_EQ(phases(r), "Fresh Addressed ");
}

TEST(Run, PluginFallbackKeepsLedger) {
  const auto base = run_scenario(reference());
  const auto fb = run_scenario(load_scenario(kScenarios + "fallback.json"));
  EXPECT_EQ(fb.outcome, "script_complete");
  ASSERT_EQ(fb.ledger.size(), base.ledger.size());
  for (std::size_t i = 0; i < fb.ledger.size(); ++i) {
    EXPECT_EQ(fb.ledger[i].purpose, base.ledger[i].purpose);
    EXPECT_EQ(fb.ledger[i].status, base.ledger[i].status);
    EXPECT_EQ(fb.ledger[i].remaining, base.ledger[i].remaining);
  }
  EXPECT_EQ(fb.exfil_records.back().user_agent, "LinkPreviewPlugin/2.3");
  EXPECT_EQ(base.exfil_records.back().user_agent, "WebReaderPlugin/1.0");
}

TEST(Run, AllPluginsDisabledStallsWithoutSpending) {
  auto spec = reference();
  for (auto& p : spec.plugins) p.disable_at = VirtualTime{60};
  RunOptions opt;
  opt.max_ticks = 20;
  const auto r = run_scenario(spec, opt);
  EXPECT_EQ(r.outcome, "tick_limit");
  EXPECT_EQ(r.messages_used, 6);
  EXPECT_TRUE(r.commands_executed.empty());
}

TEST(Run, IdlePollingExhaustsBudget) {
  const auto r = run_scenario(load_scenario(kScenarios + "idle.json"));
  EXPECT_EQ(r.outcome, "budget_exhausted");
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.messages_used, 25);
  EXPECT_EQ(phases(r), "Fresh Addressed Armed Polling Exhausted ");
}

TEST(Run, DeterministicReports) {
  const auto a = to_structured(run_scenario(reference()));
  const auto b = to_structured(run_scenario(reference()));
  EXPECT_EQ(a, b);
  auto other = reference();
  other.seed += 1;
  EXPECT_NE(report_digest(run_scenario(other)), digest(a));
}

TEST(Run, ActorCrashKeepsPartialReport) {
  RunOptions opt;
  opt.on_tick = [](VirtualTime t) {
    if (t >= VirtualTime{120}) throw std::runtime_error("agent process died");
  };
  try {
    run_scenario(reference(), opt);
    FAIL();
  } catch (const ActorCrashed& e) {
    EXPECT_EQ(e.code(), Errc::ActorCrashed);
    EXPECT_EQ(e.partial().outcome, "actor_crashed");
    EXPECT_EQ(e.partial().commands_executed.size(), 1u);
    EXPECT_FALSE(e.partial().events.empty());
  }
}

TEST(Detectors, ReferenceRunVerdicts) {
  const auto r = run_scenario(reference());
  EXPECT_TRUE(r.detectors.prompt_scan.flagged);
  EXPECT_EQ(r.detectors.prompt_class, detect::Classification::Malicious);
  ASSERT_TRUE(r.detectors.traffic);
  EXPECT_TRUE(r.detectors.traffic->flagged);
  bool saw_c2 = false;
  for (const auto& w : r.detectors.whitelist) {
    if (w.url.starts_with("http://198.51.100.7/")) {
      saw_c2 = true;
      EXPECT_EQ(w.decision, detect::WhitelistDecision::deny(detect::DenyReason::ip_literal));
    }
    if (w.url == kProxyServiceUrl) {
      EXPECT_TRUE(w.decision.allowed);
    }
  }
  EXPECT_TRUE(saw_c2);
}

TEST(Report, StructuredFieldsAndText) {
  const auto r = run_scenario(reference());
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  ASSERT_EQ(keys.size(), kReportFields.size());
  for (std::size_t i = 0; i < keys.size(); ++i) EXPECT_EQ(keys[i], kReportFields[i]);
  EXPECT_EQ(j["messages_used"], 10);

  const auto text = to_human_text(r);
  EXPECT_NE(text.find("message budget ledger"), std::string::npos);
  EXPECT_NE(text.find("totals: address=4 announce=1 payload=1 poll=2 report=2"), std::string::npos);
  std::smatch m;
  EXPECT_TRUE(std::regex_search(text, m, std::regex("\\n  11 +120 +report")));
}

TEST(Report, EmitWritesFilesAndReportsIoErrors) {
  const auto r = run_scenario(reference());
  const auto path = std::filesystem::temp_directory_path() / "c2lab_report_test.json";
  emit_report(r, ReportFormat::Json, path);
  EXPECT_EQ(read_file(path), to_structured(r));
  std::filesystem::remove(path);
  try {
    emit_report(r, ReportFormat::Text, "/nonexistent-dir/x/report.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoError);
  }
}

TEST(Interactive, MatchesScriptedStructureAndReplays) {
  const auto spec = reference();
  std::istringstream in("shellCmd whoami && pwd && ls -a\nstatus\nshellCmd cat passwords.txt\nquit\n");
  std::ostringstream out;
  const auto live = interactive_mode(spec, in, out);
  EXPECT_NE(out.str().find("remaining="), std::string::npos);
  EXPECT_NE(out.str().find("exfil: hunter2\\n"), std::string::npos);
  EXPECT_EQ(live.messages_used, 10);
  EXPECT_EQ(live.ledger_summary(), run_scenario(spec).ledger_summary());
  ASSERT_EQ(live.attacker_actions.size(), 2u);

  const auto replayed = run_scenario(replay_spec(spec, live));
  EXPECT_EQ(report_digest(replayed), report_digest(live));
  const auto from_json = run_scenario(replay_spec(spec, nlohmann::json::parse(to_structured(live))));
  EXPECT_EQ(report_digest(from_json), report_digest(live));
}

TEST(Interactive, IdlingExhaustsBudget) {
  const auto spec = reference();
  std::string script;
  for (int i = 0; i < 40; ++i) script += "idle\n";
  std::istringstream in(script);
  std::ostringstream out;
  const auto r = interactive_mode(spec, in, out);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.outcome, "budget_exhausted");
  EXPECT_NE(out.str().find("message budget exhausted"), std::string::npos);
  EXPECT_EQ(report_digest(run_scenario(replay_spec(spec, r))), report_digest(r));
}

TEST(Interactive, RejectsBadCommands) {
  std::istringstream in("format c:\nquit\n");
  std::ostringstream out;
  const auto r = interactive_mode(reference(), in, out);
  EXPECT_NE(out.str().find("rejected: UnknownVerb"), std::string::npos);
  EXPECT_TRUE(r.attacker_actions.empty());
}
