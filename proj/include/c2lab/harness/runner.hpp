#pragma once

// Drives a full run under the virtual clock: boots the C2 server and the
// proxy, walks the agent through its setup, then alternates attacker actions
// and agent polls until the script completes or the budget runs out.

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <string>

#include "c2lab/c2_server.hpp"
#include "c2lab/detectors/prompt_scan.hpp"
#include "c2lab/detectors/traffic.hpp"
#include "c2lab/detectors/whitelist.hpp"
#include "c2lab/harness/blob.hpp"
#include "c2lab/harness/report.hpp"
#include "c2lab/harness/scenario.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/loopback.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/transport.hpp"
#include "c2lab/victim_agent.hpp"

namespace c2lab::harness {

/// URL under which agent-to-proxy traffic appears in traces.
inline constexpr const char* kProxyServiceUrl = "https://llm-service.test/v1/prompt";

inline std::vector<detect::PromptSignature> default_signatures() {
  using detect::SignatureCategory;
  return {
      {"bootstrap-handler-table", "generate the handler table", 5, SignatureCategory::bootstrap_instruction},
      {"bootstrap-python-functions", "generate python code for the functions", 5,
       SignatureCategory::bootstrap_instruction},
      {"lookup-news-url", "what are the news on http", 4, SignatureCategory::url_lookup_template},
      {"persona-in-character", "staying in character", 3, SignatureCategory::persona_override_marker},
      {"persona-only-output", "only output the persona", 3, SignatureCategory::persona_override_marker},
      {"fact-only-number", "return only the number", 1, SignatureCategory::fact_extraction},
  };
}

enum class TransportMode { InProcess, Loopback };

struct RunOptions {
  TransportMode transport = TransportMode::InProcess;
  std::size_t max_ticks = 100000;
  /// Called before every poll tick. An exception escaping it is treated as an actor crash.
  std::function<void(VirtualTime)> on_tick;
};

/// Thrown by run_scenario when an actor fails unexpectedly. Carries the
/// report assembled from everything logged up to the failure.
class ActorCrashed : public Error {
 public:
  ActorCrashed(const std::string& what, RunReport partial)
      : Error(Errc::ActorCrashed, what), partial_(std::move(partial)) {}
  const RunReport& partial() const noexcept { return partial_; }

 private:
  RunReport partial_;
};

/// Network requests from the event log, in the order they were made.
inline detect::TrafficTrace trace_from_events(const std::vector<Event>& events) {
  detect::TrafficTrace trace;
  for (const auto& e : events)
    if (!e.url.empty()) trace.events.push_back({e.at, e.url, detect::Direction::Outbound});
  return trace;
}

/// Same layout load_trace reads.
inline std::string render_trace(const detect::TrafficTrace& trace) {
  std::string out;
  for (const auto& e : trace.events)
    out += std::to_string(e.at.count()) + "\t" + e.url + (e.direction == detect::Direction::Outbound ? "\tout\n" : "\tin\n");
  return out;
}

inline DetectorResults run_detectors(const ScenarioSpec& spec, const std::vector<Event>& events) {
  DetectorResults out;

  auto signatures = default_signatures();
  if (spec.detectors.signatures) {
    std::ifstream in(*spec.detectors.signatures);
    signatures = detect::load_signatures(in);
  }
  out.prompt_scan = detect::scan_blob(build_agent_blob(spec), signatures, spec.detectors.max_decode_depth,
                                      spec.detectors.scan_threshold);
  out.prompt_class = detect::classify_verdict(out.prompt_scan, spec.detectors.scan_threshold);

  const auto trace = trace_from_events(events);
  try {
    out.traffic = detect::analyze_trace(trace, spec.detectors.trace);
  } catch (const Error& e) {
    out.traffic_error = std::string(to_string(e.code()));
  }

  detect::DomainRegistry registry;
  if (spec.detectors.registry) {
    std::ifstream in(*spec.detectors.registry);
    registry = detect::DomainRegistry::load(in);
  }
  detect::WhitelistPolicy policy;
  if (spec.detectors.whitelist_policy) {
    std::ifstream in(*spec.detectors.whitelist_policy);
    policy = detect::load_whitelist_policy(in);
  }
  const auto today = detect::parse_date(spec.detectors.evaluation_date);
  std::set<std::string> seen;
  for (const auto& e : trace.events) {
    if (!seen.insert(e.url).second) continue;
    out.whitelist.push_back({e.url, detect::check_whitelist(e.url, registry, policy, today)});
  }
  return out;
}

/// One run's actors and state. run_scenario and the interactive session
/// are both thin drivers over this.
class Simulation {
 public:
  Simulation(const ScenarioSpec& spec, RunOptions options = {})
      : spec_(spec), options_(std::move(options)), log_(clock_) {
    c2_ = std::make_unique<C2Server>(spec_.c2_policy, spec_.agent.encoding);
    const auto c2_host = spec_.expected_c2_host();

    if (options_.transport == TransportMode::Loopback) {
      auto fetcher = std::make_unique<HttpFetcher>();
      c2_http_ = std::make_unique<C2HttpFrontend>(*c2_, clock_);
      fetcher->route(c2_host, c2_http_->start(spec_.c2_port));
      fetcher_ = std::move(fetcher);
    } else {
      auto fetcher = std::make_unique<InProcessFetcher>(clock_);
      fetcher->route(c2_host, *c2_);
      fetcher_ = std::move(fetcher);
    }
    proxy_ = std::make_unique<LlmProxy>(spec_.proxy_config(), *fetcher_, clock_, spec_.seed, &log_);

    if (spec_.llm_access_blocked) {
      link_ = std::make_unique<BlockedProxyClient>();
    } else if (options_.transport == TransportMode::Loopback) {
      proxy_http_ = std::make_unique<ProxyHttpFrontend>(*proxy_);
      link_ = std::make_unique<HttpProxyClient>(proxy_http_->start(spec_.proxy_port));
    } else {
      link_ = std::make_unique<InProcessProxyClient>(*proxy_);
    }
    recorder_ = std::make_unique<AgentLink>(*link_, log_, kProxyServiceUrl);
    agent_ = std::make_unique<VictimAgent>(spec_.agent, *recorder_, spec_.vfs, clock_);
    log_.record(Actor::Harness, "run_start", "seed " + std::to_string(spec_.seed));
  }

  ~Simulation() {
    if (proxy_http_) proxy_http_->stop();
    if (c2_http_) c2_http_->stop();
  }

  /// Unlock, address, bootstrap and announce. Returns false when the agent
  /// could not reach the polling phase; the reason lands in outcome().
  bool setup() {
    try {
      agent_step([&] { agent_->resolve_c2_address(); });
      agent_step([&] { agent_->bootstrap_payload(); });
      agent_step([&] { agent_->announce(); });
      return true;
    } catch (const Error& e) {
      error_ = e.what();
      switch (e.code()) {
        case Errc::NetworkBlocked: outcome_ = "llm_access_blocked"; break;
        case Errc::BootstrapFailed: outcome_ = "bootstrap_failed"; break;
        case Errc::BudgetExhausted: outcome_ = "budget_exhausted"; break;
        default: outcome_ = "setup_failed"; break;
      }
      return false;
    }
  }

  bool polling() const { return agent_->phase() == Phase::Polling; }
  VirtualTime now() const { return clock_.now(); }
  VirtualTime next_poll_time() const { return clock_.now() + spec_.agent.plan.poll_interval; }
  int remaining_budget() const { return proxy_->budget(spec_.agent.session).remaining(clock_.now()); }
  const VictimAgent& agent() const { return *agent_; }
  const C2Server& c2() const { return *c2_; }
  const LlmProxy& proxy() const { return *proxy_; }
  EventLog& log() { return log_; }

  /// Records an attacker action; commands are published on the next tick.
  void queue(ScriptEntry entry) {
    actions_.push_back(entry);
    pending_.push_back(std::move(entry));
  }

  bool all_published() const { return pending_.empty(); }
  bool caught_up() const { return agent_->last_edition() >= c2_->board().edition(); }
  bool tick_limit_reached() const { return ticks_ >= options_.max_ticks; }

  /// Advances to the next poll time, applies due events, then polls once.
  void tick() {
    if (tick_limit_reached()) throw Error(Errc::StateError, "tick limit reached");
    ++ticks_;
    clock_.advance(spec_.agent.plan.poll_interval);
    const auto now = clock_.now();
    if (options_.on_tick) options_.on_tick(now);

    for (const auto& p : spec_.plugins) {
      if (p.disable_at && *p.disable_at <= now && !disabled_.contains(p.descriptor.id)) {
        proxy_->set_plugin_enabled(p.descriptor.id, false);
        disabled_.insert(p.descriptor.id);
        log_.record(Actor::Harness, "plugin_disabled", p.descriptor.id);
      }
    }
    while (!pending_.empty() && pending_.front().at <= now) {
      if (const auto& cmd = pending_.front().cmd) {
        c2_->publish(*cmd, now);
        log_.record(Actor::Attacker, "command_published", serialize_command(*cmd), serialize_command(*cmd));
      }
      pending_.erase(pending_.begin());
    }
    agent_step([&] { agent_->poll_cycle(); });
  }

  void set_outcome(std::string outcome) { outcome_ = std::move(outcome); }
  const std::string& outcome() const noexcept { return outcome_; }

  RunReport report() {
    log_.record(Actor::Harness, "run_end", outcome_);
    RunReport r;
    r.seed = spec_.seed;
    r.outcome = outcome_;
    r.error = error_;
    r.messages_used = agent_->messages_used();
    r.proxy_budget_spent = proxy_->spent(spec_.agent.session);
    r.ended_at = clock_.now();
    r.phase_trace = agent_->phase_trace();
    r.ledger = agent_->ledger();
    r.budget_exhausted = agent_->phase() == Phase::Exhausted ||
                         std::any_of(r.ledger.begin(), r.ledger.end(),
                                     [](const LedgerEntry& e) { return e.status == PromptStatus::BudgetExhausted; });
    if (const auto& u = agent_->c2_url()) r.c2_address = url::parse(*u).host;
    r.attacker_actions = actions_;
    r.commands_executed = agent_->executed();
    r.exfil_records = c2_->exfil_log().records;
    r.board_history = c2_->board().history;
    r.events = log_.snapshot();
    r.detectors = run_detectors(spec_, r.events);
    return r;
  }

 private:
  /// Forwards to the real link and records request/response pairs.
  using AgentLink = RecordingProxyClient;

  template <typename F>
  void agent_step(F&& f) {
    const auto before = agent_->phase();
    try {
      f();
    } catch (...) {
      note_phase(before);
      throw;
    }
    note_phase(before);
  }

  void note_phase(Phase before) {
    if (agent_->phase() != before) log_.record(Actor::Agent, "phase", std::string(to_string(agent_->phase())));
  }

  ScenarioSpec spec_;
  RunOptions options_;
  VirtualClock clock_;
  EventLog log_;
  std::unique_ptr<C2Server> c2_;
  std::unique_ptr<C2HttpFrontend> c2_http_;
  std::unique_ptr<Fetcher> fetcher_;
  std::unique_ptr<LlmProxy> proxy_;
  std::unique_ptr<ProxyHttpFrontend> proxy_http_;
  std::unique_ptr<ProxyClient> link_;
  std::unique_ptr<AgentLink> recorder_;
  std::unique_ptr<VictimAgent> agent_;
  std::vector<ScriptEntry> actions_;
  std::vector<ScriptEntry> pending_;
  std::set<std::string> disabled_;
  std::size_t ticks_ = 0;
  std::string outcome_ = "script_complete";
  std::string error_;
};

namespace runner_detail {

template <typename Body>
RunReport guarded(Simulation& sim, Body&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    sim.set_outcome("actor_crashed");
    throw ActorCrashed(e.what(), sim.report());
  }
  return sim.report();
}

/// Shared loop end: Exhausted agent, explicit stop time, or script done.
inline void finish_outcome(Simulation& sim, const std::optional<VirtualTime>& run_until) {
  if (sim.agent().phase() == Phase::Exhausted)
    sim.set_outcome("budget_exhausted");
  else if (run_until)
    sim.set_outcome("stopped");
  else
    sim.set_outcome("script_complete");
}

}  // namespace runner_detail

inline RunReport run_scenario(const ScenarioSpec& spec, RunOptions options = {}) {
  Simulation sim(spec, std::move(options));
  return runner_detail::guarded(sim, [&] {
    for (const auto& e : spec.attacker_script) sim.queue(e);
    if (!sim.setup()) return;
    while (sim.polling()) {
      if (spec.run_until) {
        if (sim.next_poll_time() > *spec.run_until) break;
      } else if (sim.all_published() && sim.caught_up()) {
        break;
      }
      if (sim.tick_limit_reached()) {
        sim.set_outcome("tick_limit");
        return;
      }
      sim.tick();
    }
    runner_detail::finish_outcome(sim, spec.run_until);
  });
}

/// Operator REPL. Each line is one of:
///   <verb> [arg]   publish a command, then wait for the next poll
///   idle           let one poll interval pass
///   status         show budget and phase
///   quit           end the session
/// Every action is recorded in the report; replay it with replay_spec().
inline RunReport interactive_mode(const ScenarioSpec& spec, std::istream& in, std::ostream& out,
                                  RunOptions options = {}) {
  ScenarioSpec live = spec;
  live.attacker_script.clear();
  Simulation sim(live, std::move(options));
  return runner_detail::guarded(sim, [&] {
    auto status = [&] {
      out << "[t=" << sim.now().count() << "s phase=" << to_string(sim.agent().phase())
          << " messages_used=" << sim.agent().messages_used() << " remaining=" << sim.remaining_budget() << "]\n";
    };
    const bool ready = sim.setup();
    status();
    if (!ready) {
      out << "agent did not reach polling: " << sim.outcome() << "\n";
      return;
    }
    out << "agent polling " << sim.agent().c2_url().value_or("?") << "\n";
    for (std::string line; sim.polling() && (out << "c2> " << std::flush, std::getline(in, line));) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty()) continue;
      if (line == "quit" || line == "exit") break;
      if (line == "status") {
        status();
        continue;
      }
      ScriptEntry entry{sim.next_poll_time(), std::nullopt};
      if (line != "idle") {
        try {
          entry.cmd = parse_command(line);
        } catch (const Error& e) {
          out << "rejected: " << e.what() << "\n";
          continue;
        }
      }
      sim.queue(entry);
      sim.tick();
      if (!sim.agent().executed().empty() && sim.agent().executed().back().at == sim.now()) {
        const auto& done = sim.agent().executed().back();
        out << (done.reported ? "exfil: " : "executed (not reported): ") << escape_text(done.output) << "\n";
      }
      status();
    }
    if (sim.agent().phase() == Phase::Exhausted) out << "message budget exhausted\n";
    runner_detail::finish_outcome(sim, sim.now());
  });
}

/// Scenario that replays a recorded session as a script.
inline ScenarioSpec replay_spec(const ScenarioSpec& base, const RunReport& recorded) {
  ScenarioSpec s = base;
  s.attacker_script = recorded.attacker_actions;
  s.run_until = recorded.ended_at;
  return s;
}

/// Reads the attacker actions and end time back from a structured report.
inline ScenarioSpec replay_spec(const ScenarioSpec& base, const nlohmann::json& report) {
  ScenarioSpec s = base;
  s.attacker_script.clear();
  for (const auto& a : report.at("attacker_actions")) {
    ScriptEntry e{VirtualTime{a.at("at").get<long long>()}, std::nullopt};
    if (a.contains("command")) e.cmd = parse_command(a.at("command").get<std::string>());
    s.attacker_script.push_back(e);
  }
  s.run_until = VirtualTime{report.at("ended_at").get<long long>()};
  return s;
}

}  // namespace c2lab::harness
