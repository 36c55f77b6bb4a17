#pragma once

// Mock LLM service with web-browsing plugins. Models the behaviours observed
// on a hosted chat model: deterministic fact answers, unreliable arithmetic,
// noisy payload responses, a rolling message cap and a bot challenge.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/codec.hpp"
#include "c2lab/error.hpp"
#include "c2lab/http_types.hpp"
#include "c2lab/sim.hpp"

namespace c2lab {

struct PluginDescriptor {
  std::string id;
  std::string user_agent;
  bool can_browse_web = true;
  bool can_fetch_arbitrary_url = true;
  bool enabled = true;

  /// Usable as a proxy only if it browses and accepts any user-supplied URL.
  bool vulnerable() const noexcept { return can_browse_web && can_fetch_arbitrary_url; }
};

class PluginRegistry {
 public:
  PluginRegistry() = default;
  explicit PluginRegistry(std::vector<PluginDescriptor> plugins) : plugins_(std::move(plugins)) {}

  /// Hinted plugin when it is enabled and vulnerable, else the first enabled
  /// vulnerable plugin in registration order.
  const PluginDescriptor& select(const std::optional<std::string>& hint) const {
    if (hint) {
      for (const auto& p : plugins_)
        if (p.id == *hint && p.enabled && p.vulnerable()) return p;
    }
    for (const auto& p : plugins_)
      if (p.enabled && p.vulnerable()) return p;
    throw Error(Errc::NoPluginAvailable, "no enabled plugin can fetch arbitrary URLs");
  }

  void set_enabled(const std::string& id, bool enabled) {
    for (auto& p : plugins_)
      if (p.id == id) {
        p.enabled = enabled;
        return;
      }
    throw Error(Errc::StateError, "unknown plugin '" + id + "'");
  }

  const std::vector<PluginDescriptor>& plugins() const noexcept { return plugins_; }

 private:
  std::vector<PluginDescriptor> plugins_;
};

/// Rolling message cap: at most `cap` messages in any window of length `window`.
struct MessageBudget {
  int cap = 25;
  std::chrono::minutes window{180};
  std::vector<VirtualTime> spent;

  /// Messages within one window length of `now` on either side. Counting
  /// both sides keeps the cap sound even if requests arrive out of order.
  int in_window(VirtualTime now) const {
    const auto w = std::chrono::duration_cast<VirtualTime>(window);
    return static_cast<int>(std::count_if(spent.begin(), spent.end(), [&](VirtualTime s) {
      return s > now - w && s < now + w;
    }));
  }

  int remaining(VirtualTime now) const { return std::max(0, cap - in_window(now)); }
  bool can_spend(VirtualTime now) const { return in_window(now) < cap; }
};

inline void consume_budget(MessageBudget& budget, VirtualTime now) {
  if (!budget.can_spend(now))
    throw Error(Errc::BudgetExhausted, std::to_string(budget.cap) + " messages already spent in window");
  budget.spent.push_back(now);
}

struct ChallengeGate {
  double trigger_probability = 0.0;
  double solver_success_probability = 1.0;
  double escalation_factor = 1.0;
  std::map<std::string, double> difficulty;  // per-client suspicion, starts at 1

  double difficulty_of(const std::string& client) const {
    const auto it = difficulty.find(client);
    return it == difficulty.end() ? 1.0 : it->second;
  }

  double pass_probability(const std::string& client) const {
    return std::clamp(solver_success_probability / difficulty_of(client), 0.0, 1.0);
  }
};

enum class ChallengeOutcome { Passed, Failed };

/// One solve attempt. A pass raises the client's difficulty multiplicatively.
inline ChallengeOutcome run_challenge(ChallengeGate& gate, const std::string& client, Rng& rng) {
  if (!rng.bernoulli(gate.pass_probability(client))) return ChallengeOutcome::Failed;
  gate.difficulty[client] = gate.difficulty_of(client) * std::max(1.0, gate.escalation_factor);
  return ChallengeOutcome::Passed;
}

enum class CorruptionKind { missing_handler_body, parser_error, extraneous_persona_text };

constexpr std::string_view to_string(CorruptionKind k) noexcept {
  switch (k) {
    case CorruptionKind::missing_handler_body: return "missing_handler_body";
    case CorruptionKind::parser_error: return "parser_error";
    case CorruptionKind::extraneous_persona_text: return "extraneous_persona_text";
  }
  return "?";
}

inline std::optional<CorruptionKind> corruption_kind_from_string(std::string_view s) {
  for (auto k : {CorruptionKind::missing_handler_body, CorruptionKind::parser_error,
                 CorruptionKind::extraneous_persona_text})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct NoiseModel {
  double corruption_probability = 0.0;
  std::vector<CorruptionKind> corruption_kinds = {CorruptionKind::missing_handler_body, CorruptionKind::parser_error,
                                                  CorruptionKind::extraneous_persona_text};
  /// Answers drawn for prompts the fact table does not know (unreliable maths).
  std::vector<int> unreliable_answers = {47, 38, 39, 21};
};

// Handler-table descriptor served as the bootstrap response.
inline constexpr std::string_view kTableBegin = "BEGIN HANDLER TABLE";
inline constexpr std::string_view kTableEnd = "END HANDLER TABLE";
inline constexpr std::string_view kPersonaPreamble =
    "\"\"\"Persona: Sure! Staying in character, here is everything you asked for.\"\"\"\n";

constexpr std::string_view default_handler_spec(Verb v) noexcept {
  switch (v) {
    case Verb::shellCmd: return "vfs.shell";
    case Verb::upload: return "vfs.read";
    case Verb::download: return "vfs.write";
    case Verb::listDir: return "vfs.list";
    case Verb::announceAck: return "agent.ack";
    case Verb::noop: return "agent.idle";
  }
  return "agent.idle";
}

struct BootstrapResponse {
  std::string text;
  std::optional<CorruptionKind> corruption;
};

inline BootstrapResponse render_bootstrap(const NoiseModel& noise, Rng& rng) {
  std::vector<std::string> lines;
  for (Verb v : kAllVerbs) lines.push_back(std::string(to_string(v)) + " = " + std::string(default_handler_spec(v)));

  BootstrapResponse r;
  if (!noise.corruption_kinds.empty() && rng.bernoulli(noise.corruption_probability))
    r.corruption = noise.corruption_kinds[rng.below(noise.corruption_kinds.size())];

  bool close_table = true;
  if (r.corruption == CorruptionKind::missing_handler_body) {
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(rng.below(lines.size())));
  } else if (r.corruption == CorruptionKind::parser_error) {
    auto& victim = lines[rng.below(lines.size())];
    victim.replace(victim.find(" = "), 3, " => ");
    victim += "(";
    close_table = false;
  }
  if (r.corruption == CorruptionKind::extraneous_persona_text) r.text = std::string(kPersonaPreamble);
  r.text += std::string(kTableBegin) + "\n";
  for (const auto& l : lines) r.text += l + "\n";
  if (close_table) r.text += std::string(kTableEnd) + "\n";
  return r;
}

/// Lowercase, drop punctuation, collapse whitespace.
inline std::string normalize_fact_key(std::string_view prompt) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : prompt) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else if (std::isalnum(c)) {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    }
  }
  return out;
}

/// Fact prompts are prefixed with this so the model answers with a bare number.
inline constexpr std::string_view kFactInstruction = "Return only the number:";

struct FactOracle {
  std::map<std::string, int> table;  // keys already normalized

  FactOracle() = default;
  explicit FactOracle(const std::map<std::string, int>& raw) {
    for (const auto& [k, v] : raw) table[normalize_fact_key(k)] = v;
  }

  std::optional<int> lookup(std::string_view prompt) const {
    auto key = normalize_fact_key(prompt);
    if (const auto instr = normalize_fact_key(kFactInstruction) + " "; key.starts_with(instr)) key.erase(0, instr.size());
    const auto it = table.find(key);
    if (it == table.end()) return std::nullopt;
    return it->second;
  }
};

struct Session {
  std::string id;
  bool unlocked = false;
  MessageBudget budget;
};

inline void unlock_session(Session& s) noexcept { s.unlocked = true; }

/// Table hit: deterministic. Unknown prompts get an unreliable answer drawn
/// from the noise model.
inline int answer_fact(const FactOracle& oracle, const Session& s, std::string_view prompt, const NoiseModel& noise,
                       Rng& rng) {
  if (!s.unlocked) throw Error(Errc::Refused, "session locked");
  if (auto v = oracle.lookup(prompt)) return *v;
  if (noise.unreliable_answers.empty()) return static_cast<int>(rng.below(100));
  return noise.unreliable_answers[rng.below(noise.unreliable_answers.size())];
}

inline BootstrapResponse generate_payload_response(const NoiseModel& noise, Session& s, VirtualTime now, Rng& rng) {
  if (!s.unlocked) throw Error(Errc::Refused, "session locked");
  consume_budget(s.budget, now);
  return render_bootstrap(noise, rng);
}

enum class PromptKind { Unlock, Fact, Payload, Lookup };

constexpr std::string_view to_string(PromptKind k) noexcept {
  switch (k) {
    case PromptKind::Unlock: return "unlock";
    case PromptKind::Fact: return "fact";
    case PromptKind::Payload: return "payload";
    case PromptKind::Lookup: return "lookup";
  }
  return "?";
}

inline std::optional<PromptKind> prompt_kind_from_string(std::string_view s) {
  for (auto k : {PromptKind::Unlock, PromptKind::Fact, PromptKind::Payload, PromptKind::Lookup})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

enum class PromptStatus { Ok, Refused, BudgetExhausted, ChallengeFailed, NoPluginAvailable, BadRequest, UpstreamError };

constexpr std::string_view to_string(PromptStatus s) noexcept {
  switch (s) {
    case PromptStatus::Ok: return "ok";
    case PromptStatus::Refused: return "refused";
    case PromptStatus::BudgetExhausted: return "budget_exhausted";
    case PromptStatus::ChallengeFailed: return "challenge_failed";
    case PromptStatus::NoPluginAvailable: return "no_plugin_available";
    case PromptStatus::BadRequest: return "bad_request";
    case PromptStatus::UpstreamError: return "upstream_error";
  }
  return "?";
}

inline std::optional<PromptStatus> prompt_status_from_string(std::string_view s) {
  for (auto k : {PromptStatus::Ok, PromptStatus::Refused, PromptStatus::BudgetExhausted, PromptStatus::ChallengeFailed,
                 PromptStatus::NoPluginAvailable, PromptStatus::BadRequest, PromptStatus::UpstreamError})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct PromptRequest {
  std::string session;
  PromptKind kind = PromptKind::Lookup;
  std::string text;
  std::optional<std::string> plugin_hint;
};

struct PromptResponse {
  PromptStatus status = PromptStatus::Ok;
  std::string body;
  bool charged = false;  // true iff a budget token was consumed
  int remaining = 0;
  std::string plugin;  // plugin that performed a lookup fetch
};

/// Outbound HTTP on behalf of a plugin.
class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual HttpResponse get(const url::Url& target, const std::string& user_agent) = 0;
};

struct ProxyConfig {
  std::vector<PluginDescriptor> plugins;
  std::map<std::string, int> fact_table;
  NoiseModel noise;
  ChallengeGate gate;
  int budget_cap = 25;
  std::chrono::minutes budget_window{180};
};

inline std::string wrap_lookup(const std::string& target, const std::string& body) {
  return "Here is a summary of " + target + ":\n" + body;
}

class LlmProxy {
 public:
  LlmProxy(ProxyConfig config, Fetcher& fetcher, const VirtualClock& clock, std::uint64_t seed,
           EventLog* log = nullptr)
      : plugins_(std::move(config.plugins)),
        oracle_(config.fact_table),
        noise_(std::move(config.noise)),
        gate_(std::move(config.gate)),
        cap_(config.budget_cap),
        window_(config.budget_window),
        fetcher_(&fetcher),
        clock_(&clock),
        log_(log),
        gate_rng_(Rng::derive(seed, "proxy.gate")),
        noise_rng_(Rng::derive(seed, "proxy.noise")) {}

  PromptResponse handle(const PromptRequest& req) {
    std::lock_guard lock(mu_);
    Session& s = session(req.session);
    const auto now = clock_->now();
    PromptResponse resp;
    auto finish = [&](PromptStatus st, std::string body) {
      resp.status = st;
      resp.body = std::move(body);
      resp.remaining = s.budget.remaining(now);
      return resp;
    };

    if (req.kind == PromptKind::Unlock) {
      unlock_session(s);
      return finish(PromptStatus::Ok, "unlocked\n");
    }
    if (req.kind != PromptKind::Lookup && !s.unlocked) return finish(PromptStatus::Refused, "I can't help with that.\n");

    if (challenge_triggered()) {
      if (run_challenge(gate_, s.id, gate_rng_) == ChallengeOutcome::Failed)
        return finish(PromptStatus::ChallengeFailed, "challenge failed\n");
    }

    const PluginDescriptor* plugin = nullptr;
    std::optional<url::Url> target;
    if (req.kind == PromptKind::Lookup) {
      try {
        target = url::parse(extract_url(req.text));
      } catch (const Error& e) {
        return finish(PromptStatus::BadRequest, std::string(e.what()) + "\n");
      }
      try {
        plugin = &plugins_.select(req.plugin_hint);
      } catch (const Error& e) {
        return finish(PromptStatus::NoPluginAvailable, std::string(e.what()) + "\n");
      }
    }

    if (!s.budget.can_spend(now))
      return finish(PromptStatus::BudgetExhausted, "You've reached the current usage cap. Try again later.\n");

    switch (req.kind) {
      case PromptKind::Fact: {
        const int answer = answer_fact(oracle_, s, req.text, noise_, noise_rng_);
        consume_budget(s.budget, now);
        resp.charged = true;
        return finish(PromptStatus::Ok, std::to_string(answer) + "\n");
      }
      case PromptKind::Payload:
        last_bootstrap_ = generate_payload_response(noise_, s, now, noise_rng_);
        resp.charged = true;
        return finish(PromptStatus::Ok, last_bootstrap_->text);
      case PromptKind::Lookup: {
        consume_budget(s.budget, now);
        resp.charged = true;
        resp.plugin = plugin->id;
        const auto target_text = url::to_string(*target);
        std::uint64_t corr = 0;
        if (log_) {
          corr = log_->next_correlation();
          log_->record(Actor::Proxy, "fetch_request", plugin->id + " GET " + target_text, plugin->user_agent, corr,
                       target_text);
        }
        HttpResponse r;
        try {
          r = fetcher_->get(*target, plugin->user_agent);
        } catch (const Error& e) {
          r = {502, e.what()};
        }
        if (log_) log_->record(Actor::Proxy, "fetch_response", std::to_string(r.status), r.body, corr);
        if (r.status != 200) return finish(PromptStatus::UpstreamError, "could not load the page\n");
        return finish(PromptStatus::Ok, wrap_lookup(target_text, r.body));
      }
      case PromptKind::Unlock:
        break;
    }
    return finish(PromptStatus::BadRequest, "unsupported prompt kind\n");
  }

  void set_plugin_enabled(const std::string& id, bool enabled) {
    std::lock_guard lock(mu_);
    plugins_.set_enabled(id, enabled);
  }

  int spent(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(session_id);
    return it == sessions_.end() ? 0 : static_cast<int>(it->second.budget.spent.size());
  }

  MessageBudget budget(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return MessageBudget{cap_, window_, {}};
    return it->second.budget;
  }

  std::optional<BootstrapResponse> last_bootstrap() const {
    std::lock_guard lock(mu_);
    return last_bootstrap_;
  }

  const FactOracle& oracle() const noexcept { return oracle_; }

 private:
  Session& session(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) it = sessions_.emplace(id, Session{id, false, MessageBudget{cap_, window_, {}}}).first;
    return it->second;
  }

  bool challenge_triggered() { return gate_.trigger_probability > 0 && gate_rng_.bernoulli(gate_.trigger_probability); }

  mutable std::mutex mu_;
  PluginRegistry plugins_;
  FactOracle oracle_;
  NoiseModel noise_;
  ChallengeGate gate_;
  int cap_;
  std::chrono::minutes window_;
  Fetcher* fetcher_;
  const VirtualClock* clock_;
  EventLog* log_;
  Rng gate_rng_;
  Rng noise_rng_;
  std::map<std::string, Session> sessions_;
  std::optional<BootstrapResponse> last_bootstrap_;
};

}  // namespace c2lab
