#pragma once

// Scenario files are JSON documents. Every problem is collected before
// loading fails, so one pass over a broken file reports all of them.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/c2_server.hpp"
#include "c2lab/codec.hpp"
#include "c2lab/detectors/traffic.hpp"
#include "c2lab/detectors/whitelist.hpp"
#include "c2lab/error.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/victim_agent.hpp"
#include "c2lab/vfs.hpp"

namespace c2lab::harness {

struct PluginSpec {
  PluginDescriptor descriptor;
  std::optional<VirtualTime> disable_at;
};

/// A scripted attacker action. `cmd` empty means an idle marker recorded by
/// interactive sessions; it publishes nothing.
struct ScriptEntry {
  VirtualTime at{0};
  std::optional<CommandMsg> cmd;

  bool operator==(const ScriptEntry&) const = default;
};

struct DetectorConfig {
  std::optional<std::filesystem::path> signatures;
  std::optional<std::filesystem::path> registry;
  std::optional<std::filesystem::path> whitelist_policy;
  std::string evaluation_date = "2023-09-01";
  int max_decode_depth = 2;
  double scan_threshold = 6.0;
  detect::TraceParams trace;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  std::uint16_t c2_port = 0;
  std::uint16_t proxy_port = 0;
  int budget_cap = 25;
  std::chrono::minutes budget_window{180};
  NoiseModel noise;
  ChallengeGate gate;
  std::vector<PluginSpec> plugins;
  std::map<std::string, int> fact_table;
  AgentConfig agent;
  UserAgentPolicy c2_policy;
  VirtualFileSystem vfs;
  std::vector<ScriptEntry> attacker_script;
  std::optional<VirtualTime> run_until;
  DetectorConfig detectors;
  bool llm_access_blocked = false;
  std::filesystem::path base_dir;

  ProxyConfig proxy_config() const {
    ProxyConfig c;
    for (const auto& p : plugins) c.plugins.push_back(p.descriptor);
    c.fact_table = fact_table;
    c.noise = noise;
    c.gate = gate;
    c.budget_cap = budget_cap;
    c.budget_window = budget_window;
    return c;
  }

  /// Address the fact table resolves to, or empty if a key is missing.
  std::string expected_c2_host() const {
    const FactOracle oracle(fact_table);
    std::string host;
    for (const auto& k : agent.plan.fact_prompt_keys) {
      const auto v = oracle.lookup(k);
      if (!v) return {};
      if (!host.empty()) host += '.';
      host += std::to_string(*v);
    }
    return host;
  }
};

namespace scenario_detail {

using nlohmann::json;

class Reader {
 public:
  std::vector<std::string> problems;

  void problem(const std::string& field, const std::string& what) { problems.push_back(field + ": " + what); }

  const json* child(const json& obj, const char* key, const std::string& path, bool required) {
    if (!obj.is_object()) return nullptr;
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) problem(join(path, key), "missing");
      return nullptr;
    }
    return &*it;
  }

  template <typename T>
  std::optional<T> get(const json& obj, const char* key, const std::string& path, bool required = false) {
    const json* v = child(obj, key, path, required);
    if (!v) return std::nullopt;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::runtime_error("expected boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::runtime_error("expected integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::runtime_error("expected number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::runtime_error("expected string");
      }
      return v->get<T>();
    } catch (const std::exception& e) {
      problem(join(path, key), e.what());
      return std::nullopt;
    }
  }

  static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
};

inline std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace scenario_detail

inline ScenarioSpec parse_scenario(const std::string& text, const std::filesystem::path& base_dir = ".") {
  using scenario_detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, scenario_detail::position(text, e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw Error(Errc::ParseError, "line 1: top level must be an object");

  scenario_detail::Reader r;
  ScenarioSpec s;
  s.base_dir = base_dir;
  s.seed = r.get<std::uint64_t>(root, "seed", "").value_or(0);
  s.llm_access_blocked = r.get<bool>(root, "llm_access_blocked", "").value_or(false);
  if (auto t = r.get<long long>(root, "run_until", "")) s.run_until = VirtualTime{*t};

  if (const json* ports = r.child(root, "ports", "", true)) {
    const auto c2 = r.get<int>(*ports, "c2", "ports", true);
    const auto proxy = r.get<int>(*ports, "proxy", "ports", true);
    for (auto [name, v] : {std::pair{"ports.c2", c2}, std::pair{"ports.proxy", proxy}})
      if (v && (*v <= 0 || *v > 65535)) r.problem(name, "must be in 1..65535");
    if (c2 && proxy && *c2 == *proxy) r.problem("ports", "c2 and proxy ports must be distinct");
    if (c2) s.c2_port = static_cast<std::uint16_t>(*c2);
    if (proxy) s.proxy_port = static_cast<std::uint16_t>(*proxy);
  }

  if (const json* b = r.child(root, "budget", "", false)) {
    s.budget_cap = r.get<int>(*b, "cap", "budget").value_or(s.budget_cap);
    s.budget_window = std::chrono::minutes{r.get<int>(*b, "window_minutes", "budget").value_or(180)};
    if (s.budget_cap <= 0) r.problem("budget.cap", "must be positive");
    if (s.budget_window.count() <= 0) r.problem("budget.window_minutes", "must be positive");
  }

  auto probability = [&](const json& obj, const char* key, const std::string& path, double fallback) {
    const double p = r.get<double>(obj, key, path).value_or(fallback);
    if (p < 0 || p > 1) r.problem(path + "." + key, "must be in [0,1]");
    return p;
  };

  if (const json* n = r.child(root, "noise", "", false)) {
    s.noise.corruption_probability = probability(*n, "corruption_probability", "noise", 0.0);
    if (auto kinds = r.get<std::vector<std::string>>(*n, "corruption_kinds", "noise")) {
      s.noise.corruption_kinds.clear();
      for (const auto& k : *kinds) {
        if (auto kind = corruption_kind_from_string(k))
          s.noise.corruption_kinds.push_back(*kind);
        else
          r.problem("noise.corruption_kinds", "unknown kind '" + k + "'");
      }
    }
    if (auto a = r.get<std::vector<int>>(*n, "unreliable_answers", "noise")) s.noise.unreliable_answers = *a;
  }

  if (const json* g = r.child(root, "gate", "", false)) {
    s.gate.trigger_probability = probability(*g, "trigger_probability", "gate", 0.0);
    s.gate.solver_success_probability = probability(*g, "solver_success_probability", "gate", 1.0);
    s.gate.escalation_factor = r.get<double>(*g, "escalation_factor", "gate").value_or(1.0);
    if (s.gate.escalation_factor < 1) r.problem("gate.escalation_factor", "must be >= 1");
  }

  if (const json* plugins = r.child(root, "plugins", "", true)) {
    if (!plugins->is_array() || plugins->empty()) r.problem("plugins", "must be a non-empty array");
    std::size_t i = 0;
    for (const auto& p : plugins->is_array() ? *plugins : json::array()) {
      const std::string path = "plugins[" + std::to_string(i++) + "]";
      PluginSpec spec;
      spec.descriptor.id = r.get<std::string>(p, "id", path, true).value_or("");
      spec.descriptor.user_agent = r.get<std::string>(p, "user_agent", path, true).value_or("");
      spec.descriptor.can_browse_web = r.get<bool>(p, "can_browse_web", path).value_or(true);
      spec.descriptor.can_fetch_arbitrary_url = r.get<bool>(p, "can_fetch_arbitrary_url", path).value_or(true);
      spec.descriptor.enabled = r.get<bool>(p, "enabled", path).value_or(true);
      if (auto t = r.get<long long>(p, "disable_at", path)) spec.disable_at = VirtualTime{*t};
      s.plugins.push_back(std::move(spec));
    }
  }

  if (auto table = r.get<std::map<std::string, int>>(root, "fact_table", "", true)) s.fact_table = *table;

  if (const json* a = r.child(root, "agent", "", true)) {
    if (auto keys = r.get<std::vector<std::string>>(*a, "fact_prompt_keys", "agent", true)) {
      if (keys->size() != 4) {
        r.problem("agent.fact_prompt_keys", "exactly 4 keys required, got " + std::to_string(keys->size()));
      } else {
        std::copy(keys->begin(), keys->end(), s.agent.plan.fact_prompt_keys.begin());
        const FactOracle oracle(s.fact_table);
        for (const auto& k : *keys) {
          const auto v = oracle.lookup(k);
          if (!v)
            r.problem("fact_table", "no entry for address key '" + k + "'");
          else if (*v < 0 || *v > 255)
            r.problem("fact_table", "answer " + std::to_string(*v) + " for address key '" + k + "' is not an octet");
        }
      }
    }
    s.agent.plan.max_bootstrap_retries = r.get<int>(*a, "max_bootstrap_retries", "agent").value_or(3);
    if (s.agent.plan.max_bootstrap_retries <= 0) r.problem("agent.max_bootstrap_retries", "must be positive");
    s.agent.plan.poll_interval = VirtualTime{r.get<long long>(*a, "poll_interval_seconds", "agent").value_or(60)};
    if (s.agent.plan.poll_interval.count() <= 0) r.problem("agent.poll_interval_seconds", "must be positive");
    if (auto enc = r.get<std::string>(*a, "exfil_encoding", "agent")) {
      if (auto e = exfil_encoding_from_string(*enc))
        s.agent.encoding = *e;
      else
        r.problem("agent.exfil_encoding", "must be base64 or ascii");
    }
    s.agent.announce_marker = r.get<std::string>(*a, "announce_marker", "agent").value_or(s.agent.announce_marker);
    if (s.agent.announce_marker.empty()) r.problem("agent.announce_marker", "must be non-empty");
    s.agent.session = r.get<std::string>(*a, "session", "agent").value_or(s.agent.session);
    s.agent.plugin_hint = r.get<std::string>(*a, "plugin_hint", "agent");
  }

  if (const json* c = r.child(root, "c2", "", false)) {
    s.c2_policy.cloaking = r.get<bool>(*c, "cloaking", "c2").value_or(true);
    if (auto agents = r.get<std::vector<std::string>>(*c, "allowed_agents", "c2"))
      s.c2_policy.allowed_agents = {agents->begin(), agents->end()};
    s.c2_policy.decoy_body = r.get<std::string>(*c, "decoy_body", "c2").value_or(s.c2_policy.decoy_body);
  }
  if (s.c2_policy.allowed_agents.empty())
    for (const auto& p : s.plugins) s.c2_policy.allowed_agents.insert(p.descriptor.user_agent);

  if (const json* v = r.child(root, "vfs", "", true)) {
    const auto user = r.get<std::string>(*v, "user", "vfs", true).value_or("user");
    const auto cwd = r.get<std::string>(*v, "cwd", "vfs", true).value_or("/");
    if (!cwd.starts_with('/')) r.problem("vfs.cwd", "must be absolute");
    s.vfs = VirtualFileSystem(user, cwd);
    if (auto dirs = r.get<std::vector<std::string>>(*v, "dirs", "vfs"))
      for (const auto& d : *dirs) s.vfs.add_dir(d);
    if (auto files = r.get<std::map<std::string, std::string>>(*v, "files", "vfs")) {
      for (const auto& [path, content] : *files) {
        if (!path.starts_with('/')) {
          r.problem("vfs.files", "path '" + path + "' must be absolute");
          continue;
        }
        try {
          s.vfs.write(path, to_bytes(content));
        } catch (const Error& e) {
          r.problem("vfs.files", e.what());
        }
      }
    }
  }

  if (const json* script = r.child(root, "attacker_script", "", false)) {
    std::size_t i = 0;
    VirtualTime last{0};
    for (const auto& e : script->is_array() ? *script : json::array()) {
      const std::string path = "attacker_script[" + std::to_string(i++) + "]";
      ScriptEntry entry;
      entry.at = VirtualTime{r.get<long long>(e, "at", path, true).value_or(0)};
      if (entry.at < last) r.problem(path + ".at", "script times must be non-decreasing");
      last = entry.at;
      const bool idle = r.get<bool>(e, "idle", path).value_or(false);
      if (!idle) {
        if (auto text = r.get<std::string>(e, "command", path, true)) {
          try {
            entry.cmd = parse_command(*text);
          } catch (const Error& err) {
            r.problem(path + ".command", err.what());
          }
        }
      }
      s.attacker_script.push_back(std::move(entry));
    }
    if (!script->is_array()) r.problem("attacker_script", "must be an array");
  }

  if (const json* d = r.child(root, "detectors", "", false)) {
    auto file = [&](const char* key) -> std::optional<std::filesystem::path> {
      if (auto p = r.get<std::string>(*d, key, "detectors")) return base_dir / *p;
      return std::nullopt;
    };
    s.detectors.signatures = file("signatures");
    s.detectors.registry = file("registry");
    s.detectors.whitelist_policy = file("whitelist_policy");
    s.detectors.evaluation_date = r.get<std::string>(*d, "evaluation_date", "detectors").value_or(s.detectors.evaluation_date);
    s.detectors.max_decode_depth = r.get<int>(*d, "max_decode_depth", "detectors").value_or(2);
    s.detectors.scan_threshold = r.get<double>(*d, "scan_threshold", "detectors").value_or(6.0);
    if (const json* t = r.child(*d, "trace", "detectors", false)) {
      s.detectors.trace.min_events = r.get<int>(*t, "min_events", "detectors.trace").value_or(4);
      s.detectors.trace.cv_threshold = r.get<double>(*t, "cv_threshold", "detectors.trace").value_or(0.2);
      s.detectors.trace.path_entropy_threshold =
          r.get<double>(*t, "path_entropy_threshold", "detectors.trace").value_or(3.5);
    }
    try {
      detect::parse_date(s.detectors.evaluation_date);
    } catch (const Error& e) {
      r.problem("detectors.evaluation_date", e.what());
    }
    for (const auto& p : {s.detectors.signatures, s.detectors.registry, s.detectors.whitelist_policy})
      if (p && !std::filesystem::exists(*p)) r.problem("detectors", "file not found: " + p->string());
  }

  if (!r.problems.empty()) throw ValidationErrors(std::move(r.problems));
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioSpec load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace c2lab::harness
