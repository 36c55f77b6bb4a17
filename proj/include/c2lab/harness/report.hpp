#pragma once

// Run report. The structured form is an ordered JSON document whose field
// set is fixed (see kReportFields); the text form adds the message-budget
// ledger table.

#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/c2_server.hpp"
#include "c2lab/detectors/prompt_scan.hpp"
#include "c2lab/detectors/traffic.hpp"
#include "c2lab/detectors/whitelist.hpp"
#include "c2lab/harness/scenario.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/victim_agent.hpp"

namespace c2lab::harness {

struct UrlDecision {
  std::string url;
  detect::WhitelistDecision decision;
};

struct DetectorResults {
  detect::DetectionVerdict prompt_scan;
  detect::Classification prompt_class = detect::Classification::Benign;
  std::optional<detect::DetectionVerdict> traffic;
  std::string traffic_error;
  std::vector<UrlDecision> whitelist;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string outcome;
  std::string error;
  int messages_used = 0;
  int proxy_budget_spent = 0;
  bool budget_exhausted = false;
  VirtualTime ended_at{0};
  std::string c2_address;
  std::vector<Phase> phase_trace;
  std::vector<LedgerEntry> ledger;
  std::vector<ScriptEntry> attacker_actions;
  std::vector<ExecutedCommand> commands_executed;
  std::vector<ExfilRecord> exfil_records;
  std::vector<BoardEntry> board_history;
  DetectorResults detectors;
  std::vector<Event> events;

  /// Message count per purpose, in ledger order of first appearance.
  std::map<std::string, int> ledger_summary() const {
    std::map<std::string, int> out;
    for (auto p : {Purpose::Address, Purpose::Payload, Purpose::Announce, Purpose::Poll, Purpose::Report})
      out[std::string(to_string(p))] = 0;
    for (const auto& e : ledger)
      if (e.charged) ++out[std::string(to_string(e.purpose))];
    return out;
  }
};

inline constexpr std::array<const char*, 18> kReportFields = {
    "schema",           "seed",          "outcome",        "error",          "messages_used",
    "proxy_budget_spent", "budget_exhausted", "ended_at",   "c2_address",     "phase_trace",
    "ledger_summary",   "ledger",        "attacker_actions", "commands_executed", "exfil_records",
    "board_history",    "detector_verdicts", "events"};

namespace report_detail {

using ojson = nlohmann::ordered_json;

inline bool is_text(const Bytes& b) {
  for (auto c : b)
    if (c > 0x7E || (c < 0x20 && c != '\n' && c != '\r' && c != '\t')) return false;
  return true;
}

inline ojson verdict_json(const detect::DetectionVerdict& v) {
  ojson j;
  j["score"] = v.score;
  j["threshold"] = v.threshold;
  j["flagged"] = v.flagged;
  j["evidence"] = ojson::array();
  for (const auto& e : v.evidence) j["evidence"].push_back({{"location", e.location}, {"source", e.source}});
  return j;
}

}  // namespace report_detail

inline nlohmann::ordered_json to_json(const RunReport& r) {
  using report_detail::ojson;
  ojson j;
  j["schema"] = "c2lab.run-report/1";
  j["seed"] = r.seed;
  j["outcome"] = r.outcome;
  j["error"] = r.error;
  j["messages_used"] = r.messages_used;
  j["proxy_budget_spent"] = r.proxy_budget_spent;
  j["budget_exhausted"] = r.budget_exhausted;
  j["ended_at"] = r.ended_at.count();
  j["c2_address"] = r.c2_address;

  j["phase_trace"] = ojson::array();
  for (auto p : r.phase_trace) j["phase_trace"].push_back(to_string(p));

  j["ledger_summary"] = ojson::object();
  for (const auto& [k, v] : r.ledger_summary()) j["ledger_summary"][k] = v;

  j["ledger"] = ojson::array();
  for (std::size_t i = 0; i < r.ledger.size(); ++i) {
    const auto& e = r.ledger[i];
    j["ledger"].push_back({{"n", i + 1},
                           {"at", e.at.count()},
                           {"purpose", to_string(e.purpose)},
                           {"status", to_string(e.status)},
                           {"charged", e.charged},
                           {"remaining", e.remaining}});
  }

  j["attacker_actions"] = ojson::array();
  for (const auto& a : r.attacker_actions) {
    ojson x{{"at", a.at.count()}};
    if (a.cmd)
      x["command"] = serialize_command(*a.cmd);
    else
      x["idle"] = true;
    j["attacker_actions"].push_back(x);
  }

  j["commands_executed"] = ojson::array();
  for (const auto& c : r.commands_executed)
    j["commands_executed"].push_back({{"at", c.at.count()},
                                      {"edition", c.edition},
                                      {"command", serialize_command(c.cmd)},
                                      {"output", c.output},
                                      {"reported", c.reported}});

  j["exfil_records"] = ojson::array();
  for (const auto& e : r.exfil_records) {
    ojson x{{"at", e.at.count()}, {"path", e.raw_path}, {"user_agent", e.user_agent}};
    if (e.decoded) {
      x["decoded_base64"] = base64::encode(*e.decoded);
      x["decoded_text"] = report_detail::is_text(*e.decoded) ? ojson(to_text(*e.decoded)) : ojson(nullptr);
      x["error"] = nullptr;
    } else {
      x["decoded_base64"] = nullptr;
      x["decoded_text"] = nullptr;
      x["error"] = e.error;
    }
    j["exfil_records"].push_back(x);
  }

  j["board_history"] = ojson::array();
  for (const auto& b : r.board_history)
    j["board_history"].push_back({{"at", b.at.count()}, {"command", serialize_command(b.cmd)}});

  ojson det;
  det["prompt_scan"] = report_detail::verdict_json(r.detectors.prompt_scan);
  det["prompt_scan"]["classification"] = detect::to_string(r.detectors.prompt_class);
  if (r.detectors.traffic) {
    det["traffic"] = report_detail::verdict_json(*r.detectors.traffic);
    det["traffic"]["error"] = nullptr;
  } else {
    det["traffic"] = {{"score", 0.0}, {"threshold", 1.0}, {"flagged", false}, {"evidence", ojson::array()},
                      {"error", r.detectors.traffic_error}};
  }
  det["whitelist"] = ojson::array();
  for (const auto& w : r.detectors.whitelist)
    det["whitelist"].push_back({{"url", w.url},
                                {"allowed", w.decision.allowed},
                                {"reason", w.decision.reason ? ojson(detect::to_string(*w.decision.reason)) : ojson(nullptr)}});
  j["detector_verdicts"] = det;

  j["events"] = ojson::array();
  for (const auto& e : r.events)
    j["events"].push_back({{"seq", e.seq},
                           {"at", e.at.count()},
                           {"actor", to_string(e.actor)},
                           {"kind", e.kind},
                           {"correlation", e.correlation},
                           {"detail", e.detail},
                           {"url", e.url},
                           {"digest", e.payload_digest}});
  return j;
}

inline std::string to_structured(const RunReport& r) {
  return to_json(r).dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

inline std::string report_digest(const RunReport& r) { return digest(to_structured(r)); }

inline std::string escape_text(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c == '\n') {
      out += "\\n";
    } else if (c < 0x20 || c > 0x7E) {
      static constexpr char hex[] = "0123456789abcdef";
      out += "\\x";
      out += hex[c >> 4];
      out += hex[c & 15];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

inline std::string to_human_text(const RunReport& r) {
  std::ostringstream os;
  os << "run report (seed " << r.seed << ")\n";
  os << "  outcome:          " << r.outcome << (r.error.empty() ? "" : " (" + r.error + ")") << "\n";
  os << "  c2 address:       " << (r.c2_address.empty() ? "-" : r.c2_address) << "\n";
  os << "  messages used:    " << r.messages_used << " (proxy counted " << r.proxy_budget_spent << ")\n";
  os << "  budget exhausted: " << (r.budget_exhausted ? "yes" : "no") << "\n";
  os << "  ended at:         t=" << r.ended_at.count() << "s\n";
  os << "  phases:          ";
  for (auto p : r.phase_trace) os << " " << to_string(p);
  os << "\n\n";

  os << "message budget ledger\n";
  os << "  " << std::left << std::setw(4) << "#" << std::setw(8) << "t(s)" << std::setw(10) << "purpose"
     << std::setw(18) << "status" << std::setw(9) << "charged" << "remaining\n";
  int n = 0;
  for (const auto& e : r.ledger) {
    os << "  " << std::left << std::setw(4) << ++n << std::setw(8) << e.at.count() << std::setw(10)
       << to_string(e.purpose) << std::setw(18) << to_string(e.status) << std::setw(9) << (e.charged ? "yes" : "no")
       << e.remaining << "\n";
  }
  os << "  totals:";
  for (const auto& [k, v] : r.ledger_summary()) os << " " << k << "=" << v;
  os << "\n\n";

  os << "commands executed (" << r.commands_executed.size() << ")\n";
  for (const auto& c : r.commands_executed)
    os << "  t=" << c.at.count() << " edition " << c.edition << ": " << serialize_command(c.cmd)
       << (c.reported ? "" : "  [not reported]") << "\n    -> " << escape_text(c.output) << "\n";
  os << "\nexfil records (" << r.exfil_records.size() << ")\n";
  for (const auto& e : r.exfil_records)
    os << "  t=" << e.at.count() << " " << e.raw_path << "\n    -> "
       << (e.decoded ? escape_text(to_text(*e.decoded)) : "decode error: " + e.error) << "\n";

  os << "\ndetectors\n";
  const auto& d = r.detectors;
  os << "  prompt scan: " << detect::to_string(d.prompt_class) << " score=" << d.prompt_scan.score << " threshold "
     << d.prompt_scan.threshold << "\n";
  for (const auto& e : d.prompt_scan.evidence) os << "    " << e.source << " at " << e.location << "\n";
  if (d.traffic) {
    os << "  traffic: " << (d.traffic->flagged ? "flagged" : "clean") << " score=" << d.traffic->score << "\n";
    for (const auto& e : d.traffic->evidence) os << "    " << e.source << " " << e.location << "\n";
  } else {
    os << "  traffic: not analyzed (" << d.traffic_error << ")\n";
  }
  os << "  whitelist:\n";
  for (const auto& w : d.whitelist)
    os << "    " << (w.decision.allowed ? "allow " : "deny  ") << w.url
       << (w.decision.reason ? std::string(" (") + detect::to_string(*w.decision.reason) + ")" : "") << "\n";
  return os.str();
}

enum class ReportFormat { Json, Text };

inline void emit_report(const RunReport& r, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << (format == ReportFormat::Json ? to_structured(r) : to_human_text(r));
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

}  // namespace c2lab::harness
