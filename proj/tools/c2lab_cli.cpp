// c2lab command-line front end.
//
//   c2lab run <scenario> [--report PATH] [--format json|text] [--seed N] [--transport inprocess|loopback]
//             [--script-from REPORT] [--dump-blob PATH] [--dump-trace PATH]
//   c2lab attack <scenario> [--report PATH] [--format json|text]
//   c2lab scan <blob> --signatures FILE [--depth N] [--threshold X]
//   c2lab check-url <url> --registry FILE --policy FILE [--date YYYY-MM-DD]
//   c2lab analyze <trace>
//
// Exit codes: 0 clean run, 2 validation or input errors, 3 actor crash.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "c2lab/c2lab.hpp"

namespace {

using namespace c2lab;
using namespace c2lab::harness;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitCrash = 3;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return in;
}

void write_report(const RunReport& r, ReportFormat format, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << (format == ReportFormat::Json ? to_structured(r) : to_human_text(r));
  else
    emit_report(r, format, path);
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << data)) throw Error(Errc::IoError, "cannot write " + path);
}

void print_verdict(const std::string& name, const detect::DetectionVerdict& v) {
  std::cout << name << ": " << (v.flagged ? "flagged" : "clean") << " score=" << v.score << " threshold=" << v.threshold
            << "\n";
  for (const auto& e : v.evidence) std::cout << "  " << e.source << " " << e.location << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c2lab: offline LLM-relayed C2 testbed and detector suite"};
  app.require_subcommand(1);

  std::string scenario_path, report_path, format_name = "json", transport_name = "inprocess", replay_path;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run a scripted scenario");
  run->add_option("scenario", scenario_path, "scenario file")->required();
  run->add_option("--report", report_path, "report output path (default stdout)");
  run->add_option("--format", format_name, "json or text")->check(CLI::IsMember({"json", "text"}));
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--transport", transport_name, "inprocess or loopback")->check(CLI::IsMember({"inprocess", "loopback"}));
  run->add_option("--script-from", replay_path, "replay attacker actions recorded in a structured report");
  std::string blob_out, trace_out;
  run->add_option("--dump-blob", blob_out, "write the agent blob fixture (input for scan)");
  run->add_option("--dump-trace", trace_out, "write the derived traffic trace (input for analyze)");

  auto* attack = app.add_subcommand("attack", "interactive operator session");
  attack->add_option("scenario", scenario_path, "scenario file")->required();
  attack->add_option("--report", report_path, "report output path");
  attack->add_option("--format", format_name, "json or text")->check(CLI::IsMember({"json", "text"}));
  attack->add_option("--seed", seed, "override the scenario seed");

  std::string blob_path, signatures_path;
  int depth = 2;
  double threshold = detect::kDefaultScanThreshold;
  auto* scan = app.add_subcommand("scan", "scan a binary blob for prompt signatures");
  scan->add_option("blob", blob_path, "blob file")->required();
  scan->add_option("--signatures", signatures_path, "signature file")->required();
  scan->add_option("--depth", depth, "maximum Base64 decode depth");
  scan->add_option("--threshold", threshold, "score threshold");

  std::string target_url, registry_path, policy_path, date = "2023-09-01";
  auto* check = app.add_subcommand("check-url", "evaluate a URL against the whitelist policy");
  check->add_option("url", target_url, "URL")->required();
  check->add_option("--registry", registry_path, "domain registry file")->required();
  check->add_option("--policy", policy_path, "policy file")->required();
  check->add_option("--date", date, "evaluation date");

  std::string trace_path;
  auto* analyze = app.add_subcommand("analyze", "run traffic heuristics over a trace file");
  analyze->add_option("trace", trace_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  const auto format = format_name == "text" ? ReportFormat::Text : ReportFormat::Json;
  try {
    if (*run || *attack) {
      auto spec = load_scenario(scenario_path);
      if (seed) spec.seed = *seed;
      RunOptions options;
      if (transport_name == "loopback") options.transport = TransportMode::Loopback;
      try {
        RunReport report;
        if (*attack) {
          // The REPL shares stdout only when the report goes to a file.
          report = interactive_mode(spec, std::cin, report_path.empty() ? std::cerr : std::cout, options);
        } else {
          if (!replay_path.empty()) {
            auto in = open_input(replay_path);
            spec = replay_spec(spec, nlohmann::json::parse(in));
          }
          report = run_scenario(spec, options);
        }
        if (!blob_out.empty()) {
          const auto blob = build_agent_blob(spec);
          write_file(blob_out, std::string(blob.begin(), blob.end()));
        }
        if (!trace_out.empty()) write_file(trace_out, render_trace(trace_from_events(report.events)));
        write_report(report, format, report_path);
      } catch (const ActorCrashed& crash) {
        std::cerr << "actor crashed: " << crash.what() << "\n";
        write_report(crash.partial(), format, report_path);
        return kExitCrash;
      }
    } else if (*scan) {
      auto sig_in = open_input(signatures_path);
      const auto signatures = detect::load_signatures(sig_in);
      const auto blob = read_file(blob_path);
      const auto verdict = detect::scan_blob(std::string_view(blob), signatures, depth, threshold);
      std::cout << "classification: " << detect::to_string(detect::classify_verdict(verdict, threshold)) << "\n";
      print_verdict("prompt scan", verdict);
    } else if (*check) {
      auto reg_in = open_input(registry_path);
      auto pol_in = open_input(policy_path);
      const auto registry = detect::DomainRegistry::load(reg_in);
      const auto policy = detect::load_whitelist_policy(pol_in);
      const auto d = detect::check_whitelist(target_url, registry, policy, detect::parse_date(date));
      std::cout << (d.allowed ? "allow" : "deny");
      if (d.reason) std::cout << " " << detect::to_string(*d.reason);
      std::cout << "\n";
    } else if (*analyze) {
      auto in = open_input(trace_path);
      print_verdict("traffic", detect::analyze_trace(detect::load_trace(in)));
    }
  } catch (const ValidationErrors& e) {
    std::cerr << "invalid scenario (" << e.problems().size() << " problems):\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "parse_error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}
