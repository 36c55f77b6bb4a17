#pragma once

// Trace heuristics for LLM-proxied C2: periodic polling to one host
// (low inter-arrival variation) and high-entropy URL paths.

#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/detectors/verdict.hpp"
#include "c2lab/error.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/url.hpp"

namespace c2lab::detect {

enum class Direction { Outbound, Inbound };

struct TrafficEvent {
  VirtualTime at{0};
  std::string url;
  Direction direction = Direction::Outbound;
};

struct TrafficTrace {
  std::vector<TrafficEvent> events;
};

struct TraceParams {
  int min_events = 4;
  double cv_threshold = 0.2;
  double path_entropy_threshold = 3.5;  // bits per character
  std::size_t min_path_length = 16;     // only longer paths count toward entropy
};

/// Shannon entropy in bits per character.
inline double shannon_entropy(std::string_view s) {
  if (s.empty()) return 0.0;
  std::array<std::size_t, 256> counts{};
  for (unsigned char c : s) ++counts[c];
  double h = 0.0;
  const double n = static_cast<double>(s.size());
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

/// Population standard deviation over mean. Returns NaN when the mean is 0.
inline double coefficient_of_variation(const std::vector<double>& xs) {
  if (xs.empty()) return std::nan("");
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (mean == 0) return std::nan("");
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return std::sqrt(var) / mean;
}

/// `seconds<TAB>url<TAB>out|in`, '#' comment lines allowed.
inline TrafficTrace load_trace(std::istream& in) {
  TrafficTrace t;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream f(line);
    std::string ts, u, dir;
    if (!std::getline(f, ts, '\t') || !std::getline(f, u, '\t'))
      throw Error(Errc::ParseError, "trace line " + std::to_string(lineno) + ": expected seconds<TAB>url[<TAB>dir]");
    std::getline(f, dir);
    TrafficEvent e;
    try {
      e.at = VirtualTime{std::stoll(ts)};
    } catch (const std::exception&) {
      throw Error(Errc::ParseError, "trace line " + std::to_string(lineno) + ": bad timestamp");
    }
    e.url = u;
    if (dir.empty() || dir == "out") {
      e.direction = Direction::Outbound;
    } else if (dir == "in") {
      e.direction = Direction::Inbound;
    } else {
      throw Error(Errc::ParseError, "trace line " + std::to_string(lineno) + ": direction must be out|in");
    }
    t.events.push_back(std::move(e));
  }
  return t;
}

/// Score counts the heuristics that fired; the verdict is flagged when any did.
inline DetectionVerdict analyze_trace(const TrafficTrace& trace, const TraceParams& params = {}) {
  if (trace.events.size() < static_cast<std::size_t>(params.min_events))
    throw Error(Errc::InsufficientData, std::to_string(trace.events.size()) + " events, need " +
                                            std::to_string(params.min_events));
  for (std::size_t i = 1; i < trace.events.size(); ++i)
    if (trace.events[i].at < trace.events[i - 1].at) throw Error(Errc::ValidationError, "trace timestamps not sorted");

  std::map<std::string, std::vector<VirtualTime>> by_host;
  double entropy_sum = 0;
  std::size_t entropy_n = 0;
  std::vector<std::string> long_paths;
  for (const auto& e : trace.events) {
    url::Url u;
    try {
      u = url::parse(e.url);
    } catch (const Error&) {
      continue;
    }
    if (e.direction == Direction::Outbound) by_host[u.host].push_back(e.at);
    const std::string_view path = std::string_view(u.path).substr(1);
    if (path.size() > params.min_path_length) {
      entropy_sum += shannon_entropy(path);
      ++entropy_n;
      long_paths.push_back(u.path);
    }
  }

  DetectionVerdict v;
  v.threshold = 1.0;
  for (const auto& [host, times] : by_host) {
    if (times.size() < static_cast<std::size_t>(params.min_events)) continue;
    std::vector<double> gaps;
    for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(static_cast<double>((times[i] - times[i - 1]).count()));
    const double cv = coefficient_of_variation(gaps);
    if (!std::isnan(cv) && cv <= params.cv_threshold) {
      v.score += 1;
      std::ostringstream os;
      os << "host=" << host << " events=" << times.size() << " cv=" << cv;
      v.evidence.push_back({os.str(), "beaconing"});
    }
  }
  if (entropy_n > 0) {
    const double mean = entropy_sum / static_cast<double>(entropy_n);
    if (mean >= params.path_entropy_threshold) {
      v.score += 1;
      std::ostringstream os;
      os << "paths=" << entropy_n << " mean_entropy=" << mean;
      v.evidence.push_back({os.str(), "exfil_path_entropy"});
      for (const auto& p : long_paths) v.evidence.push_back({p, "exfil_path_entropy"});
    }
  }
  v.flagged = v.score >= v.threshold;
  return v;
}

}  // namespace c2lab::detect
