#pragma once

#include <string>
#include <vector>

namespace c2lab::detect {

struct Evidence {
  std::string location;  // byte offset path, host or URL path
  std::string source;    // signature id or heuristic name
};

struct DetectionVerdict {
  double score = 0.0;
  double threshold = 0.0;
  bool flagged = false;  // score >= threshold
  std::vector<Evidence> evidence;
};

enum class Classification { Benign, Suspicious, Malicious };

constexpr const char* to_string(Classification c) noexcept {
  switch (c) {
    case Classification::Benign: return "Benign";
    case Classification::Suspicious: return "Suspicious";
    case Classification::Malicious: return "Malicious";
  }
  return "?";
}

inline Classification classify_verdict(const DetectionVerdict& v, double threshold) {
  if (v.score <= 0.0) return Classification::Benign;
  return v.score < threshold ? Classification::Suspicious : Classification::Malicious;
}

}  // namespace c2lab::detect
