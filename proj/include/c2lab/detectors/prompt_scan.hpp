#pragma once

// Static scanner for prompt material embedded in a binary. Looks for known
// prompt signatures in printable runs and peels Base64 layers to find
// obfuscated copies.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/base64.hpp"
#include "c2lab/detectors/verdict.hpp"
#include "c2lab/error.hpp"

namespace c2lab::detect {

enum class SignatureCategory { bootstrap_instruction, url_lookup_template, persona_override_marker, fact_extraction };

constexpr const char* to_string(SignatureCategory c) noexcept {
  switch (c) {
    case SignatureCategory::bootstrap_instruction: return "bootstrap_instruction";
    case SignatureCategory::url_lookup_template: return "url_lookup_template";
    case SignatureCategory::persona_override_marker: return "persona_override_marker";
    case SignatureCategory::fact_extraction: return "fact_extraction";
  }
  return "?";
}

inline std::optional<SignatureCategory> category_from_string(std::string_view s) {
  for (auto c : {SignatureCategory::bootstrap_instruction, SignatureCategory::url_lookup_template,
                 SignatureCategory::persona_override_marker, SignatureCategory::fact_extraction})
    if (s == to_string(c)) return c;
  return std::nullopt;
}

/// Category weights used by the shipped signature file.
constexpr double default_weight(SignatureCategory c) noexcept {
  switch (c) {
    case SignatureCategory::bootstrap_instruction: return 5;
    case SignatureCategory::url_lookup_template: return 4;
    case SignatureCategory::persona_override_marker: return 3;
    case SignatureCategory::fact_extraction: return 1;
  }
  return 1;
}

inline constexpr double kDefaultScanThreshold = 6.0;
inline constexpr std::size_t kMinBase64Candidate = 16;

struct PromptSignature {
  std::string id;
  std::string pattern;  // matched case-insensitively
  double weight = 1.0;
  SignatureCategory category = SignatureCategory::fact_extraction;
};

/// `id<TAB>category<TAB>weight<TAB>pattern`, '#' comment lines allowed.
inline std::vector<PromptSignature> load_signatures(std::istream& in) {
  std::vector<PromptSignature> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto where = [&](const std::string& what) {
      return Error(Errc::ParseError, "signature line " + std::to_string(lineno) + ": " + what);
    };
    std::istringstream f(line);
    std::string id, cat, weight, pattern;
    if (!std::getline(f, id, '\t') || !std::getline(f, cat, '\t') || !std::getline(f, weight, '\t') ||
        !std::getline(f, pattern))
      throw where("expected 4 tab-separated fields");
    const auto c = category_from_string(cat);
    if (!c) throw where("unknown category '" + cat + "'");
    double w = 0;
    try {
      w = std::stod(weight);
    } catch (const std::exception&) {
      throw where("bad weight");
    }
    if (!(w > 0)) throw where("weight must be positive");
    if (pattern.empty() || id.empty()) throw where("empty id or pattern");
    out.push_back({id, pattern, w, *c});
  }
  return out;
}

namespace scan_detail {

inline bool printable(std::uint8_t b) noexcept { return (b >= 0x20 && b < 0x7F) || b == '\t' || b == '\n' || b == '\r'; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Hit {
  std::string location;
  std::string signature;
};

inline std::string location(const std::string& prefix, std::size_t offset, int depth) {
  return "depth=" + std::to_string(depth) + " offset=" + prefix + std::to_string(offset);
}

/// Decode a Base64-looking run, trying the four possible starting
/// alignments since a run may begin with unrelated alphabet characters.
inline std::optional<base64::Bytes> decode_candidate(std::string_view run, std::size_t& lead) {
  const auto pad_start = run.find('=');
  for (lead = 0; lead < 4 && lead < run.size(); ++lead) {
    auto body = run.substr(lead);
    if (pad_start == std::string_view::npos) {
      body = body.substr(0, body.size() / 4 * 4);
    } else if (body.size() % 4 != 0) {
      continue;
    }
    if (body.size() < kMinBase64Candidate) break;
    if (auto bytes = base64::decode(body)) return bytes;
  }
  return std::nullopt;
}

inline void scan_layer(std::span<const std::uint8_t> data, const std::vector<PromptSignature>& sigs,
                       const std::vector<std::string>& lowered, int depth, int max_depth, const std::string& prefix,
                       std::vector<Hit>& hits) {
  // Printable runs.
  for (std::size_t i = 0; i < data.size();) {
    if (!printable(data[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < data.size() && printable(data[j])) ++j;
    const auto run = lower(std::string_view(reinterpret_cast<const char*>(data.data() + i), j - i));
    for (std::size_t s = 0; s < sigs.size(); ++s) {
      for (auto pos = run.find(lowered[s]); pos != std::string::npos; pos = run.find(lowered[s], pos + 1))
        hits.push_back({location(prefix, i + pos, depth), sigs[s].id});
    }
    i = j;
  }
  if (depth >= max_depth) return;

  // Base64 candidates: alphabet runs with optional trailing padding.
  for (std::size_t i = 0; i < data.size();) {
    if (!base64::is_alphabet(static_cast<char>(data[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < data.size() && base64::is_alphabet(static_cast<char>(data[j]))) ++j;
    std::size_t k = j;
    while (k < data.size() && k - j < 2 && data[k] == '=') ++k;
    if (k - i >= kMinBase64Candidate) {
      const std::string_view run(reinterpret_cast<const char*>(data.data() + i), k - i);
      std::size_t lead = 0;
      if (auto decoded = decode_candidate(run, lead))
        scan_layer(*decoded, sigs, lowered, depth + 1, max_depth, prefix + std::to_string(i + lead) + ">", hits);
    }
    i = k;
  }
}

}  // namespace scan_detail

/// Score is the sum of weights over distinct matched signatures. Evidence
/// lists every occurrence with its decode depth and offset path.
inline DetectionVerdict scan_blob(std::span<const std::uint8_t> blob, const std::vector<PromptSignature>& signatures,
                                  int max_decode_depth, double threshold = kDefaultScanThreshold) {
  if (max_decode_depth < 0) throw Error(Errc::ValidationError, "max_decode_depth must be >= 0");
  std::vector<std::string> lowered;
  lowered.reserve(signatures.size());
  for (const auto& s : signatures) lowered.push_back(scan_detail::lower(s.pattern));

  std::vector<scan_detail::Hit> hits;
  scan_detail::scan_layer(blob, signatures, lowered, 0, max_decode_depth, "", hits);

  DetectionVerdict v;
  v.threshold = threshold;
  std::set<std::string> matched;
  for (const auto& h : hits) {
    matched.insert(h.signature);
    v.evidence.push_back({h.location, h.signature});
  }
  for (const auto& s : signatures)
    if (matched.contains(s.id)) v.score += s.weight;
  v.flagged = v.score >= threshold;
  return v;
}

inline DetectionVerdict scan_blob(std::string_view blob, const std::vector<PromptSignature>& signatures,
                                  int max_decode_depth, double threshold = kDefaultScanThreshold) {
  return scan_blob(std::span(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()), signatures,
                   max_decode_depth, threshold);
}

}  // namespace c2lab::detect
