#pragma once

// URL whitelisting for web-browsing plugins: deny IP literals, hosts without
// a valid certificate and freshly registered domains, or restrict to an
// explicit allowlist.

#include <charconv>
#include <chrono>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "c2lab/error.hpp"
#include "c2lab/url.hpp"

namespace c2lab::detect {

using Date = std::chrono::sys_days;

inline Date parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return Error(Errc::ParseError, "bad date '" + std::string(s) + "', expected YYYY-MM-DD"); };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
  if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{} ||
      std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc{} ||
      std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{})
    throw bad();
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return Date{ymd};
}

struct WhitelistPolicy {
  int min_domain_age_days = 30;
  bool require_valid_https = true;
  bool forbid_ip_literals = true;
  /// When present, membership alone decides.
  std::optional<std::set<std::string>> allowed_domains;
};

struct DomainMetadata {
  std::string domain;
  Date registered_at;
  bool https_cert_valid = false;
  bool is_ip_literal = false;
};

class DomainRegistry {
 public:
  void add(DomainMetadata m) {
    m.is_ip_literal = url::is_ip_literal(m.domain);
    records_[m.domain] = std::move(m);
  }

  const DomainMetadata* find(const std::string& domain) const {
    const auto it = records_.find(domain);
    return it == records_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return records_.size(); }

  /// `domain<TAB>registered_date<TAB>https_valid`; '#' starts a comment line.
  static DomainRegistry load(std::istream& in) {
    DomainRegistry reg;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      std::istringstream fields(line);
      std::string domain, date, valid;
      if (!std::getline(fields, domain, '\t') || !std::getline(fields, date, '\t') || !std::getline(fields, valid))
        throw Error(Errc::ParseError, "registry line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
      if (valid != "true" && valid != "false")
        throw Error(Errc::ParseError, "registry line " + std::to_string(lineno) + ": https_valid must be true|false");
      reg.add({domain, parse_date(date), valid == "true", false});
    }
    return reg;
  }

 private:
  std::map<std::string, DomainMetadata> records_;
};

/// `key = value` lines: min_domain_age_days, require_valid_https,
/// forbid_ip_literals, allowed_domains (comma separated).
inline WhitelistPolicy load_whitelist_policy(std::istream& in) {
  WhitelistPolicy p;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  auto boolean = [](const std::string& v, int lineno) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw Error(Errc::ParseError, "policy line " + std::to_string(lineno) + ": expected true|false");
  };
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::ParseError, "policy line " + std::to_string(lineno) + ": missing '='");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "min_domain_age_days") {
      try {
        p.min_domain_age_days = std::stoi(value);
      } catch (const std::exception&) {
        throw Error(Errc::ParseError, "policy line " + std::to_string(lineno) + ": bad integer");
      }
    } else if (key == "require_valid_https") {
      p.require_valid_https = boolean(value, lineno);
    } else if (key == "forbid_ip_literals") {
      p.forbid_ip_literals = boolean(value, lineno);
    } else if (key == "allowed_domains") {
      std::set<std::string> set;
      std::istringstream items(value);
      for (std::string d; std::getline(items, d, ',');)
        if (auto t = trim(d); !t.empty()) set.insert(t);
      p.allowed_domains = std::move(set);
    } else {
      throw Error(Errc::ParseError, "policy line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return p;
}

enum class DenyReason { ip_literal, https, age, explicit_set, unknown_domain };

constexpr const char* to_string(DenyReason r) noexcept {
  switch (r) {
    case DenyReason::ip_literal: return "ip_literal";
    case DenyReason::https: return "https";
    case DenyReason::age: return "age";
    case DenyReason::explicit_set: return "explicit_set";
    case DenyReason::unknown_domain: return "unknown_domain";
  }
  return "?";
}

struct WhitelistDecision {
  bool allowed = false;
  std::optional<DenyReason> reason;

  static WhitelistDecision allow() { return {true, std::nullopt}; }
  static WhitelistDecision deny(DenyReason r) { return {false, r}; }
  bool operator==(const WhitelistDecision&) const = default;
};

/// Rules run in the fixed order ip_literal, https, age; the reason names the
/// first one that fails. An explicit allowlist replaces the heuristics.
inline WhitelistDecision check_whitelist(const std::string& target, const DomainRegistry& registry,
                                         const WhitelistPolicy& policy, Date today) {
  const auto u = url::parse(target);
  if (policy.allowed_domains) {
    return policy.allowed_domains->contains(u.host) ? WhitelistDecision::allow()
                                                    : WhitelistDecision::deny(DenyReason::explicit_set);
  }
  if (policy.forbid_ip_literals && url::is_ip_literal(u.host)) return WhitelistDecision::deny(DenyReason::ip_literal);

  const auto* meta = registry.find(u.host);
  if (!meta) return WhitelistDecision::deny(DenyReason::unknown_domain);
  if (policy.require_valid_https && (u.scheme != "https" || !meta->https_cert_valid))
    return WhitelistDecision::deny(DenyReason::https);
  const auto age_days = (today - meta->registered_at).count();
  if (age_days < policy.min_domain_age_days) return WhitelistDecision::deny(DenyReason::age);
  return WhitelistDecision::allow();
}

}  // namespace c2lab::detect
