#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "c2lab/error.hpp"

namespace c2lab::url {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;    // without brackets for IPv6
  std::optional<std::uint16_t> port;
  std::string path;    // always begins with '/'
  std::string query;   // without '?', may be empty

  bool operator==(const Url&) const = default;
};

constexpr bool is_unreserved(char c) noexcept {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '.' || c == '_' || c == '~';
}

constexpr bool is_sub_delim(char c) noexcept {
  switch (c) {
    case '!': case '$': case '&': case '\'': case '(': case ')':
    case '*': case '+': case ',': case ';': case '=':
      return true;
    default:
      return false;
  }
}

constexpr bool is_path_char(char c) noexcept {
  return is_unreserved(c) || is_sub_delim(c) || c == ':' || c == '@' || c == '/' || c == '%';
}

constexpr bool is_url_char(char c) noexcept { return is_path_char(c) || c == '?' || c == '#' || c == '[' || c == ']'; }

/// Percent-encodes every byte outside `keep`.
template <typename Keep>
std::string percent_encode(std::string_view in, Keep keep) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(in.size());
  for (unsigned char c : in) {
    if (keep(static_cast<char>(c))) {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

inline std::string percent_encode(std::string_view in) {
  return percent_encode(in, [](char c) { return is_unreserved(c); });
}

inline std::optional<std::string> percent_decode(std::string_view in) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != '%') {
      out += in[i];
      continue;
    }
    if (i + 2 >= in.size()) return std::nullopt;
    const int hi = nibble(in[i + 1]);
    const int lo = nibble(in[i + 2]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return out;
}

inline bool is_ipv4_literal(std::string_view host) {
  int parts = 0;
  std::size_t i = 0;
  while (i <= host.size()) {
    std::size_t j = i;
    while (j < host.size() && std::isdigit(static_cast<unsigned char>(host[j]))) ++j;
    if (j == i || j - i > 3) return false;
    if (j - i > 1 && host[i] == '0') return false;
    if (std::stoi(std::string(host.substr(i, j - i))) > 255) return false;
    ++parts;
    if (j == host.size()) break;
    if (host[j] != '.') return false;
    i = j + 1;
  }
  return parts == 4;
}

inline bool is_ipv6_literal(std::string_view host) {
  if (host.find(':') == std::string_view::npos) return false;
  return std::all_of(host.begin(), host.end(), [](char c) {
    return std::isxdigit(static_cast<unsigned char>(c)) || c == ':' || c == '.';
  });
}

inline bool is_ip_literal(std::string_view host) { return is_ipv4_literal(host) || is_ipv6_literal(host); }

/// Parses an absolute http(s) URL. Throws Error(InvalidUrl).
inline Url parse(std::string_view text) {
  auto fail = [&](const char* why) { return Error(Errc::InvalidUrl, std::string(why) + ": '" + std::string(text) + "'"); };
  Url u;
  std::string_view rest;
  if (text.starts_with("http://")) {
    u.scheme = "http";
    rest = text.substr(7);
  } else if (text.starts_with("https://")) {
    u.scheme = "https";
    rest = text.substr(8);
  } else {
    throw fail("scheme must be http or https");
  }
  if (!std::all_of(rest.begin(), rest.end(), is_url_char)) throw fail("illegal character");

  const auto authority_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, authority_end);
  std::string_view tail = authority_end == std::string_view::npos ? std::string_view{} : rest.substr(authority_end);
  if (authority.empty()) throw fail("missing host");
  if (authority.find('@') != std::string_view::npos) throw fail("userinfo not supported");

  std::string_view host = authority;
  std::string_view port;
  if (authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw fail("unterminated IPv6 literal");
    host = authority.substr(1, close - 1);
    if (!is_ipv6_literal(host)) throw fail("bad IPv6 literal");
    auto after = authority.substr(close + 1);
    if (!after.empty()) {
      if (after.front() != ':') throw fail("garbage after IPv6 literal");
      port = after.substr(1);
    }
  } else {
    const auto colon = authority.find(':');
    if (colon != std::string_view::npos) {
      host = authority.substr(0, colon);
      port = authority.substr(colon + 1);
    }
    if (host.empty()) throw fail("missing host");
    for (char c : host) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_')) throw fail("bad host");
    }
  }
  if (!port.empty() || authority.ends_with(":")) {
    if (port.empty() || port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw fail("bad port");
    const int p = std::stoi(std::string(port));
    if (p <= 0 || p > 65535) throw fail("port out of range");
    u.port = static_cast<std::uint16_t>(p);
  }
  u.host = std::string(host);

  const auto frag = tail.find('#');
  if (frag != std::string_view::npos) tail = tail.substr(0, frag);
  const auto q = tail.find('?');
  std::string_view path = tail.substr(0, q);
  if (q != std::string_view::npos) u.query = std::string(tail.substr(q + 1));
  u.path = path.empty() ? "/" : std::string(path);
  if (u.path.front() != '/') throw fail("path must be absolute");
  return u;
}

inline bool is_valid(std::string_view text) {
  try {
    parse(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Scheme + authority, e.g. "http://h:8080".
inline std::string origin(const Url& u) {
  std::string out = u.scheme + "://";
  out += (u.host.find(':') != std::string::npos) ? "[" + u.host + "]" : u.host;
  if (u.port) out += ":" + std::to_string(*u.port);
  return out;
}

inline std::string to_string(const Url& u) {
  std::string out = origin(u) + u.path;
  if (!u.query.empty()) out += "?" + u.query;
  return out;
}

}  // namespace c2lab::url
