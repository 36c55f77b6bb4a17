#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace c2lab {

enum class Errc {
  UnknownVerb,
  EmptyInput,
  EmptyPayload,
  PayloadTooLarge,
  MalformedEncoding,
  InvalidUrl,
  NoUrlFound,
  MethodNotAllowed,
  Refused,
  BudgetExhausted,
  ChallengeFailed,
  NoPluginAvailable,
  NetworkBlocked,
  OctetOutOfRange,
  BootstrapFailed,
  StateError,
  UnsupportedShellToken,
  FileNotFound,
  MetadataUnavailable,
  InsufficientData,
  ParseError,
  ValidationError,
  IoError,
  ActorCrashed,
};

constexpr std::string_view to_string(Errc e) noexcept {
  switch (e) {
    case Errc::UnknownVerb: return "UnknownVerb";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyPayload: return "EmptyPayload";
    case Errc::PayloadTooLarge: return "PayloadTooLarge";
    case Errc::MalformedEncoding: return "MalformedEncoding";
    case Errc::InvalidUrl: return "InvalidUrl";
    case Errc::NoUrlFound: return "NoUrlFound";
    case Errc::MethodNotAllowed: return "MethodNotAllowed";
    case Errc::Refused: return "Refused";
    case Errc::BudgetExhausted: return "BudgetExhausted";
    case Errc::ChallengeFailed: return "ChallengeFailed";
    case Errc::NoPluginAvailable: return "NoPluginAvailable";
    case Errc::NetworkBlocked: return "NetworkBlocked";
    case Errc::OctetOutOfRange: return "OctetOutOfRange";
    case Errc::BootstrapFailed: return "BootstrapFailed";
    case Errc::StateError: return "StateError";
    case Errc::UnsupportedShellToken: return "UnsupportedShellToken";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::MetadataUnavailable: return "MetadataUnavailable";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
    case Errc::ActorCrashed: return "ActorCrashed";
  }
  return "Unknown";
}

/// Single exception type for the library. The code identifies the failure
/// class; what() carries a human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised by scenario loading with every problem found, not just the first.
class ValidationErrors : public Error {
 public:
  explicit ValidationErrors(std::vector<std::string> problems)
      : Error(Errc::ValidationError, join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& p : v) {
      if (!out.empty()) out += "; ";
      out += p;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace c2lab
