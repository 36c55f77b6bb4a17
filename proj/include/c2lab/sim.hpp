#pragma once

// Simulation plumbing shared by every actor: the virtual clock, a seeded
// random source and the global event sequencer.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace c2lab {

/// Virtual time since run start. All actors read time from one VirtualClock.
using VirtualTime = std::chrono::seconds;

/// Advanced only by the harness. Atomic so actors hosted on server threads
/// can read it while the harness owns the writes.
class VirtualClock {
 public:
  VirtualTime now() const noexcept { return VirtualTime{now_.load()}; }
  void advance(VirtualTime by) noexcept { now_ += by.count(); }
  void advance_to(VirtualTime t) noexcept {
    if (t.count() > now_.load()) now_ = t.count();
  }

 private:
  std::atomic<VirtualTime::rep> now_{0};
};

/// mt19937_64 output is fixed by the standard; the distributions are not, so
/// draws are mapped by hand to stay reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
  /// Exponential variate with the given mean.
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  /// Independent stream derived from this seed and a label.
  static Rng derive(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ULL;
    for (unsigned char c : label) h = (h ^ c) * 0x100000001B3ULL;
    return Rng(h);
  }

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, hex encoded. Used as a stable payload digest.
inline std::string digest(std::string_view data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : data) h = (h ^ c) * 0x100000001B3ULL;
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 15];
  return out;
}

enum class Actor { Harness, Attacker, Agent, Proxy, C2 };

constexpr std::string_view to_string(Actor a) noexcept {
  switch (a) {
    case Actor::Harness: return "harness";
    case Actor::Attacker: return "attacker";
    case Actor::Agent: return "agent";
    case Actor::Proxy: return "proxy";
    case Actor::C2: return "c2";
  }
  return "?";
}

struct Event {
  std::uint64_t seq = 0;
  VirtualTime at{0};
  Actor actor = Actor::Harness;
  std::string kind;
  std::uint64_t correlation = 0;  // 0 when the event is not part of an exchange
  std::string detail;             // short human-readable summary
  std::string url;                // network target, when the event is a request
  std::string payload_digest;
};

/// Single sequencer for all actors: sequence numbers impose a total order.
class EventLog {
 public:
  explicit EventLog(const VirtualClock& clock) : clock_(&clock) {}

  std::uint64_t record(Actor actor, std::string kind, std::string detail, std::string_view payload = {},
                       std::uint64_t correlation = 0, std::string url = {}) {
    std::lock_guard lock(mu_);
    Event e;
    e.seq = events_.size() + 1;
    e.at = clock_->now();
    e.actor = actor;
    e.kind = std::move(kind);
    e.correlation = correlation;
    e.detail = std::move(detail);
    e.url = std::move(url);
    e.payload_digest = digest(payload);
    events_.push_back(std::move(e));
    return events_.back().seq;
  }

  std::uint64_t next_correlation() {
    std::lock_guard lock(mu_);
    return ++correlation_;
  }

  std::vector<Event> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

 private:
  const VirtualClock* clock_;
  mutable std::mutex mu_;
  std::vector<Event> events_;
  std::uint64_t correlation_ = 0;
};

}  // namespace c2lab
