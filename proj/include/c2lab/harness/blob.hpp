#pragma once

// Synthetic first-stage executable for the static scanner: filler bytes with
// the prompt strings the agent carries, the bootstrap prompt stored Base64
// encoded as the agent ships it.

#include <string>

#include "c2lab/base64.hpp"
#include "c2lab/codec.hpp"
#include "c2lab/harness/scenario.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/victim_agent.hpp"

namespace c2lab::harness {

inline Bytes build_agent_blob(const ScenarioSpec& spec) {
  auto rng = Rng::derive(spec.seed, "blob");
  Bytes blob = {0x7F, 'E', 'L', 'F', 2, 1, 1, 0};
  auto filler = [&](std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) blob.push_back(static_cast<std::uint8_t>(rng.next()));
  };
  auto cstring = [&](std::string_view s) {
    blob.push_back(0);
    blob.insert(blob.end(), s.begin(), s.end());
    blob.push_back(0);
  };

  filler(512);
  cstring(std::string(kLookupPrefix) + "http://%s/" + std::string(kLookupSuffix));
  filler(256);
  for (const auto& key : spec.agent.plan.fact_prompt_keys) {
    cstring(fact_prompt(key));
    filler(64);
  }
  cstring(base64::encode(kBootstrapPrompt));
  filler(512);
  return blob;
}

}  // namespace c2lab::harness
