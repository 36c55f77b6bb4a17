#pragma once

// In-process wiring between actors. The same interfaces are implemented over
// loopback HTTP in loopback.hpp.

#include <map>
#include <string>

#include "c2lab/c2_server.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/sim.hpp"

namespace c2lab {

class ProxyClient {
 public:
  virtual ~ProxyClient() = default;
  virtual PromptResponse send(const PromptRequest& req) = 0;
};

class InProcessProxyClient final : public ProxyClient {
 public:
  explicit InProcessProxyClient(LlmProxy& proxy) : proxy_(&proxy) {}
  PromptResponse send(const PromptRequest& req) override { return proxy_->handle(req); }

 private:
  LlmProxy* proxy_;
};

/// Network policy that drops all traffic to the LLM service.
class BlockedProxyClient final : public ProxyClient {
 public:
  PromptResponse send(const PromptRequest&) override {
    throw Error(Errc::NetworkBlocked, "outbound access to the LLM service is blocked by policy");
  }
};

/// Records every exchange in the global event log under one correlation id.
class RecordingProxyClient final : public ProxyClient {
 public:
  /// `endpoint` is the URL recorded for each request, for trace analysis.
  RecordingProxyClient(ProxyClient& inner, EventLog& log, std::string endpoint = {})
      : inner_(&inner), log_(&log), endpoint_(std::move(endpoint)) {}

  PromptResponse send(const PromptRequest& req) override {
    const auto corr = log_->next_correlation();
    log_->record(Actor::Agent, "prompt_request", std::string(to_string(req.kind)) + " " + req.text, req.text, corr,
                 endpoint_);
    try {
      auto resp = inner_->send(req);
      log_->record(Actor::Proxy, "prompt_response",
                   std::string(to_string(resp.status)) + (resp.charged ? " charged" : " free"), resp.body, corr);
      return resp;
    } catch (const Error& e) {
      log_->record(Actor::Harness, "prompt_error", e.what(), {}, corr);
      throw;
    }
  }

 private:
  ProxyClient* inner_;
  EventLog* log_;
  std::string endpoint_;
};

/// Virtual network: maps hosts named in URLs onto in-process C2 servers.
class InProcessFetcher final : public Fetcher {
 public:
  explicit InProcessFetcher(const VirtualClock& clock) : clock_(&clock) {}

  void route(const std::string& host, C2Server& server) { routes_[host] = &server; }

  HttpResponse get(const url::Url& target, const std::string& user_agent) override {
    const auto it = routes_.find(target.host);
    if (it == routes_.end()) throw Error(Errc::IoError, "host unreachable: " + target.host);
    HttpRequest req;
    req.path = target.path + (target.query.empty() ? "" : "?" + target.query);
    req.user_agent = user_agent;
    return it->second->handle_get(req, clock_->now());
  }

 private:
  const VirtualClock* clock_;
  std::map<std::string, C2Server*> routes_;
};

}  // namespace c2lab
