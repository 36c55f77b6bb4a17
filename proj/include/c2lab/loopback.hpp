#pragma once

// Loopback HTTP bindings for the C2 server and the proxy endpoint.
//
// C2:    GET <any path>            -> text/plain page (405 for other methods)
// Proxy: POST /v1/prompt           body = prompt text
//          X-Session, X-Prompt-Kind (unlock|fact|payload|lookup), X-Plugin-Hint
//        response body = envelope: "key: value" header lines, blank line, content

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "c2lab/c2_server.hpp"
#include "c2lab/llm_proxy.hpp"
#include "c2lab/sim.hpp"
#include "c2lab/transport.hpp"

namespace c2lab {

inline constexpr const char* kPromptPath = "/v1/prompt";

inline std::string render_envelope(const PromptResponse& r) {
  std::string out;
  out += "status: " + std::string(to_string(r.status)) + "\n";
  out += std::string("charged: ") + (r.charged ? "true" : "false") + "\n";
  out += "remaining: " + std::to_string(r.remaining) + "\n";
  if (!r.plugin.empty()) out += "plugin: " + r.plugin + "\n";
  out += "\n";
  out += r.body;
  return out;
}

inline PromptResponse parse_envelope(std::string_view text) {
  PromptResponse r;
  const auto split = text.find("\n\n");
  if (split == std::string_view::npos) throw Error(Errc::ParseError, "envelope without header terminator");
  std::istringstream head{std::string(text.substr(0, split + 1))};
  bool have_status = false;
  for (std::string line; std::getline(head, line);) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw Error(Errc::ParseError, "bad envelope header '" + line + "'");
    const auto key = line.substr(0, colon);
    const auto value = line.substr(colon + 2);
    if (key == "status") {
      const auto st = prompt_status_from_string(value);
      if (!st) throw Error(Errc::ParseError, "unknown status '" + value + "'");
      r.status = *st;
      have_status = true;
    } else if (key == "charged") {
      r.charged = value == "true";
    } else if (key == "remaining") {
      r.remaining = std::stoi(value);
    } else if (key == "plugin") {
      r.plugin = value;
    }
  }
  if (!have_status) throw Error(Errc::ParseError, "envelope missing status");
  r.body = std::string(text.substr(split + 2));
  return r;
}

/// Runs an httplib server on a background thread for the object's lifetime.
class LoopbackServer {
 public:
  LoopbackServer() = default;
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;
  ~LoopbackServer() { stop(); }

  httplib::Server& http() { return server_; }

  /// Binds to `port` on 127.0.0.1, or an ephemeral port when 0. Returns the bound port.
  int start(int port) {
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ < 0) throw Error(Errc::IoError, "cannot bind 127.0.0.1:" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const noexcept { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

class C2HttpFrontend {
 public:
  C2HttpFrontend(C2Server& c2, const VirtualClock& clock) : c2_(&c2), clock_(&clock) {
    auto& http = server_.http();
    http.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
      HttpRequest r;
      r.method = "GET";
      r.path = req.target.empty() ? req.path : req.target;
      r.user_agent = req.get_header_value("User-Agent");
      r.source_port = static_cast<std::uint16_t>(req.remote_port);
      const auto out = c2_->handle_get(r, clock_->now());
      res.status = out.status;
      res.set_content(out.body, "text/plain");
    });
    auto reject = [](const httplib::Request&, httplib::Response& res) {
      res.status = 405;
      res.set_content("method not allowed\n", "text/plain");
    };
    http.Post(".*", reject);
    http.Put(".*", reject);
    http.Delete(".*", reject);
    http.Patch(".*", reject);
  }

  int start(int port) { return server_.start(port); }
  void stop() { server_.stop(); }

 private:
  C2Server* c2_;
  const VirtualClock* clock_;
  LoopbackServer server_;
};

class ProxyHttpFrontend {
 public:
  explicit ProxyHttpFrontend(LlmProxy& proxy) : proxy_(&proxy) {
    server_.http().Post(kPromptPath, [this](const httplib::Request& req, httplib::Response& res) {
      const auto kind = prompt_kind_from_string(req.get_header_value("X-Prompt-Kind"));
      if (!kind) {
        res.status = 400;
        res.set_content(render_envelope({PromptStatus::BadRequest, "unknown prompt kind\n", false, 0, {}}), "text/plain");
        return;
      }
      PromptRequest p;
      p.session = req.get_header_value("X-Session");
      p.kind = *kind;
      p.text = req.body;
      if (req.has_header("X-Plugin-Hint")) p.plugin_hint = req.get_header_value("X-Plugin-Hint");
      res.set_content(render_envelope(proxy_->handle(p)), "text/plain");
    });
  }

  int start(int port) { return server_.start(port); }
  void stop() { server_.stop(); }

 private:
  LlmProxy* proxy_;
  LoopbackServer server_;
};

class HttpProxyClient final : public ProxyClient {
 public:
  explicit HttpProxyClient(int port) : client_("127.0.0.1", port) {
    client_.set_keep_alive(true);
    client_.set_read_timeout(10, 0);
  }

  PromptResponse send(const PromptRequest& req) override {
    httplib::Headers headers = {{"X-Session", req.session}, {"X-Prompt-Kind", std::string(to_string(req.kind))}};
    if (req.plugin_hint) headers.emplace("X-Plugin-Hint", *req.plugin_hint);
    auto res = client_.Post(kPromptPath, headers, req.text, "text/plain");
    if (!res) throw Error(Errc::IoError, "proxy unreachable: " + httplib::to_string(res.error()));
    return parse_envelope(res->body);
  }

 private:
  httplib::Client client_;
};

/// Plugin-side HTTP: virtual hosts named in URLs map onto loopback ports.
class HttpFetcher final : public Fetcher {
 public:
  void route(const std::string& host, int port) { routes_[host] = port; }

  HttpResponse get(const url::Url& target, const std::string& user_agent) override {
    const auto it = routes_.find(target.host);
    if (it == routes_.end()) throw Error(Errc::IoError, "host unreachable: " + target.host);
    httplib::Client client("127.0.0.1", it->second);
    client.set_url_encode(false);
    client.set_read_timeout(10, 0);
    const auto path = target.path + (target.query.empty() ? "" : "?" + target.query);
    auto res = client.Get(path, {{"User-Agent", user_agent}});
    if (!res) throw Error(Errc::IoError, "fetch failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::map<std::string, int> routes_;
};

}  // namespace c2lab
