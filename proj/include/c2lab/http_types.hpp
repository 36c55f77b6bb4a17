#pragma once

#include <cstdint>
#include <string>

namespace c2lab {

struct HttpRequest {
  std::string method = "GET";
  std::string path = "/";  // raw request target, still percent-encoded
  std::string user_agent;
  std::uint16_t source_port = 0;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

}  // namespace c2lab
