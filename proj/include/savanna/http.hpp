#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace savanna::http {

struct Response {
  int status = 0;
  std::string body;
};

/// POST a JSON body to base_url + path. Throws Error("transport") when no
/// HTTP response was received; non-2xx statuses are returned to the caller.
Response post_json(const std::string& base_url, const std::string& path, const std::string& body,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   std::chrono::milliseconds timeout);

/// Current UTC time as 2025-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace savanna::http
