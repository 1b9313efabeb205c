#include "savanna/http.hpp"

#include <ctime>

#include <httplib.h>

#include "savanna/error.hpp"

namespace savanna::http {

Response post_json(const std::string& base_url, const std::string& path, const std::string& body,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   std::chrono::milliseconds timeout) {
  httplib::Client client(base_url);
  if (!client.is_valid()) throw Error("transport", "invalid endpoint URL '" + base_url + "'");
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) {
    throw Error("transport", "request to " + base_url + path + " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace savanna::http
