#include <cstdlib>

#include <nlohmann/json.hpp>

#include "savanna/error.hpp"
#include "savanna/evalharness.hpp"
#include "savanna/http.hpp"

namespace savanna::eval {

void ModelEndpoint::validate() const {
  if (name.empty()) throw Error("bad_endpoint", "endpoint needs a name");
  if (base_url.empty()) throw Error("bad_endpoint", "endpoint " + name + " has no base_url");
  if (max_parallel < 1) throw Error("bad_endpoint", "max_parallel must be >= 1");
  if (retries < 0) throw Error("bad_endpoint", "retries must be >= 0");
  if (timeout.count() <= 0) throw Error("bad_endpoint", "timeout must be positive");
}

ModelEndpoint endpoint_from_json(const nlohmann::json& j) {
  ModelEndpoint e;
  try {
    e.name = j.at("name").get<std::string>();
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.value("model", e.name);
    e.auth_env = j.value("auth_env", e.auth_env);
    const long long parallel = j.value("max_parallel", 4LL);
    if (parallel < 1) throw Error("bad_endpoint", "max_parallel must be >= 1");
    e.max_parallel = static_cast<std::size_t>(parallel);
    e.temperature = j.value("temperature", 0.0);
    e.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000LL));
    e.retries = j.value("retries", 2);
    e.backoff = std::chrono::milliseconds(j.value("backoff_ms", 500LL));
  } catch (const nlohmann::json::exception& ex) {
    throw Error("bad_endpoint", std::string("malformed endpoint: ") + ex.what());
  }
  if (j.contains("token") || j.contains("api_key")) {
    throw Error("bad_endpoint", "secrets are read from the environment, not from config files");
  }
  e.validate();
  return e;
}

nlohmann::json to_json(const ModelEndpoint& e) {
  return {{"name", e.name},
          {"base_url", e.base_url},
          {"model", e.model},
          {"auth_env", e.auth_env},
          {"max_parallel", e.max_parallel},
          {"temperature", e.temperature},
          {"timeout_ms", e.timeout.count()},
          {"retries", e.retries},
          {"backoff_ms", e.backoff.count()}};
}

HttpChatClient::HttpChatClient(ModelEndpoint endpoint, std::string token)
    : endpoint_(std::move(endpoint)), token_(std::move(token)) {
  const auto scheme = endpoint_.base_url.find("://");
  if (scheme == std::string::npos) throw Error("bad_endpoint", "base_url needs a scheme: " + endpoint_.base_url);
  const auto slash = endpoint_.base_url.find('/', scheme + 3);
  origin_ = endpoint_.base_url.substr(0, slash);
  path_ = slash == std::string::npos ? std::string() : endpoint_.base_url.substr(slash);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
}

std::string HttpChatClient::identity() const { return "http:" + origin_ + path_; }

std::string HttpChatClient::complete(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  const nlohmann::json body = {
      {"model", request.model}, {"messages", messages}, {"temperature", request.temperature}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (!token_.empty()) headers.emplace_back("Authorization", "Bearer " + token_);
  if (!request.request_id.empty()) headers.emplace_back("X-Request-Id", request.request_id);

  const auto res = http::post_json(origin_, path_, body.dump(), headers, endpoint_.timeout);
  if (res.status < 200 || res.status >= 300) {
    throw Error("transport", "HTTP " + std::to_string(res.status) + " from " + identity() + ": " +
                                 res.body.substr(0, 200));
  }
  try {
    const auto j = nlohmann::json::parse(res.body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_response", std::string("malformed chat-completions response: ") + e.what());
  }
}

StubChatClient::StubChatClient(std::string kind, std::map<std::string, std::string> answers)
    : kind_(std::move(kind)), answers_(std::move(answers)) {
  if (kind_ != "stub:echo" && kind_ != "stub:empty" && kind_ != "stub:gold") {
    throw Error("bad_endpoint", "unknown stub '" + kind_ + "'");
  }
}

std::string StubChatClient::complete(const ChatRequest& request) {
  if (kind_ == "stub:empty") return {};
  auto it = answers_.find(request.request_id);
  if (it == answers_.end()) throw Error("transport", kind_ + " has no answer for " + request.request_id);
  return it->second;
}

std::unique_ptr<ChatClient> make_http_client(const ModelEndpoint& endpoint) {
  endpoint.validate();
  const char* token = std::getenv(endpoint.auth_env.c_str());
  return std::make_unique<HttpChatClient>(endpoint, token ? token : "");
}

}  // namespace savanna::eval
