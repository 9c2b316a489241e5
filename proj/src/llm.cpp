#include "ig/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ig/errors.hpp"

using nlohmann::json;

namespace ig::llm {

namespace {

// Splits "http://host:port/path" into (scheme://host:port, /path).
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Transport default_transport() {
  return [](const HttpRequest& req) -> HttpResponse {
    const auto [base, path] = split_url(req.url);
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    auto res = client.Post(path, headers, req.body, "application/json");
    if (!res) {
      throw TransportError("POST " + req.url + " failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
  };
}

std::string chat_completion(const ChatClientConfig& cfg, const std::string& system_prompt,
                            const std::string& user_prompt, const Transport& transport) {
  std::string endpoint = cfg.endpoint;
  if (endpoint.empty()) {
    if (const char* env = std::getenv("IG_LLM_ENDPOINT")) endpoint = env;
  }
  if (endpoint.empty()) {
    throw TransportError("no LLM endpoint configured (set IG_LLM_ENDPOINT or config endpoint)");
  }

  HttpRequest req;
  req.url = endpoint;
  json body;
  body["model"] = cfg.model_name;
  body["temperature"] = cfg.temperature;
  body["messages"] = json::array({json{{"role", "system"}, {"content", system_prompt}},
                                  json{{"role", "user"}, {"content", user_prompt}}});
  req.body = body.dump();
  if (const char* key = std::getenv("IG_LLM_API_KEY")) {
    req.headers["Authorization"] = std::string("Bearer ") + key;
  }

  const Transport& post = transport ? transport : default_transport();

  HttpResponse resp;
  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    try {
      resp = post(req);
      if (resp.status >= 200 && resp.status < 300) break;
      last_error = "HTTP " + std::to_string(resp.status) + ": " + resp.body;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt + 1 >= cfg.max_retries) {
      throw TransportError("chat completion failed after " + std::to_string(cfg.max_retries) +
                           " attempts: " + last_error);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
  }

  try {
    const json j = json::parse(resp.body);
    const std::string content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (content.empty()) {
      throw GenerationError("empty completion; raw response: " + resp.body);
    }
    return content;
  } catch (const json::exception&) {
    throw GenerationError("malformed completion; raw response: " + resp.body);
  }
}

}  // namespace ig::llm
