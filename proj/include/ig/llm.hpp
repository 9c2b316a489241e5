#pragma once

#include <functional>
#include <map>
#include <string>

namespace ig::llm {

struct HttpRequest {
  std::string url;
  std::string body;  // JSON
  std::map<std::string, std::string> headers;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Transport hook so tests can run without a network. The default transport
/// POSTs with cpp-httplib.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

Transport default_transport();

struct ChatClientConfig {
  std::string endpoint;    // empty -> $IG_LLM_ENDPOINT
  std::string model_name = "gpt-4";
  double temperature = 1.2;
  int max_retries = 3;
};

/// One chat completion: POSTs {model, temperature, messages:[system, user]}
/// and returns the first completion's content. Retries transport failures
/// with exponential backoff. Throws TransportError (unreachable/HTTP error)
/// or GenerationError (empty or malformed completion; carries raw body).
std::string chat_completion(const ChatClientConfig& cfg, const std::string& system_prompt,
                            const std::string& user_prompt, const Transport& transport = {});

}  // namespace ig::llm
