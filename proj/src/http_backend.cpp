#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "scaudit/backends.hpp"

namespace scaudit {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool mentions_context_limit(std::string body) {
  std::transform(body.begin(), body.end(), body.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return body.find("context") != std::string::npos &&
         (body.find("length") != std::string::npos || body.find("window") != std::string::npos ||
          body.find("maximum") != std::string::npos || body.find("too long") != std::string::npos);
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendSpec spec) : Backend(std::move(spec)) {}

json HttpChatBackend::request_body(const BackendSpec& spec, std::string_view prompt_text,
                                   const GenerationParams& params) {
  // The token limit goes out under both common field names.
  return json{{"model", spec.model_name},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt_text}}})},
              {"max_tokens", params.max_new_tokens},
              {"max_new_tokens", params.max_new_tokens},
              {"temperature", params.temperature},
              {"top_k", params.top_k},
              {"top_p", params.top_p},
              {"n", params.num_return_sequences},
              {"repetition_penalty", params.repetition_penalty},
              {"stream", false}};
}

std::string HttpChatBackend::do_generate(const RenderedPrompt& prompt, const GenerationParams& params) {
  const SplitUrl url = split_url(spec().endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(std::min(spec().timeout_seconds, 30), 0);
  client.set_read_timeout(spec().timeout_seconds, 0);
  client.set_write_timeout(spec().timeout_seconds, 0);

  httplib::Headers headers;
  if (!spec().auth.empty()) {
    const char* key = std::getenv(spec().auth.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::AuthError, id() + ": environment variable " + spec().auth + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const std::string body = request_body(spec(), prompt.text, params).dump();
  auto response = client.Post(url.path, headers, body, "application/json");
  if (!response) {
    throw Error(ErrorCode::NetworkError,
                id() + ": " + httplib::to_string(response.error()) + " (" + spec().endpoint + ")");
  }

  const int status = response->status;
  if (status == 401 || status == 403) {
    throw Error(ErrorCode::AuthError, id() + ": HTTP " + std::to_string(status));
  }
  if (status == 408 || status == 429 || status >= 500) {
    throw Error(ErrorCode::NetworkError, id() + ": HTTP " + std::to_string(status));
  }
  if (status == 413 || ((status == 400 || status == 422) && mentions_context_limit(response->body))) {
    throw Error(ErrorCode::ContextOverflow, id() + ": prompt for " + prompt.contract_id +
                                                  " exceeds the model context");
  }
  if (status < 200 || status >= 300) {
    throw Error(ErrorCode::BackendRefusal,
                id() + ": HTTP " + std::to_string(status) + ": " + response->body.substr(0, 200));
  }

  json reply = json::parse(response->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
      reply["choices"].empty()) {
    throw Error(ErrorCode::BackendRefusal, id() + ": response lacks choices");
  }
  const json& message = reply["choices"][0].value("message", json::object());
  auto content = message.find("content");
  if (content == message.end() || !content->is_string()) {
    throw Error(ErrorCode::BackendRefusal, id() + ": response lacks message content");
  }
  return content->get<std::string>();
}

}  // namespace scaudit
