#pragma once

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/providers.hpp"

namespace qreform {

struct HttpProviderOptions {
  std::string base_url;  // e.g. "http://127.0.0.1:8089"
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key;  // empty -> no Authorization header
  int max_attempts = 3;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
};

/// Chat-completions client. Transport failures and 5xx responses retry with
/// linear backoff up to max_attempts; 4xx and malformed payloads fail
/// immediately since retrying cannot fix them.
class HttpChatProvider : public GenerationProvider {
 public:
  explicit HttpChatProvider(HttpProviderOptions opts) : opts_(std::move(opts)) {
    if (opts_.base_url.empty())
      throw ConfigError("http provider needs a base_url");
    if (opts_.max_attempts < 1)
      throw ConfigError("max_attempts must be >= 1");
  }

  std::string id() const override {
    return "http:" + opts_.model + "@" + opts_.base_url;
  }

  std::vector<std::string> complete(const GenerationRequest& req) override {
    nlohmann::json body = {
        {"model", opts_.model},
        {"messages",
         nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
        {"temperature", req.sampling.temperature},
        {"top_p", req.sampling.top_p},
        {"n", req.n_samples}};
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
      if (attempt > 1)
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));

      httplib::Client cli(opts_.base_url);
      cli.set_connection_timeout(opts_.connect_timeout_s, 0);
      cli.set_read_timeout(opts_.read_timeout_s, 0);
      httplib::Headers headers;
      if (!opts_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + opts_.api_key);

      auto res = cli.Post(opts_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "server returned status " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw ProviderError("chat endpoint returned status " +
                            std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
      return parse_completions(res->body);
    }
    throw ProviderError("chat endpoint unreachable after " +
                        std::to_string(opts_.max_attempts) +
                        " attempts; last error: " + last_error);
  }

 private:
  static std::vector<std::string> parse_completions(const std::string& body) {
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("choices") ||
        !doc["choices"].is_array())
      throw ProviderError("chat endpoint returned malformed payload: " +
                          body.substr(0, 200));
    std::vector<std::string> out;
    for (const auto& choice : doc["choices"]) {
      if (!choice.contains("message") ||
          !choice["message"].contains("content") ||
          !choice["message"]["content"].is_string())
        throw ProviderError("chat choice lacks message.content");
      out.push_back(choice["message"]["content"].get<std::string>());
    }
    return out;
  }

  HttpProviderOptions opts_;
};

}  // namespace qreform
