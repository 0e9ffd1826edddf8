#pragma once

// Chat-style LLM access. The wire protocol is
//   POST {endpoint}/v1/chat  {"messages": [{"role", "content"}]}  ->  {"content": str}

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oscar/errors.hpp"
#include "oscar/http_util.hpp"

namespace oscar {

struct ChatMessage {
  std::string role;
  std::string content;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Returns the assistant message content. Throws BackendError.
  virtual std::string chat(const std::vector<ChatMessage>& messages) = 0;
};

/// In-process client driven by a callback. Records every request.
class MockLlmClient final : public LlmClient {
 public:
  using Responder = std::function<std::string(const std::vector<ChatMessage>&)>;

  explicit MockLlmClient(Responder responder) : responder_(std::move(responder)) {}

  /// Always answers with the same content.
  static std::unique_ptr<MockLlmClient> fixed(std::string content) {
    return std::make_unique<MockLlmClient>(
        [content = std::move(content)](const std::vector<ChatMessage>&) { return content; });
  }

  std::string chat(const std::vector<ChatMessage>& messages) override {
    {
      std::lock_guard lock(mu_);
      requests_.push_back(messages);
    }
    return responder_(messages);
  }

  std::vector<std::vector<ChatMessage>> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  Responder responder_;
  mutable std::mutex mu_;
  std::vector<std::vector<ChatMessage>> requests_;
};

/// Mock that answers with the prompt's "Current step:" line. Handy for
/// demos and service tests where answer quality does not matter.
inline std::unique_ptr<MockLlmClient> echo_current_step_llm() {
  return std::make_unique<MockLlmClient>([](const std::vector<ChatMessage>& messages) -> std::string {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
      const auto pos = it->content.find("Current step:");
      if (pos == std::string::npos) continue;
      const auto end = it->content.find('\n', pos);
      return it->content.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    }
    return "I do not know the current step yet.";
  });
}

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(const std::string& endpoint,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : endpoint_(http::split_endpoint(endpoint)), timeout_(timeout) {}

  std::string chat(const std::vector<ChatMessage>& messages) override {
    nlohmann::json body;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages)
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    auto client = http::make_client(endpoint_, timeout_);
    const std::string raw = http::post_json(*client, endpoint_, "/v1/chat", body.dump());
    const auto j = nlohmann::json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("content") ||
        !j.at("content").is_string())
      throw BackendError("LLM service reply lacks a string \"content\" field");
    return j.at("content").get<std::string>();
  }

 private:
  http::Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

}  // namespace oscar
