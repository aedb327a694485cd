#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iotzsl/text_branch.hpp"

namespace iotzsl {

// Single text-completion call abstraction over an OpenAI-style chat endpoint.
// The auth token is read from an environment variable, never from config.
struct LlmConfig {
  std::string host;           // e.g. "127.0.0.1" or "api.example.com"
  int port = 80;
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "IOTZSL_LLM_API_KEY";
  int timeout_seconds = 60;

  bool configured() const { return !host.empty(); }
};

class LlmClient {
 public:
  explicit LlmClient(LlmConfig cfg) : cfg_(std::move(cfg)) {}

  // Sends one prompt, returns the completion text. Throws Error(io) on any
  // transport or protocol failure.
  std::string complete(const std::string& prompt) const;

  const LlmConfig& config() const { return cfg_; }

 private:
  LlmConfig cfg_;
};

// Builds the per-class attribute question for one sensing task.
std::string hard_prompt_query(const std::vector<std::string>& class_list);

// One description per class. Resolution order: an existing prompt file wins
// (manual edits are authoritative); otherwise the LLM is queried and the
// result is cached to `prompt_file`; if the provider fails, the file is
// retried; if both are unavailable this is a configuration error.
HardPromptSet generate_hard_prompts(const std::vector<std::string>& class_list,
                                    const LlmClient* client, const std::string& prompt_file,
                                    bool refresh = false);

}  // namespace iotzsl
