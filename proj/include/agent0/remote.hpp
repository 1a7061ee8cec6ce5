#pragma once

#include <string>
#include <vector>

#include "agent0/generators.hpp"

namespace agent0 {

// Completions-style endpoint client: POST {completion_path} with
// {model, prompt, max_tokens, temperature, top_p, stop, logprobs} and read
// choices[0].text plus choices[0].logprobs.{tokens, token_logprobs} when the
// endpoint supplies them.
struct RemoteConfig {
    std::string host = "127.0.0.1";
    int port = 8000;
    std::string completion_path = "/v1/completions";
    std::string model;
    std::string auth_env;  // name of the env var holding the bearer token
    double temperature = 1.0;
    double top_p = 0.99;
    int max_retries = 2;
    int backoff_initial_ms = 200;
    int request_timeout_ms = 60000;
};

class RemoteGenerator final : public Generator {
  public:
    explicit RemoteGenerator(RemoteConfig cfg) : cfg_(std::move(cfg)) {}
    Capabilities capabilities() const override { return {false, true}; }
    GenResult generate(const std::string& context, std::span<const std::string> stop_markers,
                       int max_tokens, uint64_t seed) override;

  private:
    RemoteConfig cfg_;
};

}  // namespace agent0
