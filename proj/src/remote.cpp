#include "agent0/remote.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "agent0/common.hpp"

namespace agent0 {

using nlohmann::json;

GenResult RemoteGenerator::generate(const std::string& context,
                                    std::span<const std::string> stop_markers, int max_tokens,
                                    uint64_t seed) {
    json body{{"prompt", context},
              {"max_tokens", max_tokens},
              {"temperature", cfg_.temperature},
              {"top_p", cfg_.top_p},
              {"logprobs", 1},
              {"seed", seed}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    if (!stop_markers.empty()) {
        json stops = json::array();
        for (const auto& s : stop_markers) stops.push_back(s);
        body["stop"] = stops;
    }

    httplib::Headers headers;
    if (!cfg_.auth_env.empty()) {
        const char* token = std::getenv(cfg_.auth_env.c_str());
        if (!token)
            throw GeneratorFailure("auth environment variable not set: " + cfg_.auth_env);
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string last_error;
    int backoff = cfg_.backoff_initial_ms;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        httplib::Client cli(cfg_.host, cfg_.port);
        cli.set_read_timeout(cfg_.request_timeout_ms / 1000,
                             (cfg_.request_timeout_ms % 1000) * 1000);
        auto res = cli.Post(cfg_.completion_path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw GeneratorFailure("endpoint returned status " + std::to_string(res->status) +
                                   ": " + res->body);
        try {
            json j = json::parse(res->body);
            const auto& choice = j.at("choices").at(0);
            GenResult out;
            if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
                choice["logprobs"].contains("tokens")) {
                const auto& lp = choice["logprobs"];
                out.tokens = lp.at("tokens").get<std::vector<std::string>>();
                if (lp.contains("token_logprobs") && lp["token_logprobs"].is_array()) {
                    for (const auto& v : lp["token_logprobs"])
                        out.logprobs.push_back(v.is_null() ? 0.0 : v.get<double>());
                }
                if (out.logprobs.size() != out.tokens.size()) out.logprobs.clear();
            } else {
                out.tokens.push_back(choice.at("text").get<std::string>());
            }
            std::string finish =
                choice.contains("finish_reason") && choice["finish_reason"].is_string()
                    ? choice["finish_reason"].get<std::string>()
                    : "stop";
            out.complete = finish != "length";
            return out;
        } catch (const json::exception& e) {
            throw GeneratorFailure(std::string("malformed endpoint response: ") + e.what());
        }
    }
    throw GeneratorFailure("endpoint unreachable after " + std::to_string(cfg_.max_retries + 1) +
                           " attempts: " + last_error);
}

}  // namespace agent0
