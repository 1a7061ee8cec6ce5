#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agent0/params.hpp"

namespace agent0 {

struct Capabilities {
    bool trainable = false;
    bool stop_sequences = false;
};

struct GenResult {
    std::vector<std::string> tokens;  // concatenation is the emitted text
    std::vector<double> logprobs;     // per token; empty when the backend has none
    bool complete = false;            // generator finished its intended output
    std::string text() const;
};

// Pluggable policy backend. generate() must be safe for concurrent callers;
// parameter mutation is exclusive with generation. The trainable surface
// throws CapabilityError on backends that cannot support it.
class Generator {
  public:
    virtual ~Generator() = default;
    virtual Capabilities capabilities() const = 0;

    virtual GenResult generate(const std::string& context,
                               std::span<const std::string> stop_markers, int max_tokens,
                               uint64_t seed) = 0;

    // per-token log-probabilities of `tokens` continued from `context` under
    // the current parameters
    virtual std::vector<double> logprob_of(const std::string& context,
                                           std::span<const std::string> tokens);

    // sum_t weight[t] * d logprob_t / d params; weights of all ones gives the
    // gradient of the sequence log-probability
    virtual PolicyParams logprob_grad(const std::string& context,
                                      std::span<const std::string> tokens,
                                      std::span<const double> token_weights);

    virtual const PolicyParams& params() const;
    virtual void set_params(const PolicyParams& p);

    PolicyParams snapshot() const { return params(); }
    void restore(const PolicyParams& p) { set_params(p); }
};

}  // namespace agent0
