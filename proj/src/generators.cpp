#include "agent0/generators.hpp"

#include <algorithm>
#include <cmath>

#include "agent0/common.hpp"

namespace agent0 {

std::string GenResult::text() const {
    std::string out;
    for (const auto& t : tokens) out += t;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> Generator::logprob_of(const std::string&, std::span<const std::string>) {
    throw CapabilityError("generator is not trainable: logprob_of unavailable");
}

PolicyParams Generator::logprob_grad(const std::string&, std::span<const std::string>,
                                     std::span<const double>) {
    throw CapabilityError("generator is not trainable: logprob_grad unavailable");
}

const PolicyParams& Generator::params() const {
    throw CapabilityError("generator is not trainable: no parameters");
}

void Generator::set_params(const PolicyParams&) {
    throw CapabilityError("generator is not trainable: no parameters");
}

}  // namespace agent0
