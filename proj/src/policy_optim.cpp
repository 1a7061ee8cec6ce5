#include "agent0/policy_optim.hpp"

#include <algorithm>
#include <cmath>

#include "agent0/common.hpp"

namespace agent0 {

void OptimConfig::validate() const {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("optim config: ") + what);
    };
    check(epsilon_norm > 0, "epsilon_norm must be > 0");
    check(epsilon_low > 0, "epsilon_low must be > 0");
    check(epsilon_high_min > 0, "epsilon_high_min must be > 0");
    check(epsilon_high_max >= epsilon_high_min, "epsilon_high_max must be >= epsilon_high_min");
    check(kl_beta >= 0, "kl_beta must be >= 0");
    check(group_size_g >= 2, "group_size_g must be >= 2");
    check(learning_rate > 0, "learning_rate must be > 0");
    check(ambiguity_scale_floor >= 0 && ambiguity_scale_floor <= 1,
          "ambiguity_scale_floor must be in [0,1]");
    check(weight_decay >= 0, "weight_decay must be >= 0");
}

std::vector<double> normalize_advantages(std::span<const double> rewards, double epsilon_norm) {
    const size_t g = rewards.size();
    if (g < 2) throw GroupTooSmall("normalize_advantages: group size must be >= 2");

    auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
    if (*mn == *mx) return std::vector<double>(g, 0.0);

    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);  // population variance, matching the 1/G normalization
    double denom = std::sqrt(var) + epsilon_norm;

    std::vector<double> out(g);
    for (size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / denom;
    return out;
}

double ambiguity_scale(double p_hat, const OptimConfig& cfg) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw DomainError("p_hat outside [0,1]");
    return cfg.ambiguity_scale_floor + (1.0 - cfg.ambiguity_scale_floor) * p_hat;
}

double dynamic_epsilon_high(double p_hat, const OptimConfig& cfg) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw DomainError("p_hat outside [0,1]");
    return cfg.epsilon_high_min + (cfg.epsilon_high_max - cfg.epsilon_high_min) * (1.0 - p_hat);
}

void ClipHistogram::record_up(double old_prob) {
    ++up_clipped;
    double clamped = std::clamp(old_prob, 0.0, 1.0);
    size_t bin = std::min(kBins - 1, static_cast<size_t>(clamped * kBins));
    ++up_clip_old_prob_bins[bin];
}

void ClipHistogram::merge(const ClipHistogram& other) {
    for (size_t i = 0; i < kBins; ++i) up_clip_old_prob_bins[i] += other.up_clip_old_prob_bins[i];
    up_clipped += other.up_clipped;
    down_clipped += other.down_clipped;
    total_tokens += other.total_tokens;
}

double ClipHistogram::mass_below(double prob) const {
    if (up_clipped == 0) return 0.0;
    uint64_t below = 0;
    for (size_t i = 0; i < kBins; ++i) {
        double bin_upper = static_cast<double>(i + 1) / kBins;
        if (bin_upper <= prob + 1e-12) below += up_clip_old_prob_bins[i];
    }
    return static_cast<double>(below) / static_cast<double>(up_clipped);
}

namespace {

// Shared clipped-surrogate evaluator. GRPO pins both bounds to the symmetric
// epsilon; ADPO reads the per-entry bounds. Equal effective inputs produce
// bit-equal results across the two entry points.
LossResult clipped_loss_core(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg,
                             bool want_grads, const double* symmetric_eps) {
    if (batch.empty()) throw EmptyInput("loss: empty batch");
    LossResult res;
    if (want_grads) res.dloss_dnew.resize(batch.size());

    const double inv_g = 1.0 / static_cast<double>(batch.size());
    double surrogate_sum = 0.0;
    double kl_sum = 0.0;

    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& e = batch[i];
        const size_t n = e.new_logprobs.size();
        if (e.old_logprobs.size() != n || e.ref_logprobs.size() != n || e.mask.size() != n)
            throw ShapeMismatch("loss: token vectors and mask disagree in length");

        size_t unmasked = 0;
        for (uint8_t m : e.mask) unmasked += (m != 0);
        if (want_grads) res.dloss_dnew[i].assign(n, 0.0);
        if (unmasked == 0) continue;
        const double inv_n = 1.0 / static_cast<double>(unmasked);

        const double lo = 1.0 - (symmetric_eps ? *symmetric_eps : e.eps_low);
        const double hi = 1.0 + (symmetric_eps ? *symmetric_eps : e.eps_high);
        const double a = e.advantage;

        double surr_i = 0.0;
        double kl_i = 0.0;
        for (size_t t = 0; t < n; ++t) {
            if (!e.mask[t]) continue;
            ++res.clip.total_tokens;
            const double ratio = std::exp(e.new_logprobs[t] - e.old_logprobs[t]);
            const double unclipped = ratio * a;
            const double clipped = std::clamp(ratio, lo, hi) * a;
            double dsurr;
            if (unclipped <= clipped) {
                surr_i += unclipped;
                dsurr = a * ratio;  // d(ratio*a)/dnew = a*ratio
            } else {
                surr_i += clipped;
                dsurr = 0.0;  // constant branch: clipped token passes no gradient
            }
            if (a > 0.0 && ratio > hi) res.clip.record_up(std::exp(e.old_logprobs[t]));
            if (a < 0.0 && ratio < lo) ++res.clip.down_clipped;

            const double expref = std::exp(e.ref_logprobs[t] - e.new_logprobs[t]);
            kl_i += expref - (e.ref_logprobs[t] - e.new_logprobs[t]) - 1.0;
            const double dkl = 1.0 - expref;

            if (want_grads)
                res.dloss_dnew[i][t] =
                    inv_g * inv_n * (-dsurr + cfg.kl_beta * dkl);
        }
        surrogate_sum += surr_i * inv_n;
        kl_sum += kl_i * inv_n;
    }

    res.surrogate = surrogate_sum * inv_g;
    res.kl = kl_sum * inv_g;
    res.loss = -res.surrogate + cfg.kl_beta * res.kl;
    return res;
}

}  // namespace

LossResult grpo_loss(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg) {
    return clipped_loss_core(batch, cfg, /*want_grads=*/true, &cfg.epsilon_low);
}

LossResult adpo_loss(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg) {
    return clipped_loss_core(batch, cfg, /*want_grads=*/true, nullptr);
}

ClipHistogram clip_statistics(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg) {
    return clipped_loss_core(batch, cfg, /*want_grads=*/false, nullptr).clip;
}

PolicyParams sgd_step(const PolicyParams& params, const PolicyParams& grad, double learning_rate,
                      double weight_decay) {
    if (params.size() != grad.size()) throw ShapeMismatch("sgd_step: table count mismatch");
    PolicyParams out = params;
    for (size_t t = 0; t < params.size(); ++t) {
        if (grad[t].logits.size() != params[t].logits.size())
            throw ShapeMismatch("sgd_step: table shape mismatch for " + params[t].name);
        for (size_t i = 0; i < grad[t].logits.size(); ++i) {
            double g = grad[t].logits[i];
            if (!std::isfinite(g))
                throw NonFiniteGradient("sgd_step: non-finite gradient in table " +
                                        params[t].name);
            out[t].logits[i] = params[t].logits[i] -
                               learning_rate * (g + weight_decay * params[t].logits[i]);
        }
    }
    return out;
}

}  // namespace agent0
