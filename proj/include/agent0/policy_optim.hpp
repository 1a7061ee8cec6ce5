#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "agent0/params.hpp"
#include "agent0/types.hpp"

namespace agent0 {

struct OptimConfig {
    double epsilon_norm = 1e-8;   // z-score stabilizer
    double epsilon_low = 0.2;     // lower clip offset (and the symmetric GRPO epsilon)
    double epsilon_high_min = 0.2;
    double epsilon_high_max = 0.4;
    double kl_beta = 1e-2;
    int group_size_g = 2;
    double learning_rate = 1e-6;
    double ambiguity_scale_floor = 0.0;
    double weight_decay = 0.0;

    void validate() const;
};

// Group z-score with population std; an all-equal group yields exactly zero
// advantages.
std::vector<double> normalize_advantages(std::span<const double> rewards, double epsilon_norm);

// s(p) = floor + (1 - floor) * p: increasing in self-consistency, so
// low-consistency pseudo-labels contribute proportionally less signal.
double ambiguity_scale(double p_hat, const OptimConfig& cfg);

// eps_high(p) = min + (max - min) * (1 - p): wider trust region on ambiguous
// inputs, tight on confident ones.
double dynamic_epsilon_high(double p_hat, const OptimConfig& cfg);

// Per-trajectory token view: aligned log-probability vectors plus a mask that
// is 0 on environment-injected (tool output) positions.
struct TokenBatchEntry {
    std::vector<double> new_logprobs;
    std::vector<double> old_logprobs;
    std::vector<double> ref_logprobs;
    std::vector<uint8_t> mask;
    double advantage = 0.0;       // the advantage actually applied (scaled for ADPO)
    double eps_low = 0.2;
    double eps_high = 0.2;
};

struct ClipHistogram {
    static constexpr size_t kBins = 20;
    std::array<uint64_t, kBins> up_clip_old_prob_bins{};
    uint64_t up_clipped = 0;
    uint64_t down_clipped = 0;
    uint64_t total_tokens = 0;

    void record_up(double old_prob);
    void merge(const ClipHistogram& other);
    // fraction of up-clipped-token mass in bins strictly below `prob`
    double mass_below(double prob) const;
};

struct LossResult {
    double loss = 0.0;
    double surrogate = 0.0;  // mean clipped-objective value (before negation)
    double kl = 0.0;         // mean per-token KL estimate
    std::vector<std::vector<double>> dloss_dnew;  // aligned with entries/tokens
    ClipHistogram clip;
};

// PPO-style clipped surrogate with symmetric bounds [1-eps, 1+eps]
// (eps = cfg.epsilon_low) and the non-negative per-token KL estimator
// exp(ref-new) - (ref-new) - 1 weighted by kl_beta. Token ratios are
// exp(new-old); the entry advantage is broadcast to every unmasked token;
// token terms average per trajectory and then over the batch.
LossResult grpo_loss(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg);

// Same structure with per-entry asymmetric bounds [1-eps_low, 1+eps_high(x)]
// and (by construction of the batch) ambiguity-scaled advantages.
LossResult adpo_loss(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg);

// Up-clip histogram for a completed batch without the gradient bookkeeping.
ClipHistogram clip_statistics(std::span<const TokenBatchEntry> batch, const OptimConfig& cfg);

// params <- params - lr * (grad + weight_decay * params)
PolicyParams sgd_step(const PolicyParams& params, const PolicyParams& grad, double learning_rate,
                      double weight_decay = 0.0);

}  // namespace agent0
