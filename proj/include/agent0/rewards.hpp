#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agent0/types.hpp"

namespace agent0 {

struct CurriculumRewardConfig {
    double lambda_unc = 1.0;
    double lambda_tool = 0.6;
    double lambda_rep = 1.0;
    double gamma = 1.0;  // tool-call scale applied before the cap
    int cap_c = 4;       // cap on the number of rewarded calls
    double tau_bleu = 0.5;
    int batch_size_b = 128;

    void validate() const;
};

// 1 - 2|p - 0.5|: peaks at maximal executor inconsistency, zero at the
// too-easy and too-hard endpoints.
double uncertainty_reward(double p_hat);

// gamma * min(count, C)
double tool_use_reward(int tool_call_count, const CurriculumRewardConfig& cfg);

// gamma * mean_j min(count_j, C): the per-task tool reward pools all k
// sampled executor responses, capping each before averaging.
double tool_use_reward_from_counts(std::span<const int> counts, const CurriculumRewardConfig& cfg);

// 1 - BLEU(a, b) with a as candidate and b as reference. Sentence BLEU,
// n-gram orders 1-4 with uniform weights, add-one smoothing on the order>=2
// precisions (the unigram precision stays raw so disjoint texts score 0),
// and the usual brevity penalty. Either side empty: 1.0 against non-empty,
// 0.0 against empty.
double pairwise_bleu_distance(std::string_view a, std::string_view b);

double sentence_bleu(std::string_view candidate, std::string_view reference);

// Connected components of the graph with an edge (i,j) when the symmetrized
// distance max(d_ij, d_ji) < tau. Returns a cluster id per task; ids are the
// smallest member index of each component.
std::vector<int> cluster_by_similarity(std::span<const Task> batch, double tau_bleu);
std::vector<int> cluster_texts_by_similarity(std::span<const std::string> texts, double tau_bleu);

// lambda_rep * cluster_size / B
double repetition_penalty(int cluster_size, const CurriculumRewardConfig& cfg);

// format_ok ? max(0, lambda_unc*r_unc + lambda_tool*r_tool - r_rep) : 0
double composite_curriculum_reward(bool format_ok, double r_unc, double r_tool, double r_rep,
                                   const CurriculumRewardConfig& cfg);

}  // namespace agent0
