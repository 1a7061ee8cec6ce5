#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agent0/types.hpp"

namespace agent0 {

struct FrontierBand {
    double lower = 0.3;
    double upper = 0.8;

    // symmetric band |p - 0.5| <= delta
    static FrontierBand from_delta(double delta);
    bool contains(double p_hat) const { return p_hat >= lower && p_hat <= upper; }
    double delta() const;
};

struct FilteredEntry {
    Task task;
    double p_hat = 0.0;
    std::string pseudo_label;  // never NONE
};

struct FilteredDataset {
    int iteration = 0;
    std::vector<FilteredEntry> entries;
    FrontierBand band;
    double delta() const { return band.delta(); }
};

struct VoteResult {
    std::optional<std::string> majority_answer;  // canonical form; nullopt only if all votes NONE
    double p_hat = 0.0;
};

// Majority vote over k answers under the canonical matcher. NONE answers
// participate in the count but can never be elected; ties between non-NONE
// answers break to the lexicographically smallest canonical form. All-NONE
// input returns (NONE, 0).
VoteResult majority_vote(std::span<const std::optional<std::string>> answers);

ConsistencyRecord build_consistency_record(std::string task_id,
                                           std::span<const Trajectory> trajectories);

// Retains exactly the pool entries whose p_hat lies inside the band,
// preserving pool order. Entries must already carry a non-NONE pseudo-label.
FilteredDataset filter_frontier(std::span<const std::pair<Task, ConsistencyRecord>> pool,
                                const FrontierBand& band, int iteration = 0);

// R_i = I(final answer canonically equals the pseudo-label); truncated or
// answerless trajectories get 0.
std::vector<double> assign_terminal_rewards(std::span<const Trajectory> trajectories,
                                            const std::string& pseudo_label);

}  // namespace agent0
