#include "agent0/consistency.hpp"

#include <algorithm>

#include "agent0/answers.hpp"
#include "agent0/common.hpp"

namespace agent0 {

FrontierBand FrontierBand::from_delta(double delta) {
    if (!(delta > 0.0 && delta <= 0.5)) throw DomainError("delta must be in (0, 0.5]");
    return FrontierBand{0.5 - delta, 0.5 + delta};
}

double FrontierBand::delta() const {
    return std::max(0.5 - lower, upper - 0.5);
}

VoteResult majority_vote(std::span<const std::optional<std::string>> answers) {
    if (answers.empty()) throw EmptyInput("majority_vote: k = 0");
    const double k = static_cast<double>(answers.size());

    // Equivalence classes under the canonical matcher. Greedy assignment to
    // the first matching class keeps tolerance-based numeric equality usable
    // for counting.
    struct Cluster {
        std::string representative;  // lexicographically smallest canonical member
        int votes = 0;
    };
    std::vector<Cluster> clusters;
    for (const auto& a : answers) {
        if (!a) continue;
        std::string canon = canonical_answer(*a);
        bool placed = false;
        for (auto& c : clusters) {
            if (canon == c.representative || answers_equal(canon, c.representative)) {
                ++c.votes;
                if (canon < c.representative) c.representative = canon;
                placed = true;
                break;
            }
        }
        if (!placed) clusters.push_back(Cluster{std::move(canon), 1});
    }

    if (clusters.empty()) return VoteResult{std::nullopt, 0.0};

    const Cluster* best = &clusters.front();
    for (const auto& c : clusters) {
        if (c.votes > best->votes ||
            (c.votes == best->votes && c.representative < best->representative)) {
            best = &c;
        }
    }
    return VoteResult{best->representative, best->votes / k};
}

ConsistencyRecord build_consistency_record(std::string task_id,
                                           std::span<const Trajectory> trajectories) {
    ConsistencyRecord rec;
    rec.task_id = std::move(task_id);
    rec.answers.reserve(trajectories.size());
    for (const auto& t : trajectories) rec.answers.push_back(t.final_answer);
    auto vote = majority_vote(rec.answers);
    rec.majority_answer = vote.majority_answer;
    rec.p_hat = vote.p_hat;
    return rec;
}

FilteredDataset filter_frontier(std::span<const std::pair<Task, ConsistencyRecord>> pool,
                                const FrontierBand& band, int iteration) {
    if (!(band.lower >= 0.0 && band.upper <= 1.0 && band.lower <= band.upper))
        throw DomainError("frontier band must satisfy 0 <= lower <= upper <= 1");
    FilteredDataset out;
    out.iteration = iteration;
    out.band = band;
    for (const auto& [task, rec] : pool) {
        if (!rec.majority_answer) continue;  // no pseudo-label to train on
        if (!band.contains(rec.p_hat)) continue;
        out.entries.push_back(FilteredEntry{task, rec.p_hat, *rec.majority_answer});
    }
    return out;
}

std::vector<double> assign_terminal_rewards(std::span<const Trajectory> trajectories,
                                            const std::string& pseudo_label) {
    std::vector<double> rewards;
    rewards.reserve(trajectories.size());
    for (const auto& t : trajectories) {
        bool hit = t.final_answer && answers_equal(*t.final_answer, pseudo_label);
        rewards.push_back(hit ? 1.0 : 0.0);
    }
    return rewards;
}

}  // namespace agent0
