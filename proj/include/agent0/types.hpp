#pragma once

#include <optional>
#include <string>
#include <vector>

namespace agent0 {

// All core types are immutable after construction by convention and safe to
// share across concurrent rollout workers.

struct Task {
    std::string id;
    std::string prompt_text;  // raw curriculum-agent output
    std::string question;     // extracted <question> block content
    std::optional<std::string> declared_answer;  // boxed block content
    int iteration = 0;
    bool format_valid = false;

    static Task invalid(std::string id, std::string raw, int iteration) {
        Task t;
        t.id = std::move(id);
        t.prompt_text = std::move(raw);
        t.iteration = iteration;
        t.format_valid = false;
        return t;
    }
};

enum class SegmentKind { policy_text, tool_call, tool_output };

std::string_view segment_kind_name(SegmentKind k);
std::optional<SegmentKind> segment_kind_from_name(std::string_view name);

struct Segment {
    SegmentKind kind;
    std::string text;  // for tool_call: exactly the content between the fence delimiters
    // present only for policy-generated kinds; tool_output is environment-injected
    std::vector<std::string> tokens;
    std::vector<double> token_logprobs;
};

struct Trajectory {
    std::string task_id;
    std::vector<Segment> segments;
    std::optional<std::string> final_answer;
    bool truncated = false;
    int tool_call_count = 0;  // number of tool_output segments
};

struct ConsistencyRecord {
    std::string task_id;
    std::vector<std::optional<std::string>> answers;  // NONE recorded as nullopt
    std::optional<std::string> majority_answer;
    double p_hat = 0.0;
};

struct RewardBreakdown {
    std::string task_id;
    double r_unc = 0.0;
    double r_tool = 0.0;
    double r_rep = 0.0;
    bool format_ok = false;
    double composite = 0.0;
};

struct UpdateEntry {
    Trajectory trajectory;
    double reward = 0.0;            // {0,1} indicator for the executor, composite R_C for the curriculum
    double advantage = 0.0;         // group z-score
    double scaled_advantage = 0.0;  // advantage * s(p_hat)
    double eps_low = 0.2;
    double eps_high = 0.2;
    double p_hat = 1.0;
};

struct UpdateBatch {
    std::vector<UpdateEntry> entries;
    size_t group_size = 0;  // entries are laid out as consecutive groups of this size
    std::string policy_version;
};

}  // namespace agent0
