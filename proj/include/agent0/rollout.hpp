#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agent0/generators.hpp"
#include "agent0/sandbox.hpp"
#include "agent0/types.hpp"

namespace agent0 {

struct RolloutLimits {
    int max_turns = 4;             // executed tool calls per trajectory
    int max_total_tokens = 2048;   // policy-generated tokens
    int per_call_timeout_ms = 2000;
    int max_answer_wait_tokens = 512;  // per-turn generation budget

    void validate() const;
};

// Fence markers are exact byte sequences; defaults follow the executor prompt
// convention (python code blocks answered by output blocks).
struct FenceConfig {
    std::string code_open = "```python";
    std::string output_open = "```output";
    std::string fence_close = "```";
};

enum class RolloutEventKind {
    policy_chunk,
    tool_call_detected,
    tool_result_injected,
    final_answer,
    truncated
};

std::string_view rollout_event_kind_name(RolloutEventKind k);

struct RolloutEvent {
    RolloutEventKind kind;
    std::string payload;
};

struct ToolCallMatch {
    std::string body;  // exactly the content between the fence delimiters
    size_t begin = 0;  // start of the opening marker
    size_t end = 0;    // one past the closing marker
};

// First complete code-tagged fenced block at or after `from`. Output-tagged
// fences are never calls; an opening fence without its closing fence is
// incomplete (keep streaming); a fence with only whitespace inside is inert.
std::optional<ToolCallMatch> detect_tool_call(std::string_view buffer, const FenceConfig& fences,
                                              size_t from = 0);

struct RolloutOptions {
    RolloutLimits limits;
    FenceConfig fences;
    // initial context; "{problem}" expands to the task question
    std::string prompt_template = "{problem}\n";
    std::string empty_output_text = "(no output)";
    int parallel = 1;  // concurrent trajectories per task
};

std::string render_rollout_prompt(const RolloutOptions& opts, const Task& task);

// One trajectory: stream policy output, pause at complete code fences,
// execute, inject the (possibly failing) result, resume; terminate on a boxed
// answer outside code fences or when a limit trips.
Trajectory rollout_one(const Task& task, Generator& generator, SandboxClient& sandbox,
                       const RolloutOptions& opts, uint64_t seed,
                       std::vector<RolloutEvent>* events = nullptr);

// k trajectories with seeds derived per sample index; trajectories run
// concurrently up to opts.parallel and the result order is by index.
std::vector<Trajectory> rollout_task(const Task& task, Generator& generator,
                                     SandboxClient& sandbox, const RolloutOptions& opts, int k,
                                     uint64_t seed);

// Byte-exact reconstruction of the context contribution of one segment,
// matching what the engine appended during the rollout.
std::string render_segment(const Segment& seg, const FenceConfig& fences);

// One policy turn (the consecutive policy segments between tool outputs) with
// the exact context it was generated from; the unit at which trainable
// policies rescore trajectories.
struct ScoringTurn {
    std::string context;
    std::vector<std::string> tokens;
    std::vector<size_t> flat_token_offsets;  // position of each token in the flat stream
};

// Flat token-stream view of a trajectory: every policy token in order, with a
// mask entry of 0 for each tool output (one pseudo-position per injection).
struct FlatTokens {
    std::vector<double> old_logprobs;
    std::vector<uint8_t> mask;
    std::vector<ScoringTurn> turns;
};

FlatTokens flatten_for_scoring(const std::string& initial_context, const Trajectory& traj,
                               const FenceConfig& fences);

}  // namespace agent0
