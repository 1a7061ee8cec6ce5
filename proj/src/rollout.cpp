#include "agent0/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <future>

#include "agent0/common.hpp"
#include "agent0/parse.hpp"
#include "agent0/rng.hpp"

namespace agent0 {

void RolloutLimits::validate() const {
    if (max_turns < 1 || max_total_tokens < 1 || per_call_timeout_ms < 1 ||
        max_answer_wait_tokens < 1)
        throw ConfigError("rollout limits must all be positive");
}

std::string_view rollout_event_kind_name(RolloutEventKind k) {
    switch (k) {
        case RolloutEventKind::policy_chunk: return "policy_chunk";
        case RolloutEventKind::tool_call_detected: return "tool_call_detected";
        case RolloutEventKind::tool_result_injected: return "tool_result_injected";
        case RolloutEventKind::final_answer: return "final_answer";
        case RolloutEventKind::truncated: return "truncated";
    }
    return "policy_chunk";
}

namespace {

struct FenceSpan {
    size_t begin;
    size_t end;  // npos while incomplete
    bool is_code;
    size_t body_begin;
    size_t body_end;
};

// All fence spans in stream order; an unterminated trailing fence has
// end = npos and covers the rest of the buffer.
std::vector<FenceSpan> scan_fences(std::string_view buf, const FenceConfig& fences) {
    std::vector<FenceSpan> spans;
    size_t pos = 0;
    while (pos < buf.size()) {
        size_t pc = buf.find(fences.code_open, pos);
        size_t po = buf.find(fences.output_open, pos);
        size_t p;
        bool is_code;
        if (pc == std::string_view::npos && po == std::string_view::npos) break;
        if (pc != std::string_view::npos && (po == std::string_view::npos || pc < po)) {
            p = pc;
            is_code = true;
        } else {
            p = po;
            is_code = false;
        }
        size_t marker_len = is_code ? fences.code_open.size() : fences.output_open.size();
        if (p + marker_len >= buf.size()) {
            // marker at the buffer edge: opening line not finished yet
            spans.push_back({p, std::string_view::npos, is_code, p + marker_len, buf.size()});
            break;
        }
        if (buf[p + marker_len] != '\n') {
            pos = p + 1;  // a longer tag, not ours
            continue;
        }
        size_t body_begin = p + marker_len + 1;
        std::string closer = "\n" + fences.fence_close;
        size_t q = buf.find(closer, body_begin);
        if (q == std::string_view::npos) {
            spans.push_back({p, std::string_view::npos, is_code, body_begin, buf.size()});
            break;
        }
        spans.push_back({p, q + closer.size(), is_code, body_begin, q});
        pos = q + closer.size();
    }
    return spans;
}

bool inside_any_fence(const std::vector<FenceSpan>& spans, size_t pos) {
    for (const auto& s : spans) {
        size_t end = s.end == std::string_view::npos ? std::string_view::npos : s.end;
        if (pos >= s.begin && (end == std::string_view::npos || pos < end)) return true;
    }
    return false;
}

struct ScanOutcome {
    std::optional<ToolCallMatch> tool;
    std::optional<BoxedMatch> answer;
    size_t earliest_incomplete = std::string_view::npos;
};

ScanOutcome scan_buffer(std::string_view buf, const FenceConfig& fences) {
    ScanOutcome out;
    auto spans = scan_fences(buf, fences);

    for (const auto& s : spans) {
        if (s.end == std::string_view::npos) {
            out.earliest_incomplete = std::min(out.earliest_incomplete, s.begin);
            break;
        }
        if (s.is_code && !out.tool) {
            std::string_view body = buf.substr(s.body_begin, s.body_end - s.body_begin);
            if (!trim_view(body).empty())
                out.tool = ToolCallMatch{std::string(body), s.begin, s.end};
        }
    }

    size_t from = 0;
    while (auto b = find_boxed(buf, from)) {
        if (!inside_any_fence(spans, b->marker_begin)) {
            out.answer = b;
            break;
        }
        from = b->marker_end;
    }
    // an unbalanced boxed opening outside fences may still complete
    if (!out.answer) {
        size_t probe = 0;
        while (true) {
            auto p = buf.find("\\boxed{", probe);
            if (p == std::string_view::npos) break;
            if (!inside_any_fence(spans, p)) {
                bool complete = find_boxed(buf, p).has_value() && find_boxed(buf, p)->marker_begin == p;
                if (!complete) {
                    out.earliest_incomplete = std::min(out.earliest_incomplete, p);
                    break;
                }
            }
            probe = p + 1;
        }
    }
    return out;
}

}  // namespace

std::optional<ToolCallMatch> detect_tool_call(std::string_view buffer, const FenceConfig& fences,
                                              size_t from) {
    auto spans = scan_fences(buffer.substr(from), fences);
    for (const auto& s : spans) {
        if (s.end == std::string_view::npos) return std::nullopt;
        if (!s.is_code) continue;
        std::string_view body = buffer.substr(from + s.body_begin, s.body_end - s.body_begin);
        if (trim_view(body).empty()) continue;  // inert, nothing to execute
        return ToolCallMatch{std::string(body), from + s.begin, from + s.end};
    }
    return std::nullopt;
}

std::string render_rollout_prompt(const RolloutOptions& opts, const Task& task) {
    std::string out = opts.prompt_template;
    auto p = out.find("{problem}");
    if (p != std::string::npos) out.replace(p, 9, task.question);
    return out;
}

namespace {

struct TokenBuffer {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<double> logprobs;
    std::vector<size_t> starts;  // char offset of each token in text
    bool has_logprobs = true;

    void append(const GenResult& chunk) {
        for (size_t i = 0; i < chunk.tokens.size(); ++i) {
            starts.push_back(text.size());
            text += chunk.tokens[i];
            tokens.push_back(chunk.tokens[i]);
            logprobs.push_back(i < chunk.logprobs.size() ? chunk.logprobs[i] : 0.0);
        }
        if (chunk.logprobs.size() != chunk.tokens.size()) has_logprobs = false;
    }

    // tokens assigned to [begin,end) by their starting offset
    Segment make_segment(SegmentKind kind, size_t begin, size_t end,
                         const std::string& text_override = {}) const {
        Segment seg;
        seg.kind = kind;
        seg.text = text_override.empty() || kind != SegmentKind::tool_call
                       ? text.substr(begin, end - begin)
                       : text_override;
        if (kind == SegmentKind::tool_output) return seg;
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (starts[i] >= begin && starts[i] < end) {
                seg.tokens.push_back(tokens[i]);
                if (has_logprobs) seg.token_logprobs.push_back(logprobs[i]);
            }
        }
        return seg;
    }
};

}  // namespace

Trajectory rollout_one(const Task& task, Generator& generator, SandboxClient& sandbox,
                       const RolloutOptions& opts, uint64_t seed,
                       std::vector<RolloutEvent>* events) {
    opts.limits.validate();
    Trajectory traj;
    traj.task_id = task.id;

    auto emit = [&](RolloutEventKind kind, std::string payload) {
        if (events) events->push_back(RolloutEvent{kind, std::move(payload)});
    };

    std::string context = render_rollout_prompt(opts, task);
    RngStream stream(seed);
    uint64_t call_index = 0;
    int tokens_used = 0;
    int executed_calls = 0;
    const std::vector<std::string> stops = {"\n" + opts.fences.fence_close};

    TokenBuffer buf;
    int turn_tokens = 0;

    auto flush_tail_and_truncate = [&](const std::string& reason) {
        if (!buf.text.empty())
            traj.segments.push_back(
                buf.make_segment(SegmentKind::policy_text, 0, buf.text.size()));
        traj.truncated = true;
        emit(RolloutEventKind::truncated, reason);
        return traj;
    };

    while (true) {
        int budget = std::min(opts.limits.max_total_tokens - tokens_used,
                              opts.limits.max_answer_wait_tokens - turn_tokens);
        if (budget <= 0) return flush_tail_and_truncate("token budget exhausted");

        GenResult chunk;
        try {
            chunk = generator.generate(context + buf.text, stops, budget,
                                       stream.child(call_index++).seed());
        } catch (const std::exception& e) {
            return flush_tail_and_truncate(std::string("generator failure: ") + e.what());
        }
        if (chunk.tokens.empty() && !chunk.complete)
            return flush_tail_and_truncate("generator produced no tokens");
        tokens_used += static_cast<int>(chunk.tokens.size());
        turn_tokens += static_cast<int>(chunk.tokens.size());
        buf.append(chunk);
        emit(RolloutEventKind::policy_chunk, chunk.text());

        auto scan = scan_buffer(buf.text, opts.fences);

        // something incomplete precedes every complete event: keep streaming
        size_t first_event = std::string_view::npos;
        if (scan.tool) first_event = scan.tool->begin;
        if (scan.answer) first_event = std::min(first_event, scan.answer->marker_begin);
        bool must_wait = scan.earliest_incomplete < first_event && !chunk.complete;

        if (!must_wait && scan.answer &&
            (!scan.tool || scan.answer->marker_begin < scan.tool->begin)) {
            // the boxed answer terminates the trajectory immediately
            size_t cut = scan.answer->marker_end;
            traj.segments.push_back(buf.make_segment(SegmentKind::policy_text, 0, cut));
            traj.final_answer = buf.text.substr(scan.answer->content_begin,
                                                scan.answer->content_end -
                                                    scan.answer->content_begin);
            emit(RolloutEventKind::final_answer, *traj.final_answer);
            return traj;
        }

        if (!must_wait && scan.tool) {
            const auto& m = *scan.tool;
            if (m.begin > 0)
                traj.segments.push_back(buf.make_segment(SegmentKind::policy_text, 0, m.begin));
            traj.segments.push_back(
                buf.make_segment(SegmentKind::tool_call, m.begin, m.end, m.body));
            emit(RolloutEventKind::tool_call_detected, m.body);

            if (executed_calls >= opts.limits.max_turns) {
                traj.truncated = true;
                emit(RolloutEventKind::truncated, "tool-call budget exhausted");
                return traj;
            }

            ExecutionRequest req;
            req.request_id =
                "t" + std::to_string(seed) + "_c" + std::to_string(executed_calls);
            req.code = m.body;
            req.timeout_ms = opts.limits.per_call_timeout_ms;
            ExecutionResult result = sandbox.execute(req);
            // failures are injected verbatim so the policy can self-correct
            std::string injected = result.output;
            if (trim_view(injected).empty()) injected = opts.empty_output_text;

            ++executed_calls;
            traj.tool_call_count = executed_calls;
            Segment out_seg;
            out_seg.kind = SegmentKind::tool_output;
            out_seg.text = injected;
            traj.segments.push_back(std::move(out_seg));
            emit(RolloutEventKind::tool_result_injected, injected);

            // context grows by exactly the consumed turn plus the injected
            // block; any sampled text beyond the fence is wasted
            context += buf.text.substr(0, m.end);
            context += "\n" + opts.fences.output_open + "\n" + injected + "\n" +
                       opts.fences.fence_close + "\n";
            buf = TokenBuffer{};
            turn_tokens = 0;
            continue;
        }

        if (chunk.complete)
            return flush_tail_and_truncate("generator finished without an answer");
    }
}

std::vector<Trajectory> rollout_task(const Task& task, Generator& generator,
                                     SandboxClient& sandbox, const RolloutOptions& opts, int k,
                                     uint64_t seed) {
    if (k < 1) throw DomainError("rollout_task: k must be >= 1");
    std::vector<Trajectory> out(static_cast<size_t>(k));
    RngStream stream(seed);

    int parallel = std::max(1, opts.parallel);
    if (parallel == 1) {
        for (int i = 0; i < k; ++i)
            out[static_cast<size_t>(i)] =
                rollout_one(task, generator, sandbox, opts, stream.child(uint64_t(i)).seed());
        return out;
    }

    std::atomic<int> next{0};
    auto run = [&] {
        while (true) {
            int i = next.fetch_add(1);
            if (i >= k) break;
            out[static_cast<size_t>(i)] =
                rollout_one(task, generator, sandbox, opts, stream.child(uint64_t(i)).seed());
        }
    };
    std::vector<std::future<void>> futures;
    for (int t = 0; t < std::min(parallel, k); ++t)
        futures.push_back(std::async(std::launch::async, run));
    for (auto& f : futures) f.get();
    return out;
}

std::string render_segment(const Segment& seg, const FenceConfig& fences) {
    switch (seg.kind) {
        case SegmentKind::policy_text:
            return seg.text;
        case SegmentKind::tool_call:
            return fences.code_open + "\n" + seg.text + "\n" + fences.fence_close;
        case SegmentKind::tool_output:
            return "\n" + fences.output_open + "\n" + seg.text + "\n" + fences.fence_close +
                   "\n";
    }
    return seg.text;
}

FlatTokens flatten_for_scoring(const std::string& initial_context, const Trajectory& traj,
                               const FenceConfig& fences) {
    FlatTokens out;
    std::string context = initial_context;
    ScoringTurn turn;
    bool turn_open = false;

    auto close_turn = [&] {
        if (turn_open && !turn.tokens.empty()) out.turns.push_back(std::move(turn));
        turn = ScoringTurn{};
        turn_open = false;
    };

    for (const auto& seg : traj.segments) {
        if (seg.kind == SegmentKind::tool_output) {
            close_turn();
            out.old_logprobs.push_back(0.0);
            out.mask.push_back(0);
            context += render_segment(seg, fences);
            continue;
        }
        if (!turn_open) {
            turn.context = context;  // the turn scores against its own start context
            turn_open = true;
        }
        for (size_t i = 0; i < seg.tokens.size(); ++i) {
            turn.tokens.push_back(seg.tokens[i]);
            turn.flat_token_offsets.push_back(out.old_logprobs.size());
            out.old_logprobs.push_back(i < seg.token_logprobs.size() ? seg.token_logprobs[i]
                                                                     : 0.0);
            out.mask.push_back(1);
        }
        context += render_segment(seg, fences);
    }
    close_turn();
    return out;
}

}  // namespace agent0
