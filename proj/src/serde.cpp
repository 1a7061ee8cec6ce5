#include "agent0/serde.hpp"

#include "agent0/common.hpp"
#include "agent0/parse.hpp"

namespace agent0 {

namespace {

json opt_to_json(const std::optional<std::string>& v) {
    if (!v) return nullptr;
    return *v;
}

std::optional<std::string> opt_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<std::string>();
}

}  // namespace

json to_json(const Task& t) {
    return json{{"id", t.id},
                {"prompt_text", t.prompt_text},
                {"question", t.question},
                {"declared_answer", opt_to_json(t.declared_answer)},
                {"iteration", t.iteration},
                {"format_valid", t.format_valid}};
}

Task task_from_json(const json& j) {
    Task t;
    t.id = j.at("id").get<std::string>();
    t.prompt_text = j.at("prompt_text").get<std::string>();
    t.question = j.at("question").get<std::string>();
    t.declared_answer = opt_from_json(j.at("declared_answer"));
    t.iteration = j.at("iteration").get<int>();
    t.format_valid = j.at("format_valid").get<bool>();
    return t;
}

json to_json(const Segment& s) {
    json j{{"kind", std::string(segment_kind_name(s.kind))}, {"text", s.text}};
    if (s.kind != SegmentKind::tool_output) {
        j["tokens"] = s.tokens;
        j["token_logprobs"] = s.token_logprobs;
    }
    return j;
}

Segment segment_from_json(const json& j) {
    Segment s;
    auto kind = segment_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw IoError("unknown segment kind: " + j.at("kind").get<std::string>());
    s.kind = *kind;
    s.text = j.at("text").get<std::string>();
    if (j.contains("tokens")) s.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("token_logprobs"))
        s.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    return s;
}

json to_json(const Trajectory& t) {
    json segs = json::array();
    for (const auto& s : t.segments) segs.push_back(to_json(s));
    return json{{"task_id", t.task_id},
                {"segments", segs},
                {"final_answer", opt_to_json(t.final_answer)},
                {"truncated", t.truncated},
                {"tool_call_count", t.tool_call_count}};
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.task_id = j.at("task_id").get<std::string>();
    for (const auto& s : j.at("segments")) t.segments.push_back(segment_from_json(s));
    t.final_answer = opt_from_json(j.at("final_answer"));
    t.truncated = j.at("truncated").get<bool>();
    t.tool_call_count = j.at("tool_call_count").get<int>();
    return t;
}

json to_json(const ConsistencyRecord& r) {
    json answers = json::array();
    for (const auto& a : r.answers) answers.push_back(opt_to_json(a));
    return json{{"task_id", r.task_id},
                {"answers", answers},
                {"majority_answer", opt_to_json(r.majority_answer)},
                {"p_hat", r.p_hat}};
}

ConsistencyRecord consistency_record_from_json(const json& j) {
    ConsistencyRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    for (const auto& a : j.at("answers")) r.answers.push_back(opt_from_json(a));
    r.majority_answer = opt_from_json(j.at("majority_answer"));
    r.p_hat = j.at("p_hat").get<double>();
    return r;
}

json to_json(const RewardBreakdown& r) {
    return json{{"task_id", r.task_id}, {"r_unc", r.r_unc},
                {"r_tool", r.r_tool},   {"r_rep", r.r_rep},
                {"format_ok", r.format_ok}, {"composite", r.composite}};
}

RewardBreakdown reward_breakdown_from_json(const json& j) {
    RewardBreakdown r;
    r.task_id = j.at("task_id").get<std::string>();
    r.r_unc = j.at("r_unc").get<double>();
    r.r_tool = j.at("r_tool").get<double>();
    r.r_rep = j.at("r_rep").get<double>();
    r.format_ok = j.at("format_ok").get<bool>();
    r.composite = j.at("composite").get<double>();
    return r;
}

std::string to_jsonl_line(const json& j) {
    return j.dump() + "\n";
}

}  // namespace agent0
