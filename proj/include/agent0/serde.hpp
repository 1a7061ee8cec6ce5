#pragma once

#include <string>

#include "json.hpp"

#include "agent0/types.hpp"

namespace agent0 {

using json = nlohmann::json;

json to_json(const Task& t);
json to_json(const Segment& s);
json to_json(const Trajectory& t);
json to_json(const ConsistencyRecord& r);
json to_json(const RewardBreakdown& r);

Task task_from_json(const json& j);
Segment segment_from_json(const json& j);
Trajectory trajectory_from_json(const json& j);
ConsistencyRecord consistency_record_from_json(const json& j);
RewardBreakdown reward_breakdown_from_json(const json& j);

// one self-contained record per line
std::string to_jsonl_line(const json& j);

}  // namespace agent0
