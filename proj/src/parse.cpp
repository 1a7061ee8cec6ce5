#include "agent0/parse.hpp"

#include <string>

namespace agent0 {

namespace {

constexpr std::string_view kQuestionOpen = "<question>";
constexpr std::string_view kQuestionClose = "</question>";
constexpr std::string_view kBoxedMarker = "\\boxed{";

bool all_whitespace(std::string_view s) {
    return trim_view(s).empty();
}

}  // namespace

std::string_view segment_kind_name(SegmentKind k) {
    switch (k) {
        case SegmentKind::policy_text: return "policy_text";
        case SegmentKind::tool_call: return "tool_call";
        case SegmentKind::tool_output: return "tool_output";
    }
    return "policy_text";
}

std::optional<SegmentKind> segment_kind_from_name(std::string_view name) {
    if (name == "policy_text") return SegmentKind::policy_text;
    if (name == "tool_call") return SegmentKind::tool_call;
    if (name == "tool_output") return SegmentKind::tool_output;
    return std::nullopt;
}

std::optional<BoxedMatch> find_boxed(std::string_view text, size_t from) {
    while (from < text.size()) {
        auto pos = text.find(kBoxedMarker, from);
        if (pos == std::string_view::npos) return std::nullopt;
        size_t open = pos + kBoxedMarker.size() - 1;  // the '{'
        int depth = 0;
        for (size_t i = open; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}') {
                --depth;
                if (depth == 0) {
                    return BoxedMatch{pos, open + 1, i, i + 1};
                }
            }
        }
        // unbalanced: no complete boxed starting here
        from = pos + 1;
    }
    return std::nullopt;
}

std::optional<std::string> extract_final_answer(std::string_view text) {
    std::optional<BoxedMatch> last;
    size_t from = 0;
    while (auto m = find_boxed(text, from)) {
        last = m;
        from = m->marker_end;
    }
    if (!last) return std::nullopt;
    return std::string(text.substr(last->content_begin, last->content_end - last->content_begin));
}

Result<Task, FormatError> parse_curriculum_output(std::string_view raw, std::string id,
                                                  int iteration) {
    auto q_open = raw.find(kQuestionOpen);
    if (q_open == std::string_view::npos)
        return FormatError{"missing <question> block"};
    if (!all_whitespace(raw.substr(0, q_open)))
        return FormatError{"non-whitespace content before <question>"};

    auto q_close = raw.find(kQuestionClose, q_open + kQuestionOpen.size());
    if (q_close == std::string_view::npos)
        return FormatError{"unterminated <question> block"};

    auto boxed = find_boxed(raw, q_close + kQuestionClose.size());
    if (!boxed)
        return FormatError{"missing boxed answer block"};
    if (!all_whitespace(raw.substr(q_close + kQuestionClose.size(),
                                   boxed->marker_begin - q_close - kQuestionClose.size())))
        return FormatError{"non-whitespace content between blocks"};
    if (!all_whitespace(raw.substr(boxed->marker_end)))
        return FormatError{"trailing content after boxed answer"};
    // a boxed expression sneaking inside the question means blocks are out of order
    if (find_boxed(raw.substr(0, q_open)))
        return FormatError{"blocks out of order"};

    std::string question(trim_view(
        raw.substr(q_open + kQuestionOpen.size(), q_close - q_open - kQuestionOpen.size())));
    if (question.empty())
        return FormatError{"empty question"};

    Task t;
    t.id = std::move(id);
    t.prompt_text = std::string(raw);
    t.question = std::move(question);
    t.declared_answer =
        std::string(raw.substr(boxed->content_begin, boxed->content_end - boxed->content_begin));
    t.iteration = iteration;
    t.format_valid = true;
    return t;
}

std::string render_curriculum_output(const Task& task) {
    std::string out;
    out += kQuestionOpen;
    out += task.question;
    out += kQuestionClose;
    out += "\n";
    out += "\\boxed{";
    out += task.declared_answer.value_or("");
    out += "}";
    return out;
}

}  // namespace agent0
