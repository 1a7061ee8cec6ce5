#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "agent0/common.hpp"
#include "agent0/types.hpp"

namespace agent0 {

struct FormatError {
    std::string message;
};

// Accepts exactly: optional whitespace, <question>...</question>, whitespace,
// \boxed{...}, optional trailing whitespace. Anything else is a FormatError,
// which upstream treats as a failed format check.
Result<Task, FormatError> parse_curriculum_output(std::string_view raw, std::string id = "",
                                                  int iteration = 0);

// Content of the last boxed expression, balanced-brace scan; nullopt when absent.
std::optional<std::string> extract_final_answer(std::string_view text);

// Span of a boxed expression in `text` (content bounds, marker bounds).
struct BoxedMatch {
    size_t marker_begin;   // position of the backslash
    size_t content_begin;  // first char inside the braces
    size_t content_end;    // one past last content char
    size_t marker_end;     // one past the closing brace
};

// First complete boxed expression at or after `from`; nullopt when none.
std::optional<BoxedMatch> find_boxed(std::string_view text, size_t from = 0);

// Exact inverse of parse for well-formed tasks.
std::string render_curriculum_output(const Task& task);

}  // namespace agent0
