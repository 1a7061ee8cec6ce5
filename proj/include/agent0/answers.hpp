#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace agent0 {

// Canonical answer form: trim, collapse internal whitespace, strip outer
// braces, and normalize numeric literals to a shortest round-trip rendering.
std::string canonical_answer(std::string_view raw);

// Parses integers, decimals, scientific notation and simple fractions "p/q".
std::optional<double> parse_numeric(std::string_view s);

// Equality under the canonical matcher: canonical forms match, or both parse
// as numbers within relative tolerance 1e-9.
bool answers_equal(std::string_view a, std::string_view b);

inline constexpr double kAnswerRelTol = 1e-9;

}  // namespace agent0
