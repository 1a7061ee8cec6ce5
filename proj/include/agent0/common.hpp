#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace agent0 {

// Error with a stable machine-parsable category, used by the CLI exit path.
class Error : public std::runtime_error {
  public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

  private:
    std::string category_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error("domain", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& m) : Error("shape_mismatch", m) {}
};
struct GroupTooSmall : Error {
    explicit GroupTooSmall(const std::string& m) : Error("group_too_small", m) {}
};
struct EmptyInput : Error {
    explicit EmptyInput(const std::string& m) : Error("empty_input", m) {}
};
struct CapabilityError : Error {
    explicit CapabilityError(const std::string& m) : Error("capability", m) {}
};
struct UnknownContext : Error {
    explicit UnknownContext(const std::string& m) : Error("unknown_context", m) {}
};
struct UnreachableSequence : Error {
    explicit UnreachableSequence(const std::string& m) : Error("unreachable_sequence", m) {}
};
struct NonFiniteGradient : Error {
    explicit NonFiniteGradient(const std::string& m) : Error("non_finite_gradient", m) {}
};
struct GeneratorFailure : Error {
    explicit GeneratorFailure(const std::string& m) : Error("generator_failure", m) {}
};
struct EmptyFrontier : Error {
    explicit EmptyFrontier(const std::string& m) : Error("empty_frontier", m) {}
};
struct DegenerateCurriculum : Error {
    explicit DegenerateCurriculum(const std::string& m) : Error("degenerate_curriculum", m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

// Expected-style result for outcomes that are data, not exceptions
// (e.g. a format check failing is a reward signal, not a fault).
template <class T, class E>
class Result {
  public:
    Result(T value) : v_(std::in_place_index<0>, std::move(value)) {}
    Result(E error) : v_(std::in_place_index<1>, std::move(error)) {}

    bool ok() const { return v_.index() == 0; }
    explicit operator bool() const { return ok(); }

    const T& value() const& { return std::get<0>(v_); }
    T&& value() && { return std::get<0>(std::move(v_)); }
    const E& error() const& { return std::get<1>(v_); }

  private:
    std::variant<T, E> v_;
};

inline std::string_view trim_view(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

// Shortest round-trip decimal rendering; integral values drop the fraction.
inline std::string fmt_double(double x) {
    if (x == 0.0) return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace agent0
