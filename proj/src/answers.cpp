#include "agent0/answers.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "agent0/common.hpp"

namespace agent0 {

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (char c : s) {
        if (is_space(c)) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

// whole-string brace pair, e.g. "{42}" -> "42"
bool strip_outer_braces(std::string& s) {
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
    int depth = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        else if (s[i] == '}') {
            --depth;
            if (depth == 0 && i + 1 != s.size()) return false;
        }
    }
    if (depth != 0) return false;
    s = s.substr(1, s.size() - 2);
    return true;
}

std::optional<double> parse_plain_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto first = s.data();
    auto last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec == std::errc() && ptr == last) return v;
    // tolerate a trailing decimal point ("4.")
    if (ec == std::errc() && ptr == last - 1 && *ptr == '.') return v;
    return std::nullopt;
}

std::string render_numeric(double v) {
    if (v == 0.0) return "0";  // folds -0
    double r = std::round(v);
    if (r == v && std::abs(v) < 9.007199254740992e15) {
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(r));
        (void)ec;
        return std::string(buf, ptr);
    }
    return fmt_double(v);
}

}  // namespace

std::optional<double> parse_numeric(std::string_view s) {
    s = trim_view(s);
    if (auto v = parse_plain_number(s)) return v;
    // simple fraction p/q with integer parts
    auto slash = s.find('/');
    if (slash != std::string_view::npos && slash > 0 && slash + 1 < s.size()) {
        auto num = parse_plain_number(trim_view(s.substr(0, slash)));
        auto den = parse_plain_number(trim_view(s.substr(slash + 1)));
        if (num && den && *den != 0.0 && std::round(*num) == *num && std::round(*den) == *den)
            return *num / *den;
    }
    return std::nullopt;
}

std::string canonical_answer(std::string_view raw) {
    std::string s = collapse_whitespace(trim_view(raw));
    while (strip_outer_braces(s)) {
        s = collapse_whitespace(trim_view(s));
    }
    if (auto v = parse_numeric(s)) return render_numeric(*v);
    return s;
}

bool answers_equal(std::string_view a, std::string_view b) {
    std::string ca = canonical_answer(a);
    std::string cb = canonical_answer(b);
    if (ca == cb) return true;
    auto va = parse_numeric(ca);
    auto vb = parse_numeric(cb);
    if (va && vb) {
        double scale = std::max(std::abs(*va), std::abs(*vb));
        return std::abs(*va - *vb) <= kAnswerRelTol * scale;
    }
    return false;
}

}  // namespace agent0
