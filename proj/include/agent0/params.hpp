#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace agent0 {

// Logit table for a family of conditional categorical distributions, one row
// per conditioning context. The trainable policies are collections of these.
struct ParamTable {
    std::string name;
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> logits;  // rows*cols, row-major

    static ParamTable zeros(std::string name, size_t rows, size_t cols) {
        return ParamTable{std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0)};
    }
    double* row(size_t r) { return logits.data() + r * cols; }
    const double* row(size_t r) const { return logits.data() + r * cols; }
};

using PolicyParams = std::vector<ParamTable>;

// Reference into a parameter table row: which categorical choice a sampled
// token committed. Deterministic-expansion tokens carry table = -1.
struct ChoiceRef {
    int table = -1;
    int row = 0;
    int col = 0;
    bool learnable() const { return table >= 0; }
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

inline PolicyParams zeros_like(const PolicyParams& p) {
    PolicyParams out;
    out.reserve(p.size());
    for (const auto& t : p) out.push_back(ParamTable::zeros(t.name, t.rows, t.cols));
    return out;
}

}  // namespace agent0
