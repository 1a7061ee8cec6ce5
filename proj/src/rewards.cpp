#include "agent0/rewards.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include "agent0/common.hpp"

namespace agent0 {

void CurriculumRewardConfig::validate() const {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("curriculum reward config: ") + what);
    };
    check(std::isfinite(lambda_unc) && lambda_unc >= 0, "lambda_unc must be finite and >= 0");
    check(std::isfinite(lambda_tool) && lambda_tool >= 0, "lambda_tool must be finite and >= 0");
    check(std::isfinite(lambda_rep) && lambda_rep >= 0, "lambda_rep must be finite and >= 0");
    check(std::isfinite(gamma) && gamma >= 0, "gamma must be finite and >= 0");
    check(cap_c >= 1, "cap_c must be >= 1");
    check(tau_bleu > 0 && tau_bleu < 1, "tau_bleu must be in (0,1)");
    check(batch_size_b >= 1, "batch_size_b must be >= 1");
}

double uncertainty_reward(double p_hat) {
    if (!(p_hat >= 0.0 && p_hat <= 1.0))
        throw DomainError("p_hat outside [0,1]");
    return 1.0 - 2.0 * std::abs(p_hat - 0.5);
}

double tool_use_reward(int tool_call_count, const CurriculumRewardConfig& cfg) {
    return cfg.gamma * std::min(tool_call_count, cfg.cap_c);
}

double tool_use_reward_from_counts(std::span<const int> counts,
                                   const CurriculumRewardConfig& cfg) {
    if (counts.empty()) throw EmptyInput("tool_use_reward_from_counts: no samples");
    double capped = 0.0;
    for (int c : counts) capped += std::min(c, cfg.cap_c);
    return cfg.gamma * capped / static_cast<double>(counts.size());
}

namespace {

std::vector<std::string> tokenize_lower(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::map<std::string, int> ngram_counts(const std::vector<std::string>& toks, size_t n) {
    std::map<std::string, int> counts;
    if (toks.size() < n) return counts;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (size_t j = 0; j < n; ++j) {
            if (j) key.push_back('\x1f');
            key += toks[i + j];
        }
        ++counts[key];
    }
    return counts;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) {
        a = find(a), b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b);
        parent[b] = a;  // smaller index wins, keeps ids permutation-stable
    }
};

}  // namespace

double sentence_bleu(std::string_view candidate, std::string_view reference) {
    auto cand = tokenize_lower(candidate);
    auto ref = tokenize_lower(reference);
    if (cand.empty() || ref.empty()) return cand.empty() && ref.empty() ? 1.0 : 0.0;

    double log_sum = 0.0;
    for (size_t n = 1; n <= 4; ++n) {
        auto cc = ngram_counts(cand, n);
        auto rc = ngram_counts(ref, n);
        long matched = 0, total = 0;
        for (const auto& [key, cnt] : cc) {
            total += cnt;
            auto it = rc.find(key);
            if (it != rc.end()) matched += std::min(cnt, it->second);
        }
        double p;
        if (n == 1) {
            p = total > 0 ? static_cast<double>(matched) / total : 0.0;
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        if (p <= 0.0) return 0.0;
        log_sum += 0.25 * std::log(p);
    }
    double bp = cand.size() >= ref.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());
    return bp * std::exp(log_sum);
}

double pairwise_bleu_distance(std::string_view a, std::string_view b) {
    auto ta = trim_view(a);
    auto tb = trim_view(b);
    if (ta.empty() || tb.empty()) return ta.empty() && tb.empty() ? 0.0 : 1.0;
    return 1.0 - sentence_bleu(a, b);
}

std::vector<int> cluster_texts_by_similarity(std::span<const std::string> texts, double tau_bleu) {
    if (texts.empty()) throw EmptyInput("cluster_by_similarity: empty batch");
    const size_t n = texts.size();
    UnionFind uf(n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double dij = pairwise_bleu_distance(texts[i], texts[j]);
            double dji = pairwise_bleu_distance(texts[j], texts[i]);
            if (std::max(dij, dji) < tau_bleu) uf.unite(static_cast<int>(i), static_cast<int>(j));
        }
    }
    std::vector<int> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = uf.find(static_cast<int>(i));
    return out;
}

std::vector<int> cluster_by_similarity(std::span<const Task> batch, double tau_bleu) {
    std::vector<std::string> texts;
    texts.reserve(batch.size());
    for (const auto& t : batch) texts.push_back(t.prompt_text);
    return cluster_texts_by_similarity(texts, tau_bleu);
}

double repetition_penalty(int cluster_size, const CurriculumRewardConfig& cfg) {
    return cfg.lambda_rep * static_cast<double>(cluster_size) / cfg.batch_size_b;
}

double composite_curriculum_reward(bool format_ok, double r_unc, double r_tool, double r_rep,
                                   const CurriculumRewardConfig& cfg) {
    if (!format_ok) return 0.0;
    return std::max(0.0, cfg.lambda_unc * r_unc + cfg.lambda_tool * r_tool - r_rep);
}

}  // namespace agent0
