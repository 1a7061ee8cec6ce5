#pragma once

#include <array>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agent0/generators.hpp"

namespace agent0 {

// Desk-scale stand-in for free-form math tasks: every curriculum sentence is
// "<question>Evaluate EXPR</question>\n\boxed{value}" where EXPR is an
// integer arithmetic expression. The executor solves the expression either
// directly (with a difficulty-dependent chance of corrupting the value) or by
// stepwise evaluation through the code tool.

struct ToyConfig {
    int max_ops = 6;                // op-count choices 1..max_ops
    std::string operators = "+-*";  // sampled operator alphabet
    int n_buckets = 6;              // difficulty buckets keyed on op count
    int tool_call_budget = 4;       // stepwise calls collapse to one final call beyond this

    // Initial executor mixture. Correctness of a direct answer falls with
    // difficulty; the tool path is far more reliable but not perfect, which
    // keeps deep tasks on the ambiguity frontier.
    double init_p_tool = 0.2;
    std::vector<double> init_p_correct_direct = {0.90, 0.75, 0.60, 0.45, 0.35, 0.25};
    std::vector<double> init_p_correct_tool = {0.97, 0.95, 0.90, 0.85, 0.80, 0.70};

    void validate() const;
};

// ------------------------------ expression tree ------------------------------

struct Expr {
    struct Node {
        bool leaf = true;
        long long value = 0;
        char op = 0;
        int left = -1;
        int right = -1;
    };
    std::vector<Node> nodes;
    int root = -1;

    static Expr leaf(long long v);
    // deterministic balanced shape for a given op count; operators and leaf
    // values are assigned in left-to-right (in-order) rendering order
    static Expr build(int op_count, std::span<const char> ops, std::span<const long long> leaves);
    static std::optional<Expr> parse(std::string_view text);

    long long eval() const;
    int op_count() const;
    int depth() const;
    std::string render() const;  // root unparenthesized, children parenthesized
    // in-order operator and leaf sequences (the inverse of build)
    std::vector<char> ops_in_order() const;
    std::vector<long long> leaves_in_order() const;
};

struct DifficultyFeatures {
    int depth = 0;
    int op_count = 0;
};

// Parses "Evaluate EXPR" questions; nullopt when the question is not from the
// grammar.
std::optional<DifficultyFeatures> toy_task_difficulty(std::string_view question);
std::optional<long long> toy_exact_answer(std::string_view question);

struct ToyTaskGrammar {
    std::vector<std::string> vocabulary;
    int max_depth = 0;
    static ToyTaskGrammar describe(const ToyConfig& cfg);
};

// ------------------------------ token templates ------------------------------

inline constexpr std::string_view kQuestionTag = "<question>";
inline constexpr std::string_view kQuestionEndTag = "</question>";
inline constexpr std::string_view kEvaluatePrefix = "Evaluate ";
inline constexpr std::string_view kDirectPrefix = "I know this one. ";
inline constexpr std::string_view kToolPrefix = "Let me compute this step by step.\n";
inline constexpr std::string_view kToolAnswerPrefix = "The interpreter gives the result. ";
inline constexpr std::string_view kErrorAnswerPrefix =
    "The tool failed; answering from reasoning. ";
inline constexpr std::string_view kCodeFenceOpen = "```python\n";
inline constexpr std::string_view kCodeFenceClose = "\n```";
inline constexpr std::string_view kOutputFenceOpen = "```output";
inline constexpr std::string_view kBoxedOpen = "\\boxed{";
inline constexpr std::string_view kBoxedClose = "}";

// corruption offsets for the executor's answer-value choices; column 0 is the
// faithful value
inline constexpr std::array<int, 7> kValueDeltas = {0, 1, -1, 2, -2, 3, -3};

// ------------------------------ policies ------------------------------

namespace toy_tables {
// curriculum
inline constexpr int kOpCount = 0;
inline constexpr int kOperator = 1;
inline constexpr int kOperand = 2;
// executor
inline constexpr int kAction = 0;
inline constexpr int kDirectValue = 1;
inline constexpr int kToolValue = 2;
}  // namespace toy_tables

class ToyPolicyBase : public Generator {
  public:
    Capabilities capabilities() const override { return {true, true}; }
    std::vector<double> logprob_of(const std::string& context,
                                   std::span<const std::string> tokens) override;
    PolicyParams logprob_grad(const std::string& context, std::span<const std::string> tokens,
                              std::span<const double> token_weights) override;
    const PolicyParams& params() const override { return params_; }
    void set_params(const PolicyParams& p) override;

  protected:
    struct ScoredToken {
        std::string text;
        double logprob = 0.0;
        ChoiceRef choice;  // table < 0 for deterministic expansion
    };
    using TokenSeq = std::vector<ScoredToken>;

    // re-derives the unique choice assignment that produces `tokens` from
    // `context`; throws UnreachableSequence when no derivation exists
    virtual TokenSeq derive(const std::string& context,
                            std::span<const std::string> tokens) const = 0;

    double choice_logprob(int table, int row, int col) const;
    std::vector<double> choice_probs(int table, int row) const;

    PolicyParams params_;
    mutable std::shared_mutex mu_;
};

class ToyCurriculumPolicy final : public ToyPolicyBase {
  public:
    explicit ToyCurriculumPolicy(ToyConfig cfg);
    GenResult generate(const std::string& context, std::span<const std::string> stop_markers,
                       int max_tokens, uint64_t seed) override;
    const ToyConfig& config() const { return cfg_; }

  protected:
    TokenSeq derive(const std::string& context,
                    std::span<const std::string> tokens) const override;

  private:
    TokenSeq expand(int op_count, std::span<const char> ops,
                    std::span<const long long> leaves) const;
    ToyConfig cfg_;
};

class ToyExecutorPolicy final : public ToyPolicyBase {
  public:
    explicit ToyExecutorPolicy(ToyConfig cfg);
    GenResult generate(const std::string& context, std::span<const std::string> stop_markers,
                       int max_tokens, uint64_t seed) override;
    const ToyConfig& config() const { return cfg_; }

    int bucket_of(int op_count) const;

  protected:
    TokenSeq derive(const std::string& context,
                    std::span<const std::string> tokens) const override;

  private:
    struct TurnState {
        Expr question;           // original expression
        Expr current;            // after replaying tool outputs
        int outputs_seen = 0;
        bool error_mode = false;
        int bucket = 0;
        int planned_calls = 0;
    };
    TurnState reconstruct(const std::string& context) const;
    TokenSeq expand_turn(const TurnState& state, std::optional<int> action_choice,
                         std::optional<int> value_choice) const;

    ToyConfig cfg_;
};

}  // namespace agent0
