#include "agent0/toy.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <charconv>
#include <cmath>
#include <mutex>

#include "agent0/common.hpp"
#include "agent0/rng.hpp"

namespace agent0 {

void ToyConfig::validate() const {
    auto check = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("toy config: ") + what);
    };
    check(max_ops >= 1, "max_ops must be >= 1");
    check(!operators.empty(), "operators must be non-empty");
    for (char c : operators)
        check(c == '+' || c == '-' || c == '*', "operators restricted to + - *");
    check(n_buckets >= 1, "n_buckets must be >= 1");
    check(tool_call_budget >= 1, "tool_call_budget must be >= 1");
    check(init_p_tool > 0.0 && init_p_tool < 1.0, "init_p_tool must be in (0,1)");
    check(static_cast<int>(init_p_correct_direct.size()) >= n_buckets,
          "init_p_correct_direct needs one entry per bucket");
    check(static_cast<int>(init_p_correct_tool.size()) >= n_buckets,
          "init_p_correct_tool needs one entry per bucket");
    for (double p : init_p_correct_direct)
        check(p > 0.0 && p < 1.0, "init_p_correct_direct entries must be in (0,1)");
    for (double p : init_p_correct_tool)
        check(p > 0.0 && p < 1.0, "init_p_correct_tool entries must be in (0,1)");
}

// ---------------------------------------------------------------------------
// Expr
// ---------------------------------------------------------------------------

Expr Expr::leaf(long long v) {
    Expr e;
    e.nodes.push_back(Node{true, v, 0, -1, -1});
    e.root = 0;
    return e;
}

namespace {

int build_rec(Expr& e, int op_count) {
    if (op_count == 0) {
        e.nodes.push_back(Expr::Node{true, 0, 0, -1, -1});
        return static_cast<int>(e.nodes.size()) - 1;
    }
    int remaining = op_count - 1;
    int left = build_rec(e, remaining / 2);
    int right = build_rec(e, remaining - remaining / 2);
    e.nodes.push_back(Expr::Node{false, 0, 0, left, right});
    return static_cast<int>(e.nodes.size()) - 1;
}

void assign_in_order(Expr& e, int node, std::span<const char> ops,
                     std::span<const long long> leaves, size_t& oi, size_t& li) {
    auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) {
        n.value = leaves[li++];
        return;
    }
    assign_in_order(e, n.left, ops, leaves, oi, li);
    n.op = ops[oi++];
    assign_in_order(e, n.right, ops, leaves, oi, li);
}

}  // namespace

Expr Expr::build(int op_count, std::span<const char> ops, std::span<const long long> leaves) {
    if (op_count < 0 || ops.size() != static_cast<size_t>(op_count) ||
        leaves.size() != static_cast<size_t>(op_count) + 1)
        throw DomainError("Expr::build: shape/choice mismatch");
    Expr e;
    e.root = build_rec(e, op_count);
    size_t oi = 0, li = 0;
    assign_in_order(e, e.root, ops, leaves, oi, li);
    return e;
}

long long Expr::eval() const {
    // nodes are stored children-first, so a forward pass suffices
    std::vector<long long> v(nodes.size(), 0);
    for (size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.leaf) {
            v[i] = n.value;
            continue;
        }
        long long a = v[static_cast<size_t>(n.left)], b = v[static_cast<size_t>(n.right)];
        switch (n.op) {
            case '+': v[i] = a + b; break;
            case '-': v[i] = a - b; break;
            case '*': v[i] = a * b; break;
            default: throw DomainError("Expr::eval: unsupported operator");
        }
    }
    return v[static_cast<size_t>(root)];
}

int Expr::op_count() const {
    int c = 0;
    for (const auto& n : nodes) c += n.leaf ? 0 : 1;
    return c;
}

namespace {

int depth_rec(const Expr& e, int node) {
    const auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) return 0;
    return 1 + std::max(depth_rec(e, n.left), depth_rec(e, n.right));
}

void render_rec(const Expr& e, int node, bool is_root, std::string& out) {
    const auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) {
        out += std::to_string(n.value);
        return;
    }
    if (!is_root) out += "(";
    render_rec(e, n.left, false, out);
    out += " ";
    out += n.op;
    out += " ";
    render_rec(e, n.right, false, out);
    if (!is_root) out += ")";
}

void in_order_rec(const Expr& e, int node, std::vector<char>* ops,
                  std::vector<long long>* leaves) {
    const auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) {
        if (leaves) leaves->push_back(n.value);
        return;
    }
    in_order_rec(e, n.left, ops, leaves);
    if (ops) ops->push_back(n.op);
    in_order_rec(e, n.right, ops, leaves);
}

// recursive-descent parser over digits, + - *, parentheses, unary minus
struct ExprTextParser {
    std::string_view src;
    size_t pos = 0;
    Expr out{};

    void skip_ws() {
        while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) ++pos;
    }
    bool done() {
        skip_ws();
        return pos >= src.size();
    }

    std::optional<int> parse_sum() {
        auto lhs = parse_atom();
        if (!lhs) return std::nullopt;
        while (true) {
            skip_ws();
            if (pos >= src.size() ||
                (src[pos] != '+' && src[pos] != '-' && src[pos] != '*'))
                return lhs;
            // flat precedence: the grammar always parenthesizes sub-terms, so
            // mixed bare chains associate left
            char op = src[pos++];
            auto rhs = parse_atom();
            if (!rhs) return std::nullopt;
            out.nodes.push_back(Expr::Node{false, 0, op, *lhs, *rhs});
            lhs = static_cast<int>(out.nodes.size()) - 1;
        }
    }

    std::optional<int> parse_atom() {
        skip_ws();
        if (pos >= src.size()) return std::nullopt;
        if (src[pos] == '(') {
            ++pos;
            auto inner = parse_sum();
            if (!inner) return std::nullopt;
            skip_ws();
            if (pos >= src.size() || src[pos] != ')') return std::nullopt;
            ++pos;
            return inner;
        }
        bool neg = false;
        if (src[pos] == '-') {
            neg = true;
            ++pos;
            skip_ws();
        }
        if (pos >= src.size() || !std::isdigit(static_cast<unsigned char>(src[pos])))
            return std::nullopt;
        long long v = 0;
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
            v = v * 10 + (src[pos] - '0');
            ++pos;
        }
        out.nodes.push_back(Expr::Node{true, neg ? -v : v, 0, -1, -1});
        return static_cast<int>(out.nodes.size()) - 1;
    }
};

}  // namespace

int Expr::depth() const {
    return depth_rec(*this, root);
}

std::string Expr::render() const {
    std::string out;
    render_rec(*this, root, true, out);
    return out;
}

std::vector<char> Expr::ops_in_order() const {
    std::vector<char> ops;
    in_order_rec(*this, root, &ops, nullptr);
    return ops;
}

std::vector<long long> Expr::leaves_in_order() const {
    std::vector<long long> leaves;
    in_order_rec(*this, root, nullptr, &leaves);
    return leaves;
}

std::optional<Expr> Expr::parse(std::string_view text) {
    ExprTextParser p{text};
    auto root = p.parse_sum();
    if (!root || !p.done()) return std::nullopt;
    p.out.root = *root;
    return p.out;
}

std::optional<DifficultyFeatures> toy_task_difficulty(std::string_view question) {
    auto q = trim_view(question);
    if (!q.starts_with(kEvaluatePrefix)) return std::nullopt;
    auto expr = Expr::parse(q.substr(kEvaluatePrefix.size()));
    if (!expr) return std::nullopt;
    return DifficultyFeatures{expr->depth(), expr->op_count()};
}

std::optional<long long> toy_exact_answer(std::string_view question) {
    auto q = trim_view(question);
    if (!q.starts_with(kEvaluatePrefix)) return std::nullopt;
    auto expr = Expr::parse(q.substr(kEvaluatePrefix.size()));
    if (!expr) return std::nullopt;
    return expr->eval();
}

ToyTaskGrammar ToyTaskGrammar::describe(const ToyConfig& cfg) {
    ToyTaskGrammar g;
    for (char d = '0'; d <= '9'; ++d) g.vocabulary.push_back(std::string(1, d));
    for (char op : cfg.operators) g.vocabulary.push_back(std::string(1, op));
    g.vocabulary.insert(g.vocabulary.end(), {"(", ")", std::string(kEvaluatePrefix),
                                             std::string(kQuestionTag),
                                             std::string(kQuestionEndTag),
                                             std::string(kBoxedOpen), std::string(kBoxedClose),
                                             std::string(kCodeFenceOpen),
                                             std::string(kCodeFenceClose),
                                             std::string(kOutputFenceOpen)});
    // balanced split: depth of the shape with the maximal op count
    std::vector<char> ops(static_cast<size_t>(cfg.max_ops), '+');
    std::vector<long long> leaves(static_cast<size_t>(cfg.max_ops) + 1, 1);
    g.max_depth = Expr::build(cfg.max_ops, ops, leaves).depth();
    return g;
}

// ---------------------------------------------------------------------------
// ToyPolicyBase
// ---------------------------------------------------------------------------

double ToyPolicyBase::choice_logprob(int table, int row, int col) const {
    const auto& t = params_[static_cast<size_t>(table)];
    auto ls = log_softmax(std::span<const double>(t.row(static_cast<size_t>(row)), t.cols));
    return ls[static_cast<size_t>(col)];
}

std::vector<double> ToyPolicyBase::choice_probs(int table, int row) const {
    const auto& t = params_[static_cast<size_t>(table)];
    return softmax(std::span<const double>(t.row(static_cast<size_t>(row)), t.cols));
}

void ToyPolicyBase::set_params(const PolicyParams& p) {
    std::unique_lock lock(mu_);
    if (p.size() != params_.size()) throw ShapeMismatch("set_params: table count mismatch");
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i].rows != params_[i].rows || p[i].cols != params_[i].cols)
            throw ShapeMismatch("set_params: table shape mismatch for " + params_[i].name);
    params_ = p;
}

std::vector<double> ToyPolicyBase::logprob_of(const std::string& context,
                                              std::span<const std::string> tokens) {
    std::shared_lock lock(mu_);
    auto seq = derive(context, tokens);
    std::vector<double> out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(t.logprob);
    return out;
}

PolicyParams ToyPolicyBase::logprob_grad(const std::string& context,
                                         std::span<const std::string> tokens,
                                         std::span<const double> token_weights) {
    std::shared_lock lock(mu_);
    auto seq = derive(context, tokens);
    if (token_weights.size() != seq.size())
        throw ShapeMismatch("logprob_grad: weight vector length mismatch");
    PolicyParams grad = zeros_like(params_);
    for (size_t i = 0; i < seq.size(); ++i) {
        const auto& c = seq[i].choice;
        if (!c.learnable() || token_weights[i] == 0.0) continue;
        auto probs = choice_probs(c.table, c.row);
        auto* row = grad[static_cast<size_t>(c.table)].row(static_cast<size_t>(c.row));
        for (size_t j = 0; j < probs.size(); ++j) {
            double onehot = (static_cast<int>(j) == c.col) ? 1.0 : 0.0;
            row[j] += token_weights[i] * (onehot - probs[j]);
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// ToyCurriculumPolicy
// ---------------------------------------------------------------------------

ToyCurriculumPolicy::ToyCurriculumPolicy(ToyConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    params_.push_back(ParamTable::zeros("op_count", 1, static_cast<size_t>(cfg_.max_ops)));
    params_.push_back(ParamTable::zeros("operator", 1, cfg_.operators.size()));
    params_.push_back(ParamTable::zeros("operand", 1, 10));
}

ToyPolicyBase::TokenSeq ToyCurriculumPolicy::expand(int op_count, std::span<const char> ops,
                                                    std::span<const long long> leaves) const {
    Expr expr = Expr::build(op_count, ops, leaves);
    TokenSeq seq;
    // the op-count choice rides on the constant leading token
    seq.push_back({std::string(kQuestionTag),
                   choice_logprob(toy_tables::kOpCount, 0, op_count - 1),
                   {toy_tables::kOpCount, 0, op_count - 1}});
    seq.push_back({std::string(kEvaluatePrefix), 0.0, {}});

    struct Walk {
        const ToyCurriculumPolicy* self;
        const Expr& e;
        const ToyConfig& cfg;
        TokenSeq& seq;
        void visit(int node, bool is_root) {
            const auto& n = e.nodes[static_cast<size_t>(node)];
            if (n.leaf) {
                int digit = static_cast<int>(n.value);
                seq.push_back({std::to_string(n.value),
                               self->choice_logprob(toy_tables::kOperand, 0, digit),
                               {toy_tables::kOperand, 0, digit}});
                return;
            }
            if (!is_root) seq.push_back({"(", 0.0, {}});
            visit(n.left, false);
            int op_idx = static_cast<int>(cfg.operators.find(n.op));
            seq.push_back({std::string(" ") + n.op + " ",
                           self->choice_logprob(toy_tables::kOperator, 0, op_idx),
                           {toy_tables::kOperator, 0, op_idx}});
            visit(n.right, false);
            if (!is_root) seq.push_back({")", 0.0, {}});
        }
    };
    Walk{this, expr, cfg_, seq}.visit(expr.root, true);

    seq.push_back({std::string(kQuestionEndTag), 0.0, {}});
    seq.push_back({"\n", 0.0, {}});
    seq.push_back({std::string(kBoxedOpen), 0.0, {}});
    seq.push_back({std::to_string(expr.eval()), 0.0, {}});
    seq.push_back({std::string(kBoxedClose), 0.0, {}});
    return seq;
}

GenResult ToyCurriculumPolicy::generate(const std::string& context,
                                        std::span<const std::string> stop_markers, int max_tokens,
                                        uint64_t seed) {
    (void)stop_markers;
    (void)max_tokens;
    std::shared_lock lock(mu_);
    if (context.find(kQuestionTag) == std::string::npos)
        throw UnknownContext("curriculum policy: context does not carry the task template");

    RngStream rng(seed);
    int op_count = 1 + static_cast<int>(rng.sample_categorical(
                           choice_probs(toy_tables::kOpCount, 0)));
    std::vector<char> ops;
    for (int i = 0; i < op_count; ++i)
        ops.push_back(
            cfg_.operators[rng.sample_categorical(choice_probs(toy_tables::kOperator, 0))]);
    std::vector<long long> leaves;
    for (int i = 0; i <= op_count; ++i)
        leaves.push_back(static_cast<long long>(
            rng.sample_categorical(choice_probs(toy_tables::kOperand, 0))));

    auto seq = expand(op_count, ops, leaves);
    GenResult out;
    for (auto& t : seq) {
        out.tokens.push_back(std::move(t.text));
        out.logprobs.push_back(t.logprob);
    }
    out.complete = true;
    return out;
}

ToyPolicyBase::TokenSeq ToyCurriculumPolicy::derive(const std::string& context,
                                                    std::span<const std::string> tokens) const {
    if (context.find(kQuestionTag) == std::string::npos)
        throw UnknownContext("curriculum policy: context does not carry the task template");
    // reassemble the text and re-parse the expression between the tags
    std::string text;
    for (const auto& t : tokens) text += t;
    auto open = text.find(kQuestionTag);
    auto close = text.find(kQuestionEndTag);
    if (open != 0 || close == std::string::npos)
        throw UnreachableSequence("curriculum derive: malformed question blocks");
    std::string_view q = trim_view(
        std::string_view(text).substr(kQuestionTag.size(), close - kQuestionTag.size()));
    if (!q.starts_with(kEvaluatePrefix))
        throw UnreachableSequence("curriculum derive: question is not an Evaluate task");
    auto expr = Expr::parse(q.substr(kEvaluatePrefix.size()));
    if (!expr) throw UnreachableSequence("curriculum derive: unparsable expression");

    int op_count = expr->op_count();
    if (op_count < 1 || op_count > cfg_.max_ops)
        throw UnreachableSequence("curriculum derive: op count outside the grammar");
    auto ops = expr->ops_in_order();
    auto leaves = expr->leaves_in_order();
    for (char op : ops)
        if (cfg_.operators.find(op) == std::string::npos)
            throw UnreachableSequence("curriculum derive: operator outside the grammar");
    for (long long v : leaves)
        if (v < 0 || v > 9) throw UnreachableSequence("curriculum derive: operand outside 0..9");

    auto seq = expand(op_count, ops, leaves);
    if (seq.size() != tokens.size())
        throw UnreachableSequence("curriculum derive: token count mismatch");
    for (size_t i = 0; i < seq.size(); ++i)
        if (seq[i].text != tokens[i])
            throw UnreachableSequence("curriculum derive: token mismatch at index " +
                                      std::to_string(i));
    return seq;
}

// ---------------------------------------------------------------------------
// ToyExecutorPolicy
// ---------------------------------------------------------------------------

namespace {

std::vector<double> row_from_probs(std::span<const double> probs) {
    std::vector<double> logits;
    logits.reserve(probs.size());
    for (double p : probs) logits.push_back(std::log(p));
    return logits;
}

std::optional<long long> parse_ll(std::string_view s) {
    s = trim_view(s);
    if (s.empty()) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// leftmost-innermost op node whose children are both leaves
int find_reducible(const Expr& e, int node) {
    const auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) return -1;
    if (int l = find_reducible(e, n.left); l >= 0) return l;
    if (int r = find_reducible(e, n.right); r >= 0) return r;
    return node;
}

void substitute(Expr& e, int node, long long value) {
    auto& n = e.nodes[static_cast<size_t>(node)];
    n.leaf = true;
    n.value = value;
    n.op = 0;
    n.left = n.right = -1;
}

std::string render_node(const Expr& e, int node) {
    const auto& n = e.nodes[static_cast<size_t>(node)];
    if (n.leaf) return std::to_string(n.value);
    std::string out = std::to_string(e.nodes[static_cast<size_t>(n.left)].value);
    out += " ";
    out += n.op;
    out += " ";
    out += std::to_string(e.nodes[static_cast<size_t>(n.right)].value);
    return out;
}

}  // namespace

ToyExecutorPolicy::ToyExecutorPolicy(ToyConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    size_t buckets = static_cast<size_t>(cfg_.n_buckets);
    ParamTable action = ParamTable::zeros("action", buckets, 2);
    ParamTable direct_value = ParamTable::zeros("direct_value", buckets, kValueDeltas.size());
    ParamTable tool_value = ParamTable::zeros("tool_value", buckets, kValueDeltas.size());
    for (size_t b = 0; b < buckets; ++b) {
        action.row(b)[0] = std::log(1.0 - cfg_.init_p_tool);
        action.row(b)[1] = std::log(cfg_.init_p_tool);
        auto fill = [&](ParamTable& t, double p_correct) {
            std::vector<double> probs(kValueDeltas.size(),
                                      (1.0 - p_correct) / (kValueDeltas.size() - 1));
            probs[0] = p_correct;
            auto logits = row_from_probs(probs);
            std::copy(logits.begin(), logits.end(), t.row(b));
        };
        fill(direct_value, cfg_.init_p_correct_direct[b]);
        fill(tool_value, cfg_.init_p_correct_tool[b]);
    }
    params_ = {std::move(action), std::move(direct_value), std::move(tool_value)};
}

int ToyExecutorPolicy::bucket_of(int op_count) const {
    return std::clamp(op_count, 1, cfg_.n_buckets) - 1;
}

ToyExecutorPolicy::TurnState ToyExecutorPolicy::reconstruct(const std::string& context) const {
    auto qpos = context.rfind(kEvaluatePrefix);
    if (qpos == std::string::npos)
        throw UnknownContext("executor policy: no Evaluate question in context");
    // the expression runs to the end of the question line
    size_t end = qpos + kEvaluatePrefix.size();
    while (end < context.size() && context[end] != '\n' && context[end] != '<') ++end;
    auto expr = Expr::parse(std::string_view(context).substr(
        qpos + kEvaluatePrefix.size(), end - qpos - kEvaluatePrefix.size()));
    if (!expr) throw UnknownContext("executor policy: unparsable Evaluate expression");

    TurnState st;
    st.question = *expr;
    st.current = *expr;
    st.bucket = bucket_of(expr->op_count());
    st.planned_calls = std::min(expr->op_count(), cfg_.tool_call_budget);

    // replay injected tool outputs
    size_t pos = qpos;
    while (true) {
        auto open = context.find(kOutputFenceOpen, pos);
        if (open == std::string::npos) break;
        auto body_start = context.find('\n', open);
        if (body_start == std::string::npos) break;
        auto close = context.find(kCodeFenceClose, body_start);
        if (close == std::string::npos) break;
        std::string_view body =
            std::string_view(context).substr(body_start + 1, close - body_start - 1);
        pos = close + kCodeFenceClose.size();
        ++st.outputs_seen;
        if (st.error_mode) continue;
        auto value = parse_ll(body);
        if (!value) {
            st.error_mode = true;
            continue;
        }
        if (st.outputs_seen == st.planned_calls && st.current.op_count() > 1) {
            st.current = Expr::leaf(*value);  // the final call evaluated everything remaining
        } else {
            int target = find_reducible(st.current, st.current.root);
            if (target < 0) {
                st.error_mode = true;  // more outputs than the plan can absorb
                continue;
            }
            substitute(st.current, target, *value);
        }
    }
    return st;
}

ToyPolicyBase::TokenSeq ToyExecutorPolicy::expand_turn(const TurnState& st,
                                                       std::optional<int> action_choice,
                                                       std::optional<int> value_choice) const {
    TokenSeq seq;
    const int b = st.bucket;

    auto answer_tokens = [&](std::string_view prefix, int value_table, long long base) {
        int col = value_choice.value_or(0);
        long long v = base + kValueDeltas[static_cast<size_t>(col)];
        seq.push_back({std::string(prefix), 0.0, {}});
        seq.push_back({std::string(kBoxedOpen), 0.0, {}});
        seq.push_back({std::to_string(v), choice_logprob(value_table, b, col),
                       {value_table, b, col}});
        seq.push_back({std::string(kBoxedClose), 0.0, {}});
    };

    if (st.outputs_seen == 0 && !st.error_mode) {
        int action = action_choice.value_or(0);
        if (action == 0) {
            seq.push_back({std::string(kDirectPrefix), choice_logprob(toy_tables::kAction, b, 0),
                           {toy_tables::kAction, b, 0}});
            // reuse the answer scaffolding minus its prefix token
            int col = value_choice.value_or(0);
            long long v = st.question.eval() + kValueDeltas[static_cast<size_t>(col)];
            seq.push_back({std::string(kBoxedOpen), 0.0, {}});
            seq.push_back({std::to_string(v),
                           choice_logprob(toy_tables::kDirectValue, b, col),
                           {toy_tables::kDirectValue, b, col}});
            seq.push_back({std::string(kBoxedClose), 0.0, {}});
            return seq;
        }
        seq.push_back({std::string(kToolPrefix), choice_logprob(toy_tables::kAction, b, 1),
                       {toy_tables::kAction, b, 1}});
        std::string code = "print(";
        code += (st.planned_calls == 1 && st.current.op_count() > 1)
                    ? st.current.render()
                    : render_node(st.current, find_reducible(st.current, st.current.root));
        code += ")";
        seq.push_back({std::string(kCodeFenceOpen), 0.0, {}});
        seq.push_back({std::move(code), 0.0, {}});
        seq.push_back({std::string(kCodeFenceClose), 0.0, {}});
        return seq;
    }

    if (st.error_mode) {
        answer_tokens(kErrorAnswerPrefix, toy_tables::kDirectValue, st.current.eval());
        return seq;
    }

    if (st.current.op_count() == 0) {
        // everything computed: answer from the final tool output
        answer_tokens(kToolAnswerPrefix, toy_tables::kToolValue,
                      st.current.nodes[static_cast<size_t>(st.current.root)].value);
        return seq;
    }

    // continuation call in the committed tool plan
    std::string code = "print(";
    bool final_whole = st.outputs_seen + 1 == st.planned_calls && st.current.op_count() > 1;
    code += final_whole ? st.current.render()
                        : render_node(st.current, find_reducible(st.current, st.current.root));
    code += ")";
    seq.push_back({std::string(kCodeFenceOpen), 0.0, {}});
    seq.push_back({std::move(code), 0.0, {}});
    seq.push_back({std::string(kCodeFenceClose), 0.0, {}});
    return seq;
}

GenResult ToyExecutorPolicy::generate(const std::string& context,
                                      std::span<const std::string> stop_markers, int max_tokens,
                                      uint64_t seed) {
    (void)stop_markers;
    (void)max_tokens;
    std::shared_lock lock(mu_);
    TurnState st = reconstruct(context);
    RngStream rng(seed);

    std::optional<int> action;
    std::optional<int> value;
    if (st.outputs_seen == 0 && !st.error_mode) {
        action = static_cast<int>(
            rng.sample_categorical(choice_probs(toy_tables::kAction, st.bucket)));
        if (*action == 0)
            value = static_cast<int>(
                rng.sample_categorical(choice_probs(toy_tables::kDirectValue, st.bucket)));
    } else if (st.error_mode) {
        value = static_cast<int>(
            rng.sample_categorical(choice_probs(toy_tables::kDirectValue, st.bucket)));
    } else if (st.current.op_count() == 0) {
        value = static_cast<int>(
            rng.sample_categorical(choice_probs(toy_tables::kToolValue, st.bucket)));
    }

    auto seq = expand_turn(st, action, value);
    GenResult out;
    for (auto& t : seq) {
        out.tokens.push_back(std::move(t.text));
        out.logprobs.push_back(t.logprob);
    }
    // a chunk ending in a boxed answer finishes the trajectory
    out.complete = !out.tokens.empty() && out.tokens.back() == kBoxedClose;
    return out;
}

ToyPolicyBase::TokenSeq ToyExecutorPolicy::derive(const std::string& context,
                                                  std::span<const std::string> tokens) const {
    TurnState st = reconstruct(context);
    if (tokens.empty()) throw UnreachableSequence("executor derive: empty token sequence");

    std::optional<int> action;
    std::optional<int> value;
    auto find_value_choice = [&](long long base, std::string_view emitted) {
        auto v = parse_ll(emitted);
        if (!v) throw UnreachableSequence("executor derive: non-numeric boxed value");
        for (size_t col = 0; col < kValueDeltas.size(); ++col)
            if (base + kValueDeltas[col] == *v) return static_cast<int>(col);
        throw UnreachableSequence("executor derive: boxed value outside the corruption set");
    };

    if (st.outputs_seen == 0 && !st.error_mode) {
        if (tokens[0] == kDirectPrefix) {
            action = 0;
            if (tokens.size() != 4)
                throw UnreachableSequence("executor derive: direct answer shape mismatch");
            value = find_value_choice(st.question.eval(), tokens[2]);
        } else if (tokens[0] == kToolPrefix) {
            action = 1;
        } else {
            throw UnreachableSequence("executor derive: unknown opening action token");
        }
    } else if (st.error_mode) {
        if (tokens.size() != 4)
            throw UnreachableSequence("executor derive: error answer shape mismatch");
        value = find_value_choice(st.current.eval(), tokens[2]);
    } else if (st.current.op_count() == 0) {
        if (tokens.size() != 4)
            throw UnreachableSequence("executor derive: tool answer shape mismatch");
        value = find_value_choice(
            st.current.nodes[static_cast<size_t>(st.current.root)].value, tokens[2]);
    }

    auto seq = expand_turn(st, action, value);
    if (seq.size() != tokens.size())
        throw UnreachableSequence("executor derive: token count mismatch");
    for (size_t i = 0; i < seq.size(); ++i)
        if (seq[i].text != tokens[i])
            throw UnreachableSequence("executor derive: token mismatch at index " +
                                      std::to_string(i));
    return seq;
}

}  // namespace agent0
