#include "agent0/driver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <thread>

#include "agent0/answers.hpp"
#include "agent0/metrics.hpp"
#include "agent0/parse.hpp"
#include "agent0/rng.hpp"
#include "agent0/sandbox_http.hpp"

namespace agent0 {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Prompt templates (mirrored by the editable assets under assets/prompts/)
// ---------------------------------------------------------------------------

std::string default_executor_prompt() {
    return "A conversation between User and Assistant. The user asks a question, and the "
           "Assistant solves it. The assistant first thinks about the reasoning process in the "
           "mind and then provides the user with the answer. User: Please integrate natural "
           "language reasoning with programs to solve the problem above. If you want to run any "
           "python code, write code in the python markdown code block and the execution will be "
           "appended in an output code block like ```python your code here``` ```output result "
           "here```. Please put your final answer within \\boxed{}.\n\n{problem}\n";
}

std::string default_curriculum_prompt() {
    return "You are an expert competition-math problem setter. FIRST, in your private "
           "scratch-pad, think step-by-step to design a brand-new, non-trivial problem. The "
           "problem could come from any field of mathematics, including but not limited to "
           "algebra, geometry, number theory, combinatorics, prealgebra, probability, "
           "statistics, and calculus. Aim for a difficulty such that fewer than 30% of advanced "
           "high-school students could solve it. Avoid re-using textbook cliches or famous "
           "contest problems.\nTHEN, without revealing any of your private thoughts, output "
           "exactly the following two blocks:\n\n<question>\n{The full problem statement on one "
           "or more lines}\n</question>\n\n\\boxed{final answer}\n\nDo NOT output anything "
           "else—no explanations, no extra markup.\n\nGenerate one new, challenging reasoning "
           "question now. Remember to format the output exactly as instructed.\n";
}

std::string default_judge_prompt() {
    return "You are a math answer checker.\n\nHi, there is an answer: {answer}, and the ground "
           "truth answer is: {response},\nplease check whether the answer is correct or not, "
           "and return the **only** Yes or No.\n";
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig::RunConfig() {
    // toy-scale optimizer defaults; the softmax tables need much larger steps
    // than an LLM fine-tune would use
    curriculum_optim.learning_rate = 0.5;
    curriculum_optim.group_size_g = curriculum_group;
    executor_optim.learning_rate = 0.5;
    executor_optim.group_size_g = executor_group;
    executor_prompt_template = default_executor_prompt();
    curriculum_prompt_template = default_curriculum_prompt();
}

void RunConfig::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("run config: " + what);
    };
    check(iterations >= 1, "iterations must be >= 1");
    check(k >= 2, "k must be >= 2 (voting needs a majority notion)");
    check(curriculum_batch >= 1 && curriculum_steps >= 1 && curriculum_epochs >= 1,
          "curriculum sizes must be >= 1");
    check(curriculum_group >= 2, "curriculum group size must be >= 2");
    check(curriculum_batch % curriculum_group == 0,
          "curriculum batch must be divisible by the group size");
    check(executor_group >= 2, "executor group size must be >= 2");
    check(executor_steps >= 1 && executor_tasks_per_step >= 1 && executor_epochs >= 1,
          "executor sizes must be >= 1");
    check(pool_size >= 1, "pool_size must be >= 1");
    check(heldout_size >= 1, "heldout_size must be >= 1");
    check(generator_type == "toy" || generator_type == "remote",
          "generator_type must be toy or remote");
    rewards.validate();
    curriculum_optim.validate();
    executor_optim.validate();
    limits.validate();
    toy.validate();
    check(frontier.lower >= 0 && frontier.upper <= 1 && frontier.lower <= frontier.upper,
          "frontier band must satisfy 0 <= lower <= upper <= 1");
    check(!sandbox.workers.empty(), "sandbox needs at least one worker");
}

int RunConfig::effective_parallel() const {
    if (parallel > 0) return parallel;
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

namespace {

json optim_to_json(const OptimConfig& o) {
    return json{{"epsilon_norm", o.epsilon_norm},
                {"epsilon_low", o.epsilon_low},
                {"epsilon_high_min", o.epsilon_high_min},
                {"epsilon_high_max", o.epsilon_high_max},
                {"kl_beta", o.kl_beta},
                {"group_size_g", o.group_size_g},
                {"learning_rate", o.learning_rate},
                {"ambiguity_scale_floor", o.ambiguity_scale_floor},
                {"weight_decay", o.weight_decay}};
}

OptimConfig optim_from_json(const json& j, OptimConfig base) {
    if (j.contains("epsilon_norm")) base.epsilon_norm = j["epsilon_norm"].get<double>();
    if (j.contains("epsilon_low")) base.epsilon_low = j["epsilon_low"].get<double>();
    if (j.contains("epsilon_high_min"))
        base.epsilon_high_min = j["epsilon_high_min"].get<double>();
    if (j.contains("epsilon_high_max"))
        base.epsilon_high_max = j["epsilon_high_max"].get<double>();
    if (j.contains("kl_beta")) base.kl_beta = j["kl_beta"].get<double>();
    if (j.contains("group_size_g")) base.group_size_g = j["group_size_g"].get<int>();
    if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("ambiguity_scale_floor"))
        base.ambiguity_scale_floor = j["ambiguity_scale_floor"].get<double>();
    if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"].get<double>();
    return base;
}

}  // namespace

json run_config_to_json(const RunConfig& cfg) {
    json workers = json::array();
    for (const auto& w : cfg.sandbox.workers)
        workers.push_back(json{{"type", w.type},
                               {"argv", w.argv},
                               {"host", w.host},
                               {"port", w.port},
                               {"endpoint_path", w.endpoint_path}});
    return json{
        {"seed", cfg.seed},
        {"iterations", cfg.iterations},
        {"k", cfg.k},
        {"curriculum",
         {{"batch_size", cfg.curriculum_batch},
          {"group_size", cfg.curriculum_group},
          {"steps", cfg.curriculum_steps},
          {"epochs", cfg.curriculum_epochs},
          {"optim", optim_to_json(cfg.curriculum_optim)}}},
        {"executor",
         {{"group_size", cfg.executor_group},
          {"steps", cfg.executor_steps},
          {"tasks_per_step", cfg.executor_tasks_per_step},
          {"epochs", cfg.executor_epochs},
          {"optim", optim_to_json(cfg.executor_optim)}}},
        {"pool_size", cfg.pool_size},
        {"heldout_size", cfg.heldout_size},
        {"parallel", cfg.parallel},
        {"rewards",
         {{"lambda_unc", cfg.rewards.lambda_unc},
          {"lambda_tool", cfg.rewards.lambda_tool},
          {"lambda_rep", cfg.rewards.lambda_rep},
          {"gamma", cfg.rewards.gamma},
          {"cap_c", cfg.rewards.cap_c},
          {"tau_bleu", cfg.rewards.tau_bleu}}},
        {"frontier", {{"lower", cfg.frontier.lower}, {"upper", cfg.frontier.upper}}},
        {"limits",
         {{"max_turns", cfg.limits.max_turns},
          {"max_total_tokens", cfg.limits.max_total_tokens},
          {"per_call_timeout_ms", cfg.limits.per_call_timeout_ms},
          {"max_answer_wait_tokens", cfg.limits.max_answer_wait_tokens}}},
        {"fences",
         {{"code_open", cfg.fences.code_open},
          {"output_open", cfg.fences.output_open},
          {"fence_close", cfg.fences.fence_close}}},
        {"toy",
         {{"max_ops", cfg.toy.max_ops},
          {"operators", cfg.toy.operators},
          {"n_buckets", cfg.toy.n_buckets},
          {"tool_call_budget", cfg.toy.tool_call_budget},
          {"init_p_tool", cfg.toy.init_p_tool},
          {"init_p_correct_direct", cfg.toy.init_p_correct_direct},
          {"init_p_correct_tool", cfg.toy.init_p_correct_tool}}},
        {"sandbox",
         {{"workers", workers},
          {"unhealthy_after_failures", cfg.sandbox.pool.unhealthy_after_failures},
          {"cooldown_ms", cfg.sandbox.pool.cooldown_ms},
          {"output_cap_bytes", cfg.sandbox.output_cap_bytes}}},
        {"generator", cfg.generator_type},
        {"remote",
         {{"host", cfg.remote.host},
          {"port", cfg.remote.port},
          {"completion_path", cfg.remote.completion_path},
          {"model", cfg.remote.model},
          {"auth_env", cfg.remote.auth_env},
          {"temperature", cfg.remote.temperature},
          {"top_p", cfg.remote.top_p},
          {"max_retries", cfg.remote.max_retries},
          {"backoff_initial_ms", cfg.remote.backoff_initial_ms}}},
        {"executor_prompt_template", cfg.executor_prompt_template},
        {"curriculum_prompt_template", cfg.curriculum_prompt_template}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    auto get = [&](const json& o, const char* key, auto& field) {
        if (o.contains(key)) field = o[key].get<std::decay_t<decltype(field)>>();
    };
    get(j, "seed", cfg.seed);
    get(j, "iterations", cfg.iterations);
    get(j, "k", cfg.k);
    if (j.contains("curriculum")) {
        const auto& c = j["curriculum"];
        get(c, "batch_size", cfg.curriculum_batch);
        get(c, "group_size", cfg.curriculum_group);
        get(c, "steps", cfg.curriculum_steps);
        get(c, "epochs", cfg.curriculum_epochs);
        if (c.contains("optim"))
            cfg.curriculum_optim = optim_from_json(c["optim"], cfg.curriculum_optim);
    }
    if (j.contains("executor")) {
        const auto& e = j["executor"];
        get(e, "group_size", cfg.executor_group);
        get(e, "steps", cfg.executor_steps);
        get(e, "tasks_per_step", cfg.executor_tasks_per_step);
        get(e, "epochs", cfg.executor_epochs);
        if (e.contains("optim"))
            cfg.executor_optim = optim_from_json(e["optim"], cfg.executor_optim);
    }
    get(j, "pool_size", cfg.pool_size);
    get(j, "heldout_size", cfg.heldout_size);
    get(j, "parallel", cfg.parallel);
    if (j.contains("rewards")) {
        const auto& r = j["rewards"];
        get(r, "lambda_unc", cfg.rewards.lambda_unc);
        get(r, "lambda_tool", cfg.rewards.lambda_tool);
        get(r, "lambda_rep", cfg.rewards.lambda_rep);
        get(r, "gamma", cfg.rewards.gamma);
        get(r, "cap_c", cfg.rewards.cap_c);
        get(r, "tau_bleu", cfg.rewards.tau_bleu);
    }
    if (j.contains("frontier")) {
        get(j["frontier"], "lower", cfg.frontier.lower);
        get(j["frontier"], "upper", cfg.frontier.upper);
    }
    if (j.contains("limits")) {
        const auto& l = j["limits"];
        get(l, "max_turns", cfg.limits.max_turns);
        get(l, "max_total_tokens", cfg.limits.max_total_tokens);
        get(l, "per_call_timeout_ms", cfg.limits.per_call_timeout_ms);
        get(l, "max_answer_wait_tokens", cfg.limits.max_answer_wait_tokens);
    }
    if (j.contains("fences")) {
        const auto& f = j["fences"];
        get(f, "code_open", cfg.fences.code_open);
        get(f, "output_open", cfg.fences.output_open);
        get(f, "fence_close", cfg.fences.fence_close);
    }
    if (j.contains("toy")) {
        const auto& t = j["toy"];
        get(t, "max_ops", cfg.toy.max_ops);
        get(t, "operators", cfg.toy.operators);
        get(t, "n_buckets", cfg.toy.n_buckets);
        get(t, "tool_call_budget", cfg.toy.tool_call_budget);
        get(t, "init_p_tool", cfg.toy.init_p_tool);
        get(t, "init_p_correct_direct", cfg.toy.init_p_correct_direct);
        get(t, "init_p_correct_tool", cfg.toy.init_p_correct_tool);
    }
    if (j.contains("sandbox")) {
        const auto& s = j["sandbox"];
        if (s.contains("workers")) {
            cfg.sandbox.workers.clear();
            for (const auto& w : s["workers"]) {
                WorkerSpec spec;
                get(w, "type", spec.type);
                get(w, "argv", spec.argv);
                get(w, "host", spec.host);
                get(w, "port", spec.port);
                get(w, "endpoint_path", spec.endpoint_path);
                cfg.sandbox.workers.push_back(std::move(spec));
            }
        }
        get(s, "unhealthy_after_failures", cfg.sandbox.pool.unhealthy_after_failures);
        get(s, "cooldown_ms", cfg.sandbox.pool.cooldown_ms);
        get(s, "output_cap_bytes", cfg.sandbox.output_cap_bytes);
    }
    if (j.contains("generator")) cfg.generator_type = j["generator"].get<std::string>();
    if (j.contains("remote")) {
        const auto& r = j["remote"];
        get(r, "host", cfg.remote.host);
        get(r, "port", cfg.remote.port);
        get(r, "completion_path", cfg.remote.completion_path);
        get(r, "model", cfg.remote.model);
        get(r, "auth_env", cfg.remote.auth_env);
        get(r, "temperature", cfg.remote.temperature);
        get(r, "top_p", cfg.remote.top_p);
        get(r, "max_retries", cfg.remote.max_retries);
        get(r, "backoff_initial_ms", cfg.remote.backoff_initial_ms);
    }
    get(j, "executor_prompt_template", cfg.executor_prompt_template);
    get(j, "curriculum_prompt_template", cfg.curriculum_prompt_template);
    return cfg;
}

void apply_config_override(json& config, const std::string& dotted_key,
                           const std::string& value) {
    json* node = &config;
    size_t start = 0;
    while (true) {
        auto dot = dotted_key.find('.', start);
        std::string key = dotted_key.substr(start, dot - start);
        if (key.empty()) throw ConfigError("empty key segment in override: " + dotted_key);
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

json params_to_json(const PolicyParams& p) {
    json tables = json::array();
    for (const auto& t : p)
        tables.push_back(
            json{{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"logits", t.logits}});
    return json{{"tables", tables}};
}

PolicyParams params_from_json(const json& j) {
    PolicyParams out;
    for (const auto& t : j.at("tables")) {
        ParamTable table;
        table.name = t.at("name").get<std::string>();
        table.rows = t.at("rows").get<size_t>();
        table.cols = t.at("cols").get<size_t>();
        table.logits = t.at("logits").get<std::vector<double>>();
        if (table.logits.size() != table.rows * table.cols)
            throw IoError("parameter table size mismatch for " + table.name);
        out.push_back(std::move(table));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

namespace {

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
    if (n <= 0) return;
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    auto body = [&] {
        while (true) {
            int i = next.fetch_add(1);
            if (i >= n) break;
            f(i);
        }
    };
    std::vector<std::future<void>> futures;
    futures.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        futures.push_back(std::async(std::launch::async, body));
    for (auto& fu : futures) fu.get();
}

std::vector<double> score_flat(ToyPolicyBase& policy, const FlatTokens& flat) {
    std::vector<double> lps(flat.old_logprobs.size(), 0.0);
    for (const auto& turn : flat.turns) {
        auto t = policy.logprob_of(turn.context, turn.tokens);
        for (size_t i = 0; i < t.size(); ++i) lps[turn.flat_token_offsets[i]] = t[i];
    }
    return lps;
}

void accumulate_grad(PolicyParams& total, ToyPolicyBase& policy, const FlatTokens& flat,
                     const std::vector<double>& dloss_dnew) {
    for (const auto& turn : flat.turns) {
        std::vector<double> weights(turn.tokens.size(), 0.0);
        bool any = false;
        for (size_t i = 0; i < turn.tokens.size(); ++i) {
            weights[i] = dloss_dnew[turn.flat_token_offsets[i]];
            any = any || weights[i] != 0.0;
        }
        if (!any) continue;
        PolicyParams g = policy.logprob_grad(turn.context, turn.tokens, weights);
        for (size_t t = 0; t < total.size(); ++t)
            for (size_t i = 0; i < total[t].logits.size(); ++i)
                total[t].logits[i] += g[t].logits[i];
    }
}

struct TrainableBatch {
    std::vector<TokenBatchEntry> entries;  // old/ref prefilled
    std::vector<FlatTokens> flats;
};

// epochs of (rescore under the current params, loss, gradient step); the
// sampled (old) and iteration-start (ref) log-probabilities stay fixed
struct EpochStats {
    double loss = 0.0;
    double kl = 0.0;
    ClipHistogram clip;
};

std::vector<EpochStats> train_epochs(ToyPolicyBase& policy, TrainableBatch& batch,
                                     const OptimConfig& optim, bool adpo, int epochs) {
    std::vector<EpochStats> out;
    for (int e = 0; e < epochs; ++e) {
        for (size_t i = 0; i < batch.entries.size(); ++i)
            batch.entries[i].new_logprobs = score_flat(policy, batch.flats[i]);
        LossResult loss = adpo ? adpo_loss(batch.entries, optim)
                               : grpo_loss(batch.entries, optim);
        PolicyParams grad = zeros_like(policy.params());
        for (size_t i = 0; i < batch.entries.size(); ++i)
            accumulate_grad(grad, policy, batch.flats[i], loss.dloss_dnew[i]);
        policy.set_params(
            sgd_step(policy.params(), grad, optim.learning_rate, optim.weight_decay));
        out.push_back(EpochStats{loss.loss, loss.kl, loss.clip});
    }
    return out;
}

}  // namespace

std::unique_ptr<SandboxClient> Driver::make_sandbox(const SandboxSpec& spec) {
    std::vector<std::unique_ptr<Worker>> workers;
    for (const auto& w : spec.workers) {
        if (w.type == "mock") {
            workers.push_back(std::make_unique<MockWorker>());
        } else if (w.type == "subprocess") {
            SubprocessConfig sc;
            sc.argv = w.argv;
            sc.output_cap_bytes = spec.output_cap_bytes;
            workers.push_back(std::make_unique<SubprocessWorker>(std::move(sc)));
        } else if (w.type == "http") {
            HttpWorkerConfig hc;
            hc.host = w.host;
            hc.port = w.port;
            hc.endpoint_path = w.endpoint_path;
            workers.push_back(std::make_unique<HttpWorker>(std::move(hc)));
        } else {
            throw ConfigError("unknown sandbox worker type: " + w.type);
        }
    }
    return std::make_unique<WorkerPool>(std::move(workers), spec.pool);
}

Driver::Driver(RunConfig cfg, fs::path run_dir) : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)) {
    cfg_.validate();
    if (cfg_.generator_type != "toy")
        throw ConfigError("the training loop needs a trainable generator; remote endpoints are "
                          "analysis-only");
    if (cfg_.executor_prompt_template.empty())
        cfg_.executor_prompt_template = default_executor_prompt();
    if (cfg_.curriculum_prompt_template.empty())
        cfg_.curriculum_prompt_template = default_curriculum_prompt();
    curriculum_ = std::make_unique<ToyCurriculumPolicy>(cfg_.toy);
    executor_ = std::make_unique<ToyExecutorPolicy>(cfg_.toy);
    sandbox_ = make_sandbox(cfg_.sandbox);
    datasets_.resize(static_cast<size_t>(cfg_.iterations));
}

fs::path Driver::iter_dir(int iteration) const {
    char buf[16];
    snprintf(buf, sizeof(buf), "iter_%03d", iteration);
    return run_dir_ / buf;
}

RolloutOptions Driver::rollout_options() const {
    RolloutOptions opts;
    opts.limits = cfg_.limits;
    opts.fences = cfg_.fences;
    opts.prompt_template = cfg_.executor_prompt_template;
    opts.parallel = 1;  // tasks fan out instead
    return opts;
}

const std::vector<FilteredEntry>& Driver::dataset(int iteration) const {
    return datasets_.at(static_cast<size_t>(iteration - 1));
}

// ------------------------------ curriculum phase ------------------------------

CurriculumPhaseStats Driver::curriculum_phase(int iteration) {
    CurriculumPhaseStats stats;
    fs::path dir = iter_dir(iteration);
    fs::create_directories(dir);

    CurriculumRewardConfig rew = cfg_.rewards;
    rew.batch_size_b = cfg_.curriculum_batch;

    OptimConfig optim = cfg_.curriculum_optim;
    optim.group_size_g = cfg_.curriculum_group;

    RolloutOptions ropts = rollout_options();
    const int b = cfg_.curriculum_batch;
    const int g = cfg_.curriculum_group;
    RngStream phase_stream = RngStream(cfg_.seed, "curriculum").child(uint64_t(iteration));

    CsvWriter metrics(dir / "curriculum_metrics.csv", optim_metrics_columns());
    CsvWriter reward_log(dir / "curriculum_rewards.csv",
                         {"step", "mean_composite", "format_fail_frac", "mean_p_hat",
                          "mean_r_tool"});
    JsonlWriter breakdowns(dir / "rewards.jsonl");
    JsonlWriter events(dir / "curriculum_events.jsonl");

    // iteration-start snapshot: the KL reference for the whole phase
    ToyCurriculumPolicy ref_scorer(cfg_.toy);
    ref_scorer.set_params(curriculum_->params());

    int consecutive_degenerate = 0;
    int global_step = 0;

    for (int step = 1; step <= cfg_.curriculum_steps; ++step) {
        RngStream step_stream = phase_stream.child(uint64_t(step));

        // --- sample a batch of tasks from the curriculum policy
        std::vector<Task> tasks(static_cast<size_t>(b));
        std::vector<Trajectory> task_trajs(static_cast<size_t>(b));
        RngStream sample_stream = step_stream.child("sample");
        for (int i = 0; i < b; ++i) {
            GenResult gen = curriculum_->generate(cfg_.curriculum_prompt_template, {}, 1 << 20,
                                                  sample_stream.child(uint64_t(i)).seed());
            std::string raw = gen.text();
            std::string id = "c" + std::to_string(iteration) + "_s" + std::to_string(step) +
                             "_" + std::to_string(i);
            auto parsed = parse_curriculum_output(raw, id, iteration);
            tasks[static_cast<size_t>(i)] =
                parsed ? parsed.value() : Task::invalid(id, raw, iteration);

            Trajectory traj;
            traj.task_id = id;
            Segment seg;
            seg.kind = SegmentKind::policy_text;
            seg.text = raw;
            seg.tokens = std::move(gen.tokens);
            seg.token_logprobs = std::move(gen.logprobs);
            traj.segments.push_back(std::move(seg));
            traj.final_answer = extract_final_answer(raw);
            traj.truncated = !traj.final_answer.has_value();
            task_trajs[static_cast<size_t>(i)] = std::move(traj);
        }

        // --- score every task with k frozen-executor rollouts
        std::vector<ConsistencyRecord> records(static_cast<size_t>(b));
        std::vector<double> r_unc(static_cast<size_t>(b), 0.0);
        std::vector<double> r_tool(static_cast<size_t>(b), 0.0);
        RngStream rollout_stream = step_stream.child("rollouts");
        parallel_for(b, cfg_.effective_parallel(), [&](int i) {
            auto trajs = rollout_task(tasks[static_cast<size_t>(i)], *executor_, *sandbox_,
                                      ropts, cfg_.k,
                                      rollout_stream.child(uint64_t(i)).seed());
            records[static_cast<size_t>(i)] =
                build_consistency_record(tasks[static_cast<size_t>(i)].id, trajs);
            std::vector<int> counts;
            counts.reserve(trajs.size());
            for (const auto& t : trajs) counts.push_back(t.tool_call_count);
            r_unc[static_cast<size_t>(i)] =
                uncertainty_reward(records[static_cast<size_t>(i)].p_hat);
            r_tool[static_cast<size_t>(i)] = tool_use_reward_from_counts(counts, rew);
        });
        stats.rollouts_executed += static_cast<long>(b) * cfg_.k;

        // --- repetition penalty over the whole batch
        auto cluster_ids = cluster_by_similarity(tasks, rew.tau_bleu);
        std::vector<int> cluster_sizes(static_cast<size_t>(b), 0);
        for (int id : cluster_ids) ++cluster_sizes[static_cast<size_t>(id)];

        std::vector<double> composite(static_cast<size_t>(b));
        int format_fails = 0;
        double mean_phat = 0.0, mean_rtool = 0.0, mean_comp = 0.0;
        for (int i = 0; i < b; ++i) {
            const Task& t = tasks[static_cast<size_t>(i)];
            double rep = repetition_penalty(
                cluster_sizes[static_cast<size_t>(cluster_ids[static_cast<size_t>(i)])], rew);
            RewardBreakdown rb;
            rb.task_id = t.id;
            rb.format_ok = t.format_valid;
            rb.r_unc = r_unc[static_cast<size_t>(i)];
            rb.r_tool = r_tool[static_cast<size_t>(i)];
            rb.r_rep = rep;
            rb.composite = composite_curriculum_reward(rb.format_ok, rb.r_unc, rb.r_tool, rb.r_rep,
                                                       rew);
            composite[static_cast<size_t>(i)] = rb.composite;
            breakdowns.write_line(to_jsonl_line(to_json(rb)));
            format_fails += t.format_valid ? 0 : 1;
            mean_phat += records[static_cast<size_t>(i)].p_hat;
            mean_rtool += rb.r_tool;
            mean_comp += rb.composite;
        }
        double fail_frac = static_cast<double>(format_fails) / b;
        stats.mean_composite_per_step.push_back(mean_comp / b);
        stats.format_fail_frac_per_step.push_back(fail_frac);
        reward_log.write_row({std::to_string(step), fmt_double(mean_comp / b),
                              fmt_double(fail_frac), fmt_double(mean_phat / b),
                              fmt_double(mean_rtool / b)});

        consecutive_degenerate = fail_frac > 0.5 ? consecutive_degenerate + 1 : 0;
        if (consecutive_degenerate >= 3)
            throw DegenerateCurriculum(
                "more than half of the curriculum batch failed the format check for 3 "
                "consecutive steps");

        // --- grouped advantages over R_C
        TrainableBatch batch;
        batch.entries.resize(static_cast<size_t>(b));
        batch.flats.resize(static_cast<size_t>(b));
        for (int start = 0; start < b; start += g) {
            std::span<const double> group(composite.data() + start, static_cast<size_t>(g));
            auto adv = normalize_advantages(group, optim.epsilon_norm);
            for (int j = 0; j < g; ++j) {
                auto& e = batch.entries[static_cast<size_t>(start + j)];
                e.advantage = adv[static_cast<size_t>(j)];
                e.eps_low = optim.epsilon_low;
                e.eps_high = optim.epsilon_low;
            }
        }
        for (int i = 0; i < b; ++i) {
            auto& e = batch.entries[static_cast<size_t>(i)];
            batch.flats[static_cast<size_t>(i)] = flatten_for_scoring(
                cfg_.curriculum_prompt_template, task_trajs[static_cast<size_t>(i)],
                cfg_.fences);
            e.old_logprobs = batch.flats[static_cast<size_t>(i)].old_logprobs;
            e.ref_logprobs = score_flat(ref_scorer, batch.flats[static_cast<size_t>(i)]);
            e.mask = batch.flats[static_cast<size_t>(i)].mask;
        }

        auto epoch_stats =
            train_epochs(*curriculum_, batch, optim, /*adpo=*/false, cfg_.curriculum_epochs);
        for (const auto& es : epoch_stats)
            metrics.write_row(optim_metrics_row(++global_step, es.loss, es.kl, es.clip));

        events.write_line(to_jsonl_line(json{{"phase", "curriculum"},
                                             {"iteration", iteration},
                                             {"step", step},
                                             {"rollouts", b * cfg_.k},
                                             {"format_fail_frac", fail_frac},
                                             {"mean_composite", mean_comp / b}}));
    }
    return stats;
}

// ------------------------------ executor phase ------------------------------

ExecutorPhaseStats Driver::executor_phase(int iteration) {
    ExecutorPhaseStats stats;
    fs::path dir = iter_dir(iteration);
    fs::create_directories(dir);

    OptimConfig optim = cfg_.executor_optim;
    optim.group_size_g = cfg_.executor_group;
    RolloutOptions ropts = rollout_options();
    RngStream phase_stream = RngStream(cfg_.seed, "executor").child(uint64_t(iteration));

    // --- generate the candidate pool from the frozen curriculum
    RngStream pool_stream = phase_stream.child("pool");
    std::vector<Task> pool_tasks;
    pool_tasks.reserve(static_cast<size_t>(cfg_.pool_size));
    for (int i = 0; i < cfg_.pool_size; ++i) {
        GenResult gen = curriculum_->generate(cfg_.curriculum_prompt_template, {}, 1 << 20,
                                              pool_stream.child(uint64_t(i)).seed());
        std::string id = "p" + std::to_string(iteration) + "_" + std::to_string(i);
        auto parsed = parse_curriculum_output(gen.text(), id, iteration);
        if (parsed) pool_tasks.push_back(parsed.value());
    }

    // --- self-consistency scoring of the pool
    std::vector<ConsistencyRecord> pool_records(pool_tasks.size());
    RngStream score_stream = phase_stream.child("score");
    parallel_for(static_cast<int>(pool_tasks.size()), cfg_.effective_parallel(), [&](int i) {
        auto trajs = rollout_task(pool_tasks[static_cast<size_t>(i)], *executor_, *sandbox_,
                                  ropts, cfg_.k, score_stream.child(uint64_t(i)).seed());
        pool_records[static_cast<size_t>(i)] =
            build_consistency_record(pool_tasks[static_cast<size_t>(i)].id, trajs);
    });
    stats.rollouts_executed += static_cast<long>(pool_tasks.size()) * cfg_.k;

    {
        JsonlWriter pool_log(dir / "pool.jsonl");
        for (size_t i = 0; i < pool_tasks.size(); ++i)
            pool_log.write_line(to_jsonl_line(json{{"task", to_json(pool_tasks[i])},
                                                   {"record", to_json(pool_records[i])}}));
    }

    std::vector<std::pair<Task, ConsistencyRecord>> pool;
    pool.reserve(pool_tasks.size());
    for (size_t i = 0; i < pool_tasks.size(); ++i)
        pool.emplace_back(pool_tasks[i], pool_records[i]);
    FilteredDataset dataset = filter_frontier(pool, cfg_.frontier, iteration);

    {
        JsonlWriter dataset_log(dir / "dataset.jsonl");
        for (const auto& e : dataset.entries)
            dataset_log.write_line(to_jsonl_line(json{{"task", to_json(e.task)},
                                                      {"p_hat", e.p_hat},
                                                      {"pseudo_label", e.pseudo_label}}));
    }

    if (dataset.entries.empty())
        throw EmptyFrontier("no tasks inside the self-consistency band [" +
                            fmt_double(cfg_.frontier.lower) + ", " +
                            fmt_double(cfg_.frontier.upper) +
                            "]; consider widening the frontier band");
    stats.dataset_size = dataset.entries.size();
    datasets_[static_cast<size_t>(iteration - 1)] = dataset.entries;

    CsvWriter metrics(dir / "executor_metrics.csv", optim_metrics_columns());
    CsvWriter step_log(dir / "executor_steps.csv", {"step", "mean_reward", "mean_p_hat"});
    JsonlWriter events(dir / "executor_events.jsonl");

    // iteration-start snapshot: the KL reference for the whole phase
    ToyExecutorPolicy ref_scorer(cfg_.toy);
    ref_scorer.set_params(executor_->params());

    int global_step = 0;
    const int tasks_per_step = cfg_.executor_tasks_per_step;
    const int g = cfg_.executor_group;

    for (int step = 1; step <= cfg_.executor_steps; ++step) {
        RngStream step_stream = phase_stream.child("step").child(uint64_t(step));
        RngStream draw_stream = step_stream.child("draw");

        std::vector<const FilteredEntry*> drawn;
        drawn.reserve(static_cast<size_t>(tasks_per_step));
        for (int j = 0; j < tasks_per_step; ++j) {
            auto idx = static_cast<size_t>(
                draw_stream.next_int(0, static_cast<int64_t>(dataset.entries.size()) - 1));
            drawn.push_back(&dataset.entries[idx]);
        }

        TrainableBatch batch;
        batch.entries.resize(drawn.size() * static_cast<size_t>(g));
        batch.flats.resize(batch.entries.size());
        std::vector<std::vector<Trajectory>> all_trajs(drawn.size());

        RngStream rollout_stream = step_stream.child("rollouts");
        parallel_for(static_cast<int>(drawn.size()), cfg_.effective_parallel(), [&](int j) {
            all_trajs[static_cast<size_t>(j)] =
                rollout_task(drawn[static_cast<size_t>(j)]->task, *executor_, *sandbox_, ropts,
                             g, rollout_stream.child(uint64_t(j)).seed());
        });
        stats.rollouts_executed += static_cast<long>(drawn.size()) * g;

        double mean_reward = 0.0, mean_phat = 0.0;
        std::string initial_ctx_template = cfg_.executor_prompt_template;
        for (size_t j = 0; j < drawn.size(); ++j) {
            const FilteredEntry& entry = *drawn[j];
            auto rewards = assign_terminal_rewards(all_trajs[j], entry.pseudo_label);
            auto adv = normalize_advantages(rewards, optim.epsilon_norm);
            double scale = ambiguity_scale(entry.p_hat, optim);
            double eps_high = dynamic_epsilon_high(entry.p_hat, optim);
            std::string init_ctx = render_rollout_prompt(ropts, entry.task);
            for (int i = 0; i < g; ++i) {
                size_t flat_idx = j * static_cast<size_t>(g) + static_cast<size_t>(i);
                auto& e = batch.entries[flat_idx];
                e.advantage = adv[static_cast<size_t>(i)] * scale;
                e.eps_low = optim.epsilon_low;
                e.eps_high = eps_high;
                batch.flats[flat_idx] = flatten_for_scoring(
                    init_ctx, all_trajs[j][static_cast<size_t>(i)], cfg_.fences);
                e.old_logprobs = batch.flats[flat_idx].old_logprobs;
                e.ref_logprobs = score_flat(ref_scorer, batch.flats[flat_idx]);
                e.mask = batch.flats[flat_idx].mask;
                mean_reward += rewards[static_cast<size_t>(i)];
            }
            mean_phat += entry.p_hat;
        }
        mean_reward /= static_cast<double>(batch.entries.size());
        mean_phat /= static_cast<double>(drawn.size());
        stats.mean_reward_per_step.push_back(mean_reward);

        auto epoch_stats =
            train_epochs(*executor_, batch, optim, /*adpo=*/true, cfg_.executor_epochs);
        for (const auto& es : epoch_stats) {
            metrics.write_row(optim_metrics_row(++global_step, es.loss, es.kl, es.clip));
            stats.clip.merge(es.clip);
        }

        if (step == cfg_.executor_steps) {
            // final-step batch with post-update logprobs, for offline clip analysis
            JsonlWriter last_batch(dir / "last_batch.jsonl");
            for (size_t i = 0; i < batch.entries.size(); ++i) {
                auto& e = batch.entries[i];
                e.new_logprobs = score_flat(*executor_, batch.flats[i]);
                last_batch.write_line(to_jsonl_line(
                    json{{"advantage", e.advantage},
                         {"eps_low", e.eps_low},
                         {"eps_high", e.eps_high},
                         {"old_logprobs", e.old_logprobs},
                         {"new_logprobs", e.new_logprobs},
                         {"mask", std::vector<int>(e.mask.begin(), e.mask.end())}}));
            }
        }
        step_log.write_row(
            {std::to_string(step), fmt_double(mean_reward), fmt_double(mean_phat)});
        events.write_line(to_jsonl_line(json{{"phase", "executor"},
                                             {"iteration", iteration},
                                             {"step", step},
                                             {"rollouts", static_cast<int>(drawn.size()) * g},
                                             {"mean_reward", mean_reward}}));
    }

    // per-iteration up-clip histogram
    CsvWriter clip_csv(dir / "clip_hist.csv", {"bin", "count"});
    for (size_t i = 0; i < ClipHistogram::kBins; ++i)
        clip_csv.write_row(
            {std::to_string(i), std::to_string(stats.clip.up_clip_old_prob_bins[i])});

    return stats;
}

// ------------------------------ evaluation ------------------------------

std::vector<Task> Driver::sample_heldout_tasks() const {
    // fixed difficulty mix from the base grammar, independent of training
    ToyCurriculumPolicy base(cfg_.toy);
    RngStream stream(cfg_.seed, "heldout_tasks");
    std::vector<Task> tasks;
    tasks.reserve(static_cast<size_t>(cfg_.heldout_size));
    for (int i = 0; i < cfg_.heldout_size; ++i) {
        GenResult gen = base.generate(cfg_.curriculum_prompt_template, {}, 1 << 20,
                                      stream.child(uint64_t(i)).seed());
        auto parsed =
            parse_curriculum_output(gen.text(), "h" + std::to_string(i), 0);
        if (parsed) tasks.push_back(parsed.value());
    }
    return tasks;
}

HeldoutResult Driver::evaluate_heldout(ToyExecutorPolicy& executor, uint64_t salt) {
    auto tasks = sample_heldout_tasks();
    RolloutOptions ropts = rollout_options();
    RngStream stream = RngStream(cfg_.seed, "heldout_eval").child(salt);
    std::vector<int> correct(tasks.size(), 0);
    std::vector<int> calls(tasks.size(), 0);
    parallel_for(static_cast<int>(tasks.size()), cfg_.effective_parallel(), [&](int i) {
        Trajectory traj = rollout_one(tasks[static_cast<size_t>(i)], executor, *sandbox_, ropts,
                                      stream.child(uint64_t(i)).seed());
        auto exact = toy_exact_answer(tasks[static_cast<size_t>(i)].question);
        bool ok = exact && traj.final_answer &&
                  answers_equal(*traj.final_answer, std::to_string(*exact));
        correct[static_cast<size_t>(i)] = ok ? 1 : 0;
        calls[static_cast<size_t>(i)] = traj.tool_call_count;
    });
    HeldoutResult res;
    for (size_t i = 0; i < tasks.size(); ++i) {
        res.accuracy += correct[i];
        res.mean_tool_calls += calls[i];
    }
    res.accuracy /= static_cast<double>(tasks.size());
    res.mean_tool_calls /= static_cast<double>(tasks.size());
    return res;
}

// ------------------------------ run loop ------------------------------

void Driver::persist_iteration(int iteration) {
    fs::path dir = iter_dir(iteration);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "curriculum_params.json");
        f << params_to_json(curriculum_->params()).dump(2) << "\n";
    }
    {
        std::ofstream f(dir / "executor_params.json");
        f << params_to_json(executor_->params()).dump(2) << "\n";
    }
    json state{{"completed_iterations", iteration}, {"seed", cfg_.seed}};
    std::ofstream f(run_dir_ / "state.json");
    f << state.dump(2) << "\n";
}

void Driver::load_iteration(int iteration) {
    fs::path dir = iter_dir(iteration);
    {
        std::ifstream f(dir / "curriculum_params.json");
        if (!f) throw IoError("missing snapshot: " + (dir / "curriculum_params.json").string());
        curriculum_->set_params(params_from_json(json::parse(f)));
    }
    {
        std::ifstream f(dir / "executor_params.json");
        if (!f) throw IoError("missing snapshot: " + (dir / "executor_params.json").string());
        executor_->set_params(params_from_json(json::parse(f)));
    }
    // reload D^(t)
    std::ifstream ds(dir / "dataset.jsonl");
    if (!ds) throw IoError("missing dataset: " + (dir / "dataset.jsonl").string());
    std::vector<FilteredEntry> entries;
    std::string line;
    while (std::getline(ds, line)) {
        if (trim_view(line).empty()) continue;
        json j = json::parse(line);
        entries.push_back(FilteredEntry{task_from_json(j.at("task")), j.at("p_hat").get<double>(),
                                        j.at("pseudo_label").get<std::string>()});
    }
    datasets_[static_cast<size_t>(iteration - 1)] = std::move(entries);
    if (iteration == 1) {
        std::ifstream f(dir / "executor_params.json");
        executor_iter1_snapshot_ = params_from_json(json::parse(f));
    }
}

void Driver::write_report(const fs::path& path) {
    if (!executor_iter1_snapshot_)
        throw Error("internal", "difficulty report needs the iteration-1 executor snapshot");
    ToyExecutorPolicy scorer(cfg_.toy);
    scorer.set_params(*executor_iter1_snapshot_);
    RolloutOptions ropts = rollout_options();

    CsvWriter report(path,
                     {"iteration", "pass_rate_iter1_executor", "mean_tool_calls",
                      "dataset_size"});
    for (int t = 1; t <= cfg_.iterations; ++t) {
        const auto& entries = datasets_[static_cast<size_t>(t - 1)];
        RngStream stream = RngStream(cfg_.seed, "report").child(uint64_t(t));
        std::vector<int> pass(entries.size(), 0);
        std::vector<int> calls(entries.size(), 0);
        parallel_for(static_cast<int>(entries.size()), cfg_.effective_parallel(), [&](int i) {
            const auto& entry = entries[static_cast<size_t>(i)];
            Trajectory traj = rollout_one(entry.task, scorer, *sandbox_, ropts,
                                          stream.child(uint64_t(i)).seed());
            auto exact = toy_exact_answer(entry.task.question);
            pass[static_cast<size_t>(i)] = exact && traj.final_answer &&
                                           answers_equal(*traj.final_answer,
                                                         std::to_string(*exact));
            calls[static_cast<size_t>(i)] = traj.tool_call_count;
        });
        double pass_rate = 0.0, mean_calls = 0.0;
        for (size_t i = 0; i < entries.size(); ++i) {
            pass_rate += pass[i];
            mean_calls += calls[i];
        }
        if (!entries.empty()) {
            pass_rate /= static_cast<double>(entries.size());
            mean_calls /= static_cast<double>(entries.size());
        }
        report.write_row({std::to_string(t), fmt_double(pass_rate), fmt_double(mean_calls),
                          std::to_string(entries.size())});
    }
}

void Driver::write_heldout_table(const fs::path& path) {
    CsvWriter table(path, {"iteration", "accuracy", "mean_tool_calls"});
    for (size_t i = 0; i < heldout_.size(); ++i)
        table.write_row({std::to_string(i), fmt_double(heldout_[i].accuracy),
                         fmt_double(heldout_[i].mean_tool_calls)});
}

RunState Driver::run() {
    fs::create_directories(run_dir_);
    json cfg_json = run_config_to_json(cfg_);

    int start_iteration = 1;
    fs::path state_path = run_dir_ / "state.json";
    if (fs::exists(state_path)) {
        std::ifstream sf(state_path);
        json state = json::parse(sf);
        if (state.at("seed").get<uint64_t>() != cfg_.seed)
            throw ConfigError("run directory was produced with a different seed");
        std::ifstream cf(run_dir_ / "config.json");
        if (cf) {
            json persisted = json::parse(cf);
            if (persisted != cfg_json)
                throw ConfigError("run directory was produced with a different config; "
                                  "resuming would diverge");
        }
        int completed = state.at("completed_iterations").get<int>();
        for (int t = 1; t <= completed; ++t) load_iteration(t);
        start_iteration = completed + 1;
    } else {
        std::ofstream cf(run_dir_ / "config.json");
        cf << cfg_json.dump(2) << "\n";
    }

    // pre-training baseline for the held-out table
    {
        ToyExecutorPolicy base(cfg_.toy);
        heldout_.clear();
        heldout_.push_back(evaluate_heldout(base, 0));
    }
    for (int t = 1; t < start_iteration; ++t) {
        ToyExecutorPolicy snap(cfg_.toy);
        std::ifstream f(iter_dir(t) / "executor_params.json");
        snap.set_params(params_from_json(json::parse(f)));
        heldout_.push_back(evaluate_heldout(snap, static_cast<uint64_t>(t)));
    }

    for (int t = start_iteration; t <= cfg_.iterations; ++t) {
        curriculum_phase(t);
        executor_phase(t);
        if (t == 1) executor_iter1_snapshot_ = executor_->params();
        heldout_.push_back(evaluate_heldout(*executor_, static_cast<uint64_t>(t)));
        {
            CsvWriter iter_heldout(iter_dir(t) / "heldout.csv",
                                   {"iteration", "accuracy", "mean_tool_calls"});
            iter_heldout.write_row({std::to_string(t),
                                    fmt_double(heldout_.back().accuracy),
                                    fmt_double(heldout_.back().mean_tool_calls)});
        }
        persist_iteration(t);
    }

    write_heldout_table(run_dir_ / "heldout.csv");
    write_report(run_dir_ / "report.csv");

    RunState state;
    state.completed_iterations = cfg_.iterations;
    state.seed = cfg_.seed;
    state.run_dir = run_dir_;
    return state;
}

}  // namespace agent0
