#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "agent0/answers.hpp"
#include "agent0/consistency.hpp"
#include "agent0/driver.hpp"
#include "agent0/metrics.hpp"
#include "agent0/parse.hpp"
#include "agent0/remote.hpp"
#include "agent0/rng.hpp"

namespace {

using namespace agent0;

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open file: " + path);
    return json::parse(f);
}

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;

    RunConfig resolve() const {
        json j = config_path.empty() ? json::object() : load_json_file(config_path);
        for (const auto& kv : overrides) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got: " + kv);
            apply_config_override(j, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) j["seed"] = *seed;
        RunConfig cfg = run_config_from_json(j);
        cfg.validate();
        return cfg;
    }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args, bool seed_required) {
    cmd->add_option("--config", args.config_path, "Run config JSON file");
    cmd->add_option("--set", args.overrides,
                    "Override a config key by dotted path, e.g. --set rewards.lambda_tool=0.7");
    auto* seed_opt = cmd->add_option_function<uint64_t>(
        "--seed", [&args](uint64_t s) { args.seed = s; }, "Root seed");
    if (seed_required) seed_opt->required();
}

std::unique_ptr<Generator> make_executor_generator(const RunConfig& cfg) {
    if (cfg.generator_type == "remote")
        return std::make_unique<RemoteGenerator>(cfg.remote);
    return std::make_unique<ToyExecutorPolicy>(cfg.toy);
}

std::vector<Task> read_task_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open task file: " + path);
    std::vector<Task> tasks;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
        if (trim_view(line).empty()) continue;
        json j = json::parse(line);
        if (j.contains("task")) j = j["task"];
        if (j.contains("id")) {
            tasks.push_back(task_from_json(j));
        } else if (j.contains("prompt_text")) {
            std::string raw = j["prompt_text"].get<std::string>();
            auto parsed = parse_curriculum_output(raw, "f" + std::to_string(n));
            tasks.push_back(parsed ? parsed.value()
                                   : Task::invalid("f" + std::to_string(n), raw, 0));
        } else {
            throw IoError("task line " + std::to_string(n) +
                          ": expected a task record or prompt_text field");
        }
        ++n;
    }
    return tasks;
}

void print_trajectory(std::ostream& os, const Trajectory& traj) {
    os << "task: " << traj.task_id << "\n";
    for (const auto& seg : traj.segments) {
        os << "--- " << segment_kind_name(seg.kind) << " ---\n" << seg.text << "\n";
    }
    os << "=== final_answer: " << (traj.final_answer ? *traj.final_answer : "(none)")
       << "  tool_calls: " << traj.tool_call_count << "  truncated: " << std::boolalpha
       << traj.truncated << "\n";
}

int cmd_run(const ConfigArgs& args, const std::string& out_dir) {
    RunConfig cfg = args.resolve();
    Driver driver(cfg, out_dir);
    RunState state = driver.run();
    std::cout << "run complete: " << state.completed_iterations << " iterations in "
              << state.run_dir.string() << "\n";
    return 0;
}

int cmd_rollout(const ConfigArgs& args, const std::string& task_text,
                const std::string& task_file, int k, bool as_json) {
    RunConfig cfg = args.resolve();
    std::vector<Task> tasks;
    if (!task_text.empty()) {
        auto parsed = parse_curriculum_output(task_text, "cli0");
        if (parsed) {
            tasks.push_back(parsed.value());
        } else {
            Task t;
            t.id = "cli0";
            t.prompt_text = task_text;
            t.question = task_text;
            t.format_valid = true;
            tasks.push_back(std::move(t));
        }
    } else if (!task_file.empty()) {
        tasks = read_task_file(task_file);
    } else {
        throw ConfigError("rollout needs --task or --task-file");
    }

    auto generator = make_executor_generator(cfg);
    auto sandbox = Driver::make_sandbox(cfg.sandbox);
    RolloutOptions opts;
    opts.limits = cfg.limits;
    opts.fences = cfg.fences;
    opts.prompt_template = cfg.executor_prompt_template;
    opts.parallel = 1;

    RngStream stream(cfg.seed, "cli_rollout");
    for (size_t i = 0; i < tasks.size(); ++i) {
        auto trajs = rollout_task(tasks[i], *generator, *sandbox, opts, k,
                                  stream.child(i).seed());
        for (const auto& traj : trajs) {
            if (as_json)
                std::cout << to_jsonl_line(to_json(traj));
            else
                print_trajectory(std::cout, traj);
        }
    }
    return 0;
}

int cmd_rewards(const ConfigArgs& args, const std::string& tasks_path,
                const std::string& out_path) {
    RunConfig cfg = args.resolve();
    auto tasks = read_task_file(tasks_path);
    if (tasks.empty()) throw EmptyInput("task file holds no tasks");

    auto generator = make_executor_generator(cfg);
    auto sandbox = Driver::make_sandbox(cfg.sandbox);
    RolloutOptions opts;
    opts.limits = cfg.limits;
    opts.fences = cfg.fences;
    opts.prompt_template = cfg.executor_prompt_template;

    CurriculumRewardConfig rew = cfg.rewards;
    rew.batch_size_b = static_cast<int>(tasks.size());

    RngStream stream(cfg.seed, "cli_rewards");
    auto cluster_ids = cluster_by_similarity(tasks, rew.tau_bleu);
    std::vector<int> sizes(tasks.size(), 0);
    for (int id : cluster_ids) ++sizes[static_cast<size_t>(id)];

    std::ofstream out_file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
        out_file.open(out_path);
        if (!out_file) throw IoError("cannot open output file: " + out_path);
        os = &out_file;
    }

    for (size_t i = 0; i < tasks.size(); ++i) {
        const Task& t = tasks[i];
        RewardBreakdown rb;
        rb.task_id = t.id;
        rb.format_ok = t.format_valid;
        auto trajs = rollout_task(t, *generator, *sandbox, opts, cfg.k, stream.child(i).seed());
        auto rec = build_consistency_record(t.id, trajs);
        std::vector<int> counts;
        for (const auto& tr : trajs) counts.push_back(tr.tool_call_count);
        rb.r_unc = uncertainty_reward(rec.p_hat);
        rb.r_tool = tool_use_reward_from_counts(counts, rew);
        rb.r_rep = repetition_penalty(sizes[static_cast<size_t>(cluster_ids[i])], rew);
        rb.composite = composite_curriculum_reward(rb.format_ok, rb.r_unc, rb.r_tool, rb.r_rep,
                                                   rew);
        *os << to_jsonl_line(to_json(rb));
    }
    return 0;
}

int cmd_filter(const std::string& in_path, const std::string& out_path, double lower,
               double upper, std::optional<double> delta) {
    FrontierBand band{lower, upper};
    if (delta) band = FrontierBand::from_delta(*delta);

    std::ifstream in(in_path);
    if (!in) throw IoError("cannot open pool file: " + in_path);
    std::ofstream out_file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
        out_file.open(out_path);
        if (!out_file) throw IoError("cannot open output file: " + out_path);
        os = &out_file;
    }

    std::vector<std::pair<Task, ConsistencyRecord>> pool;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_view(line).empty()) continue;
        json j = json::parse(line);
        Task task = task_from_json(j.at("task"));
        ConsistencyRecord rec;
        if (j.contains("record")) {
            rec = consistency_record_from_json(j.at("record"));
        } else {
            rec.task_id = task.id;
            rec.p_hat = j.at("p_hat").get<double>();
            if (j.contains("pseudo_label") && !j.at("pseudo_label").is_null())
                rec.majority_answer = j.at("pseudo_label").get<std::string>();
        }
        pool.emplace_back(std::move(task), std::move(rec));
    }
    FilteredDataset ds = filter_frontier(pool, band);
    for (const auto& e : ds.entries)
        *os << to_jsonl_line(json{{"task", to_json(e.task)},
                                  {"p_hat", e.p_hat},
                                  {"pseudo_label", e.pseudo_label}});
    std::cerr << "retained " << ds.entries.size() << " of " << pool.size() << " tasks\n";
    return 0;
}

int cmd_clipstats(const std::string& batch_path) {
    std::ifstream in(batch_path);
    if (!in) throw IoError("cannot open batch file: " + batch_path);
    std::vector<TokenBatchEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_view(line).empty()) continue;
        json j = json::parse(line);
        TokenBatchEntry e;
        e.advantage = j.at("advantage").get<double>();
        e.eps_low = j.at("eps_low").get<double>();
        e.eps_high = j.at("eps_high").get<double>();
        e.old_logprobs = j.at("old_logprobs").get<std::vector<double>>();
        e.new_logprobs = j.at("new_logprobs").get<std::vector<double>>();
        if (j.contains("mask")) {
            for (int m : j.at("mask").get<std::vector<int>>())
                e.mask.push_back(static_cast<uint8_t>(m));
        } else {
            e.mask.assign(e.new_logprobs.size(), 1);
        }
        e.ref_logprobs = e.old_logprobs;
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw EmptyInput("batch file holds no entries");
    OptimConfig cfg;
    ClipHistogram hist = clip_statistics(entries, cfg);
    std::cout << "bin_low,bin_high,count\n";
    for (size_t i = 0; i < ClipHistogram::kBins; ++i) {
        double lo = static_cast<double>(i) / ClipHistogram::kBins;
        double hi = static_cast<double>(i + 1) / ClipHistogram::kBins;
        std::cout << fmt_double(lo) << "," << fmt_double(hi) << ","
                  << hist.up_clip_old_prob_bins[i] << "\n";
    }
    std::cout << "# up_clipped=" << hist.up_clipped << " down_clipped=" << hist.down_clipped
              << " total_tokens=" << hist.total_tokens << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    json cfg_json = load_json_file(run_dir + "/config.json");
    RunConfig cfg = run_config_from_json(cfg_json);
    Driver driver(cfg, run_dir);
    driver.run();  // resumes (everything already complete) and rewrites the report
    std::ifstream report(run_dir + "/report.csv");
    if (!report) throw IoError("report.csv missing after regeneration");
    std::cout << report.rdbuf();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-evolutionary curriculum/executor training loop with tool-integrated "
                 "rollouts"};
    app.require_subcommand(1);

    ConfigArgs run_args, rollout_args, rewards_args;
    std::string out_dir = "runs/run";
    std::string task_text, task_file, tasks_path, rewards_out;
    std::string filter_in, filter_out, batch_path, report_dir;
    double lower = 0.3, upper = 0.8;
    std::optional<double> delta;
    int rollout_k = 1;
    bool rollout_json = false;

    auto* run = app.add_subcommand("run", "Run the full co-evolution loop from a config");
    add_config_options(run, run_args, /*seed_required=*/true);
    run->add_option("--out", out_dir, "Run directory");

    auto* rollout = app.add_subcommand("rollout", "Roll out one task and print the trajectory");
    add_config_options(rollout, rollout_args, false);
    rollout->add_option("--task", task_text, "Task text (curriculum output or plain question)");
    rollout->add_option("--task-file", task_file, "JSONL file of tasks");
    rollout->add_option("--k", rollout_k, "Trajectories per task");
    rollout->add_flag("--json", rollout_json, "Emit trajectories as JSONL");

    auto* rewards = app.add_subcommand("rewards", "Score a task file offline");
    add_config_options(rewards, rewards_args, false);
    rewards->add_option("--tasks", tasks_path, "JSONL file of tasks")->required();
    rewards->add_option("--out", rewards_out, "Output file (default stdout)");

    auto* filter = app.add_subcommand("filter", "Apply the self-consistency band to a pool");
    filter->add_option("--in", filter_in, "Scored pool JSONL")->required();
    filter->add_option("--out", filter_out, "Output file (default stdout)");
    filter->add_option("--lower", lower, "Band lower bound");
    filter->add_option("--upper", upper, "Band upper bound");
    filter->add_option_function<double>(
        "--delta", [&delta](double d) { delta = d; },
        "Symmetric band |p-0.5| <= delta (overrides --lower/--upper)");

    auto* clipstats = app.add_subcommand("clipstats", "Up-clip histogram from a saved batch");
    clipstats->add_option("--batch", batch_path, "Batch JSONL file")->required();

    auto* report = app.add_subcommand("report", "Difficulty-evolution table for a run");
    report->add_option("--run", report_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(run_args, out_dir);
        if (rollout->parsed())
            return cmd_rollout(rollout_args, task_text, task_file, rollout_k, rollout_json);
        if (rewards->parsed()) return cmd_rewards(rewards_args, tasks_path, rewards_out);
        if (filter->parsed()) return cmd_filter(filter_in, filter_out, lower, upper, delta);
        if (clipstats->parsed()) return cmd_clipstats(batch_path);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const agent0::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
