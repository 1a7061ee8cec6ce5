#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agent0/consistency.hpp"
#include "agent0/policy_optim.hpp"
#include "agent0/remote.hpp"
#include "agent0/rewards.hpp"
#include "agent0/rollout.hpp"
#include "agent0/sandbox.hpp"
#include "agent0/serde.hpp"
#include "agent0/toy.hpp"

namespace agent0 {

struct WorkerSpec {
    std::string type = "mock";  // mock | subprocess | http
    std::vector<std::string> argv;  // subprocess command, {file} placeholder supported
    std::string host = "127.0.0.1";
    int port = 0;
    std::string endpoint_path = "/execute";
};

struct SandboxSpec {
    std::vector<WorkerSpec> workers = {WorkerSpec{}};
    PoolConfig pool;
    size_t output_cap_bytes = 8192;
};

struct RunConfig {
    uint64_t seed = 1;
    int iterations = 3;  // T
    int k = 10;          // consistency samples per task

    int curriculum_batch = 128;
    int curriculum_group = 4;
    int curriculum_steps = 5;
    int curriculum_epochs = 2;

    int executor_group = 16;
    int executor_steps = 40;
    int executor_tasks_per_step = 8;
    int executor_epochs = 2;

    int pool_size = 512;  // X_pool candidates per iteration
    int heldout_size = 200;
    int parallel = 0;  // rollout fan-out; 0 picks the hardware default

    CurriculumRewardConfig rewards;
    FrontierBand frontier;
    OptimConfig curriculum_optim;
    OptimConfig executor_optim;
    RolloutLimits limits;
    FenceConfig fences;
    ToyConfig toy;
    SandboxSpec sandbox;

    std::string generator_type = "toy";  // toy | remote
    RemoteConfig remote;

    std::string executor_prompt_template;    // resolved text; empty picks the built-in default
    std::string curriculum_prompt_template;

    RunConfig();
    void validate() const;
    int effective_parallel() const;
};

json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& j);

// dotted-path config override, value parsed as a JSON literal when possible
void apply_config_override(json& config, const std::string& dotted_key,
                           const std::string& value);

json params_to_json(const PolicyParams& p);
PolicyParams params_from_json(const json& j);

struct RunState {
    int completed_iterations = 0;
    uint64_t seed = 0;
    std::filesystem::path run_dir;
};

struct CurriculumPhaseStats {
    std::vector<double> mean_composite_per_step;
    std::vector<double> format_fail_frac_per_step;
    long rollouts_executed = 0;
};

struct ExecutorPhaseStats {
    size_t dataset_size = 0;
    std::vector<double> mean_reward_per_step;
    ClipHistogram clip;
    long rollouts_executed = 0;
};

struct HeldoutResult {
    double accuracy = 0.0;
    double mean_tool_calls = 0.0;
};

struct ReportRow {
    int iteration = 0;
    double pass_rate_iter1_executor = 0.0;
    double mean_tool_calls = 0.0;
    size_t dataset_size = 0;
};

class Driver {
  public:
    Driver(RunConfig cfg, std::filesystem::path run_dir);

    // Algorithm outer loop: alternate curriculum and executor evolution for T
    // iterations, persisting snapshots, datasets, metrics and the difficulty
    // report; resumes from a persisted state when the run directory has one.
    RunState run();

    CurriculumPhaseStats curriculum_phase(int iteration);
    ExecutorPhaseStats executor_phase(int iteration);

    HeldoutResult evaluate_heldout(ToyExecutorPolicy& executor, uint64_t salt = 0);

    const RunConfig& config() const { return cfg_; }
    ToyCurriculumPolicy& curriculum() { return *curriculum_; }
    ToyExecutorPolicy& executor() { return *executor_; }
    const std::vector<FilteredEntry>& dataset(int iteration) const;
    RolloutOptions rollout_options() const;

    static std::unique_ptr<SandboxClient> make_sandbox(const SandboxSpec& spec);

  private:
    std::filesystem::path iter_dir(int iteration) const;
    void persist_iteration(int iteration);
    void load_iteration(int iteration);
    void write_report(const std::filesystem::path& path);
    void write_heldout_table(const std::filesystem::path& path);
    std::vector<Task> sample_heldout_tasks() const;

    RunConfig cfg_;
    std::filesystem::path run_dir_;
    std::unique_ptr<ToyCurriculumPolicy> curriculum_;
    std::unique_ptr<ToyExecutorPolicy> executor_;
    std::unique_ptr<SandboxClient> sandbox_;
    std::vector<std::vector<FilteredEntry>> datasets_;  // D^(1..T)
    std::vector<HeldoutResult> heldout_;                // index 0 = pre-training baseline
    std::optional<PolicyParams> executor_iter1_snapshot_;
};

// Built-in prompt templates (identical to the editable assets under
// assets/prompts/).
std::string default_executor_prompt();
std::string default_curriculum_prompt();
std::string default_judge_prompt();

}  // namespace agent0
