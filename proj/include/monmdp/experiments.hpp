#pragma once

// Multi-seed training, exact greedy evaluation, convergence detection and
// CSV reporting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "monmdp/agents.hpp"
#include "monmdp/core.hpp"

namespace monmdp {

struct ExperimentConfig {
    std::string env = "simple"; // registered name or instance file
    AgentConfig agent;
    bool noisy = false;
    double noise_sd = 0.05; // used when noisy
    std::size_t total_steps = 10'000;
    std::size_t eval_every = 10;
    std::size_t convergence_window = 2'000;
    std::size_t n_seeds = 100;
    std::uint64_t seed_base = 0;
    double convergence_tol = 1e-9;
    double optimal_tol = 1e-6;

    /// Paper-scale defaults: 10k steps / 2k window, or 100k / 20k when noisy.
    static ExperimentConfig defaults(const std::string& env, AgentKind kind, bool noisy = false);
    void validate() const;
};

/// Shared read-only state of a suite: the instance, its planning model and
/// the value-iteration reference return.
struct ExperimentContext {
    MonMdp mdp;
    JointModel model;
    double optimal_return = 0.0;

    static ExperimentContext build(const ExperimentConfig& config);
};

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<std::size_t> eval_steps;
    std::vector<double> eval_returns;
    bool converged = false;
    std::optional<std::size_t> convergence_step;
    bool converged_to_optimal = false;
    double final_return = 0.0;
    DeterministicPolicy final_policy;
};

struct AggregateResult {
    std::string env;
    std::string agent;
    bool noisy = false;
    std::size_t n_seeds = 0;
    std::size_t n_optimal = 0;
    double percent_optimal = 0.0;
    double mean_steps = 0.0; // over optimal seeds; NaN if none
    double ci95 = 0.0;       // 1.96 * sd / sqrt(n); NaN if none
    double optimal_return = 0.0;
};

struct SuiteResult {
    ExperimentConfig config;
    double optimal_return = 0.0;
    std::vector<RunResult> runs;
    AggregateResult aggregate;
};

/// Earliest step from which every later return stays within `tol` of the
/// final one, provided that stable suffix spans at least `window` steps.
std::optional<std::size_t> detect_convergence(const std::vector<std::size_t>& steps,
                                              const std::vector<double>& returns, std::size_t window,
                                              double tol);

RunResult run_training(const ExperimentContext& ctx, const ExperimentConfig& config, std::uint64_t seed);

struct TrainedRun {
    RunResult result;
    Agent agent;
};

/// Same as run_training, keeping the learner for inspection.
TrainedRun train(const ExperimentContext& ctx, const ExperimentConfig& config, std::uint64_t seed);

/// Runs seeds seed_base .. seed_base + n_seeds - 1 on `jobs` threads. The
/// result does not depend on `jobs`.
SuiteResult run_suite(const ExperimentConfig& config, std::size_t jobs = 1);
SuiteResult run_suite(const ExperimentContext& ctx, const ExperimentConfig& config, std::size_t jobs = 1);

AggregateResult aggregate(const ExperimentConfig& config, const std::vector<RunResult>& runs,
                          double optimal_return);

/// One suite per (value, env). ConstantAssign with the given unobservable
/// values.
std::vector<SuiteResult> ablation_unobservable_value(const std::vector<double>& values,
                                                     const std::vector<std::string>& envs,
                                                     const ExperimentConfig& base, std::size_t jobs = 1);
/// One suite per (q_init, env, agent).
std::vector<SuiteResult> ablation_qinit(const std::vector<double>& values, const std::vector<std::string>& envs,
                                        const std::vector<AgentKind>& agents, const ExperimentConfig& base,
                                        std::size_t jobs = 1);

// CSV writers. Headers:
//   curves:    monmdp,agent,seed,step,eval_return
//   aggregate: monmdp,agent,noisy,percent_optimal,mean_steps,ci95,n_seeds
//   policy:    env_state,mon_state,env_action,mon_action
void export_curves_csv(const std::vector<SuiteResult>& suites, const std::filesystem::path& path);
void export_aggregate_csv(const std::vector<AggregateResult>& rows, const std::filesystem::path& path);
void export_policy_csv(const MonMdp& mdp, const DeterministicPolicy& policy, const std::filesystem::path& path);
std::string policy_csv(const MonMdp& mdp, const DeterministicPolicy& policy);

/// Plain-text table in the layout of the usual results table: one row per
/// agent, one "steps ± ci | %" cell per environment.
std::string format_aggregate_table(const std::vector<AggregateResult>& rows);

/// Text rendering of a grid policy for one monitor state.
std::string render_grid_policy(const MonMdp& mdp, const DeterministicPolicy& policy, std::size_t mon_state);

} // namespace monmdp
