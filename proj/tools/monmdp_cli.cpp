#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "monmdp/envs.hpp"
#include "monmdp/experiments.hpp"
#include "monmdp/taxonomy.hpp"

namespace fs = std::filesystem;
using namespace monmdp;
using nlohmann::json;

namespace {

struct TrainingFlags {
    std::string env = "simple";
    std::string agent = "reward-model";
    bool noisy = false;
    double noise_sd = 0.05;
    std::size_t seeds = 100;
    std::size_t steps = 0; // 0: 10k, or 100k when noisy
    std::size_t window = 0;
    std::size_t eval_every = 10;
    std::uint64_t seed_base = 0;
    double q_init = -10.0;
    double alpha = 1.0;
    double unobservable_value = 0.0;
    std::size_t jobs = 1;
    std::string out;
};

void add_training_flags(CLI::App* cmd, TrainingFlags& f, bool with_env_agent) {
    if (with_env_agent) {
        cmd->add_option("--env", f.env, "Registered environment or instance file")->capture_default_str();
        cmd->add_option("--agent", f.agent,
                        "oracle | reward-model | sequential | joint | constant-assign | ignore")
            ->capture_default_str();
        cmd->add_option("--q-init", f.q_init, "Initial Q-value")->capture_default_str();
        cmd->add_option("--unobservable-value", f.unobservable_value, "Value constant-assign gives to hidden rewards")
            ->capture_default_str();
    }
    cmd->add_flag("--noisy", f.noisy, "Gaussian reward noise (100k steps, 20k window by default)");
    cmd->add_option("--noise-sd", f.noise_sd, "Noise standard deviation when --noisy")->capture_default_str();
    cmd->add_option("--seeds", f.seeds, "Number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--steps", f.steps, "Training steps per seed (default 10000, or 100000 with --noisy)");
    cmd->add_option("--window", f.window, "Convergence window (default steps/5)");
    cmd->add_option("--eval-every", f.eval_every, "Steps between greedy evaluations")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed-base", f.seed_base, "First seed")->capture_default_str();
    cmd->add_option("--alpha", f.alpha, "Learning rate")->capture_default_str();
    cmd->add_option("--jobs", f.jobs, "Worker threads (results do not depend on it)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "Output directory (default $MONMDP_OUT or ./results)");
}

ExperimentConfig make_config(const TrainingFlags& f, const std::string& env, AgentKind kind) {
    ExperimentConfig c = ExperimentConfig::defaults(env, kind, f.noisy);
    c.noise_sd = f.noise_sd;
    c.n_seeds = f.seeds;
    c.eval_every = f.eval_every;
    c.seed_base = f.seed_base;
    c.agent.q_init = f.q_init;
    c.agent.alpha = f.alpha;
    c.agent.unobservable_value = f.unobservable_value;
    if (f.steps) {
        c.total_steps = f.steps;
        c.convergence_window = f.steps / 5;
    }
    if (f.window) c.convergence_window = f.window;
    return c;
}

fs::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("MONMDP_OUT"); env && *env) return env;
    return "results";
}

json config_json(const ExperimentConfig& c, double optimal_return) {
    return {{"env", c.env},
            {"agent", to_string(c.agent.kind)},
            {"q_init", c.agent.q_init},
            {"alpha", c.agent.alpha},
            {"gamma", c.agent.gamma},
            {"unobservable_value", c.agent.unobservable_value},
            {"oracle_reward_model", c.agent.use_reward_model_in_oracle},
            {"noisy", c.noisy},
            {"noise_sd", c.noisy ? c.noise_sd : 0.0},
            {"total_steps", c.total_steps},
            {"eval_every", c.eval_every},
            {"convergence_window", c.convergence_window},
            {"n_seeds", c.n_seeds},
            {"seed_base", c.seed_base},
            {"convergence_tol", c.convergence_tol},
            {"optimal_tol", c.optimal_tol},
            {"optimal_return", optimal_return}};
}

void write_outputs(const fs::path& dir, const std::string& command, const std::vector<SuiteResult>& suites) {
    fs::create_directories(dir);
    std::vector<AggregateResult> rows;
    json runs = json::array();
    for (const auto& s : suites) {
        rows.push_back(s.aggregate);
        runs.push_back(config_json(s.config, s.optimal_return));
    }
    export_curves_csv(suites, dir / "curves.csv");
    export_aggregate_csv(rows, dir / "aggregate.csv");
    const json manifest = {{"command", command},
                           {"files", {"curves.csv", "aggregate.csv"}},
                           {"suites", runs}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    std::cout << format_aggregate_table(rows);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        std::size_t pos = 0;
        const double v = std::stod(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("bad number '" + item + "'");
        out.push_back(v);
    }
    return out;
}

int cmd_run(const TrainingFlags& f) {
    ExperimentConfig c = make_config(f, f.env, parse_agent_kind(f.agent));
    const auto ctx = ExperimentContext::build(c);
    c.agent.gamma = ctx.mdp.gamma;
    const SuiteResult suite = run_suite(ctx, c, f.jobs);
    const fs::path dir = output_dir(f.out);
    write_outputs(dir, "run", {suite});
    export_policy_csv(ctx.mdp, suite.runs.front().final_policy, dir / "policy.csv");
    return 0;
}

int cmd_sweep_unobservable(const TrainingFlags& f, const std::string& envs, const std::string& values) {
    const ExperimentConfig base = make_config(f, "simple", AgentKind::ConstantAssign);
    const auto suites = ablation_unobservable_value(parse_values(values), split_list(envs), base, f.jobs);
    write_outputs(output_dir(f.out), "sweep-unobservable", suites);
    return 0;
}

int cmd_sweep_qinit(const TrainingFlags& f, const std::string& envs, const std::string& values,
                    const std::string& agents) {
    std::vector<AgentKind> kinds;
    for (const auto& a : split_list(agents)) kinds.push_back(parse_agent_kind(a));
    const ExperimentConfig base = make_config(f, "simple", AgentKind::RewardModel);
    const auto suites = ablation_qinit(parse_values(values), split_list(envs), kinds, base, f.jobs);
    write_outputs(output_dir(f.out), "sweep-qinit", suites);
    return 0;
}

int cmd_classify(const std::vector<std::string>& envs, bool csv) {
    if (csv) std::cout << classification_csv_header() << '\n';
    bool first = true;
    for (const auto& name : envs) {
        const Classification c = classify(resolve_env(name));
        if (csv) {
            std::cout << classification_csv_row(c) << '\n';
        } else {
            if (!first) std::cout << '\n';
            std::cout << format_classification(c);
        }
        first = false;
    }
    return 0;
}

int cmd_render(const TrainingFlags& f, const std::string& source, std::size_t seed) {
    MonMdp mdp = resolve_env(f.env, f.noisy ? f.noise_sd : 0.0);
    DeterministicPolicy policy;
    if (source == "optimal") {
        policy = value_iteration(mdp).greedy;
    } else if (source == "minimax") {
        policy = minimax_plan(mdp).policy;
    } else {
        ExperimentConfig c = make_config(f, f.env, parse_agent_kind(f.agent));
        const auto ctx = ExperimentContext::build(c);
        c.agent.gamma = ctx.mdp.gamma;
        policy = run_training(ctx, c, seed).final_policy;
    }
    if (mdp.grid_rows == 0) {
        std::cout << policy_csv(mdp, policy);
        return 0;
    }
    for (std::size_t m = 0; m < mdp.monitor.n_states; ++m) {
        const std::string name = m < mdp.monitor.state_names.size() ? mdp.monitor.state_names[m] : std::to_string(m);
        std::cout << "monitor state " << name << ":\n" << render_grid_policy(mdp, policy, m) << '\n';
    }
    return 0;
}

int cmd_list_envs() {
    std::cout << "name            dim  explicit  invariant  positive-rM  description\n";
    for (const auto& info : registered_envs()) {
        const Classification c = classify(make_env(info.name));
        auto yn = [](bool b) { return b ? "yes" : "no"; };
        std::ostringstream row;
        row << std::left << std::setw(16) << info.name << std::setw(5) << c.summary.dimensionality << std::setw(10)
            << yn(c.summary.explicit_monitor_actions) << std::setw(11) << (c.invariant ? yn(*c.invariant) : "n/a")
            << std::setw(13) << yn(c.summary.positive_monitor_rewards) << info.description;
        std::cout << row.str() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular learning and analysis for monitored MDPs"};
    app.require_subcommand(1);

    TrainingFlags run_flags;
    auto* run = app.add_subcommand("run", "Train one agent on one environment over many seeds");
    add_training_flags(run, run_flags, true);

    TrainingFlags unobs_flags;
    std::string unobs_envs = "simple,penalty,button", unobs_values = "-10,0,1";
    auto* unobs = app.add_subcommand("sweep-unobservable", "Constant-assign agent over several hidden-reward values");
    add_training_flags(unobs, unobs_flags, false);
    unobs->add_option("--envs", unobs_envs, "Comma-separated environments")->capture_default_str();
    unobs->add_option("--values", unobs_values, "Comma-separated values for hidden rewards")->capture_default_str();

    TrainingFlags qinit_flags;
    std::string qinit_envs = "simple,penalty,button", qinit_values = "-10,0,1",
                qinit_agents = "oracle,reward-model,sequential,joint,constant-assign,ignore";
    auto* qinit = app.add_subcommand("sweep-qinit", "All agents over several Q-value initializations");
    add_training_flags(qinit, qinit_flags, false);
    qinit->add_option("--envs", qinit_envs, "Comma-separated environments")->capture_default_str();
    qinit->add_option("--values", qinit_values, "Comma-separated initial Q-values")->capture_default_str();
    qinit->add_option("--agents", qinit_agents, "Comma-separated agents")->capture_default_str();

    std::vector<std::string> classify_envs;
    bool classify_csv = false;
    auto* cls = app.add_subcommand("classify", "Check observability properties and invariance");
    cls->add_option("--env", classify_envs, "Environment(s) or instance file(s)")->required();
    cls->add_flag("--csv", classify_csv, "Print CSV rows instead of a report");

    TrainingFlags render_flags;
    std::string render_source = "learned";
    std::size_t render_seed = 0;
    auto* render = app.add_subcommand("render-policy", "Print the greedy policy of a trained agent or a planner");
    add_training_flags(render, render_flags, true);
    render->add_option("--policy", render_source, "learned | optimal | minimax")
        ->capture_default_str()
        ->check(CLI::IsMember({"learned", "optimal", "minimax"}));
    render->add_option("--seed", render_seed, "Seed of the training run")->capture_default_str();

    auto* list = app.add_subcommand("list-envs", "List registered environments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*unobs) return cmd_sweep_unobservable(unobs_flags, unobs_envs, unobs_values);
        if (*qinit) return cmd_sweep_qinit(qinit_flags, qinit_envs, qinit_values, qinit_agents);
        if (*cls) return cmd_classify(classify_envs, classify_csv);
        if (*render) return cmd_render(render_flags, render_source, render_seed);
        if (*list) return cmd_list_envs();
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
