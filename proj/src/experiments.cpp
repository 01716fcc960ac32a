#include "monmdp/experiments.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "monmdp/envs.hpp"

namespace monmdp {

ExperimentConfig ExperimentConfig::defaults(const std::string& env, AgentKind kind, bool noisy) {
    ExperimentConfig c;
    c.env = env;
    c.agent.kind = kind;
    c.noisy = noisy;
    c.agent.use_reward_model_in_oracle = noisy;
    if (noisy) {
        c.total_steps = 100'000;
        c.convergence_window = 20'000;
    }
    return c;
}

void ExperimentConfig::validate() const {
    agent.validate();
    if (eval_every == 0 || total_steps == 0 || total_steps % eval_every != 0)
        throw ContractError("experiment: eval_every must divide total_steps");
    if (convergence_window >= total_steps)
        throw ContractError("experiment: convergence window must be shorter than training");
    if (n_seeds == 0) throw ContractError("experiment: need at least one seed");
    if (noisy && !(noise_sd > 0.0)) throw ContractError("experiment: noisy runs need noise_sd > 0");
}

ExperimentContext ExperimentContext::build(const ExperimentConfig& config) {
    ExperimentContext ctx;
    ctx.mdp = resolve_env(config.env, config.noisy ? config.noise_sd : 0.0);
    ctx.model = build_joint_model(ctx.mdp);
    ctx.optimal_return = value_iteration(ctx.model, RewardSpec::joint()).optimal_return;
    return ctx;
}

std::optional<std::size_t> detect_convergence(const std::vector<std::size_t>& steps,
                                              const std::vector<double>& returns, std::size_t window,
                                              double tol) {
    if (steps.size() != returns.size()) throw ContractError("detect_convergence: length mismatch");
    if (returns.empty()) return std::nullopt;
    const double last = returns.back();
    std::size_t i = returns.size() - 1;
    while (i > 0 && std::abs(returns[i - 1] - last) <= tol) --i;
    if (steps.back() - steps[i] < window) return std::nullopt;
    return steps[i];
}

RunResult run_training(const ExperimentContext& ctx, const ExperimentConfig& config, std::uint64_t seed) {
    return train(ctx, config, seed).result;
}

TrainedRun train(const ExperimentContext& ctx, const ExperimentConfig& config, std::uint64_t seed) {
    const MonMdp& mdp = ctx.mdp;
    Rng rng(seed);
    Rng tie_rng(seed ^ 0x5eedf00dULL);
    const TiePriority ties = TiePriority::draw(mdp, tie_rng);
    Agent agent(mdp, config.agent);
    const Schedule schedule{config.total_steps};

    RunResult result;
    result.seed = seed;
    result.eval_steps.reserve(config.total_steps / config.eval_every);
    result.eval_returns.reserve(config.total_steps / config.eval_every);

    DeterministicPolicy last_policy;
    double last_return = 0.0;

    JointState state = sample_initial_state(mdp, rng);
    std::size_t episode_len = 0;
    for (std::size_t t = 0; t < config.total_steps; ++t) {
        const JointAction action = agent.act(state, schedule.epsilon(t), rng);
        const ObservedStep obs = step(mdp, state, action, rng);
        if (config.agent.kind == AgentKind::Oracle)
            agent.update_oracle(obs, rng);
        else
            agent.update(visible_part(obs), rng);

        ++episode_len;
        if (obs.terminal || episode_len >= mdp.horizon) {
            state = sample_initial_state(mdp, rng);
            episode_len = 0;
        } else {
            state = obs.next_state;
        }

        if ((t + 1) % config.eval_every == 0) {
            DeterministicPolicy policy = agent.greedy_policy(ties);
            if (policy != last_policy) {
                last_return = policy_evaluation(ctx.model, policy, mdp.horizon);
                last_policy = std::move(policy);
            }
            result.eval_steps.push_back(t + 1);
            result.eval_returns.push_back(last_return);
        }
    }

    result.final_return = result.eval_returns.back();
    result.final_policy = last_policy;
    result.convergence_step = detect_convergence(result.eval_steps, result.eval_returns,
                                                 config.convergence_window, config.convergence_tol);
    result.converged = result.convergence_step.has_value();
    result.converged_to_optimal =
        result.converged && std::abs(result.final_return - ctx.optimal_return) < config.optimal_tol;
    return {std::move(result), std::move(agent)};
}

AggregateResult aggregate(const ExperimentConfig& config, const std::vector<RunResult>& runs,
                          double optimal_return) {
    AggregateResult agg;
    agg.env = config.env;
    agg.agent = to_string(config.agent.kind);
    agg.noisy = config.noisy;
    agg.n_seeds = runs.size();
    agg.optimal_return = optimal_return;
    std::vector<double> steps;
    for (const auto& r : runs)
        if (r.converged_to_optimal) steps.push_back(static_cast<double>(*r.convergence_step));
    agg.n_optimal = steps.size();
    agg.percent_optimal = runs.empty() ? 0.0 : 100.0 * static_cast<double>(steps.size()) / runs.size();
    if (steps.empty()) {
        agg.mean_steps = agg.ci95 = std::numeric_limits<double>::quiet_NaN();
        return agg;
    }
    double sum = 0.0;
    for (double s : steps) sum += s;
    agg.mean_steps = sum / steps.size();
    double ss = 0.0;
    for (double s : steps) ss += (s - agg.mean_steps) * (s - agg.mean_steps);
    const double sd = steps.size() > 1 ? std::sqrt(ss / (steps.size() - 1)) : 0.0;
    agg.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(steps.size()));
    return agg;
}

SuiteResult run_suite(const ExperimentContext& ctx, const ExperimentConfig& config, std::size_t jobs) {
    config.validate();
    SuiteResult suite;
    suite.config = config;
    suite.optimal_return = ctx.optimal_return;
    suite.runs.resize(config.n_seeds);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < config.n_seeds; i = next++)
            suite.runs[i] = run_training(ctx, config, config.seed_base + i);
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, config.n_seeds));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    suite.aggregate = aggregate(config, suite.runs, ctx.optimal_return);
    return suite;
}

SuiteResult run_suite(const ExperimentConfig& config, std::size_t jobs) {
    config.validate();
    return run_suite(ExperimentContext::build(config), config, jobs);
}

std::vector<SuiteResult> ablation_unobservable_value(const std::vector<double>& values,
                                                     const std::vector<std::string>& envs,
                                                     const ExperimentConfig& base, std::size_t jobs) {
    std::vector<SuiteResult> out;
    for (const auto& env : envs) {
        ExperimentConfig c = base;
        c.env = env;
        c.agent.kind = AgentKind::ConstantAssign;
        const auto ctx = ExperimentContext::build(c);
        for (double v : values) {
            c.agent.unobservable_value = v;
            out.push_back(run_suite(ctx, c, jobs));
        }
    }
    return out;
}

std::vector<SuiteResult> ablation_qinit(const std::vector<double>& values, const std::vector<std::string>& envs,
                                        const std::vector<AgentKind>& agents, const ExperimentConfig& base,
                                        std::size_t jobs) {
    std::vector<SuiteResult> out;
    for (const auto& env : envs) {
        ExperimentConfig c = base;
        c.env = env;
        const auto ctx = ExperimentContext::build(c);
        for (double v : values)
            for (AgentKind k : agents) {
                c.agent.kind = k;
                c.agent.q_init = v;
                out.push_back(run_suite(ctx, c, jobs));
            }
    }
    return out;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(12);
    return out;
}

std::string fmt_number(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
}

} // namespace

void export_curves_csv(const std::vector<SuiteResult>& suites, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "monmdp,agent,seed,step,eval_return\n";
    for (const auto& suite : suites) {
        const std::string agent = to_string(suite.config.agent.kind);
        for (const auto& run : suite.runs)
            for (std::size_t i = 0; i < run.eval_steps.size(); ++i)
                out << suite.config.env << ',' << agent << ',' << run.seed << ',' << run.eval_steps[i] << ','
                    << run.eval_returns[i] << '\n';
    }
    if (!out) throw std::runtime_error("error writing " + path.string());
}

void export_aggregate_csv(const std::vector<AggregateResult>& rows, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "monmdp,agent,noisy,percent_optimal,mean_steps,ci95,n_seeds\n";
    for (const auto& r : rows)
        out << r.env << ',' << r.agent << ',' << (r.noisy ? 1 : 0) << ',' << fmt_number(r.percent_optimal) << ','
            << fmt_number(r.mean_steps) << ',' << fmt_number(r.ci95) << ',' << r.n_seeds << '\n';
    if (!out) throw std::runtime_error("error writing " + path.string());
}

std::string policy_csv(const MonMdp& mdp, const DeterministicPolicy& policy) {
    auto name = [](const std::vector<std::string>& names, std::size_t i) {
        return i < names.size() ? names[i] : std::to_string(i);
    };
    std::ostringstream out;
    out << "env_state,mon_state,env_action,mon_action\n";
    for (std::size_t s = 0; s < policy.size(); ++s) {
        const JointState js = mdp.joint_state(s);
        out << name(mdp.env.state_names, js.env) << ',' << name(mdp.monitor.state_names, js.mon) << ',';
        if (mdp.env.is_terminal(js.env) || policy[s] == kNoAction) {
            out << ",\n";
            continue;
        }
        const JointAction a = mdp.joint_action(policy[s]);
        out << name(mdp.env.action_names, a.env) << ',' << name(mdp.monitor.action_names, a.mon) << '\n';
    }
    return out.str();
}

void export_policy_csv(const MonMdp& mdp, const DeterministicPolicy& policy, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << policy_csv(mdp, policy);
    if (!out) throw std::runtime_error("error writing " + path.string());
}

std::string format_aggregate_table(const std::vector<AggregateResult>& rows) {
    std::vector<std::string> envs, agents;
    std::map<std::pair<std::string, std::string>, const AggregateResult*> cells;
    for (const auto& r : rows) {
        if (std::find(envs.begin(), envs.end(), r.env) == envs.end()) envs.push_back(r.env);
        if (std::find(agents.begin(), agents.end(), r.agent) == agents.end()) agents.push_back(r.agent);
        cells[{r.agent, r.env}] = &r;
    }
    std::ostringstream out;
    out << std::left << std::setw(16) << "agent";
    for (const auto& e : envs) out << " | " << std::setw(22) << e;
    out << '\n';
    for (const auto& a : agents) {
        out << std::setw(16) << a;
        for (const auto& e : envs) {
            std::ostringstream cell;
            auto it = cells.find({a, e});
            if (it != cells.end()) {
                const auto& r = *it->second;
                if (r.n_optimal == 0)
                    cell << "---";
                else
                    cell << std::fixed << std::setprecision(0) << r.mean_steps << " +- " << r.ci95;
                cell << " | " << std::setprecision(0) << r.percent_optimal << '%';
            }
            out << " | " << std::setw(22) << cell.str();
        }
        out << '\n';
    }
    return out.str();
}

std::string render_grid_policy(const MonMdp& mdp, const DeterministicPolicy& policy, std::size_t mon_state) {
    if (mdp.grid_rows == 0 || mdp.grid_cols == 0) throw ContractError("render_grid_policy: not a grid instance");
    if (mon_state >= mdp.monitor.n_states) throw ContractError("render_grid_policy: monitor state out of range");
    static const char* arrows[] = {"<", "v", ">", "^"};
    std::ostringstream out;
    for (std::size_t r = 0; r < mdp.grid_rows; ++r) {
        for (std::size_t c = 0; c < mdp.grid_cols; ++c) {
            const std::size_t se = r * mdp.grid_cols + c;
            std::string cell;
            if (mdp.env.is_terminal(se)) {
                cell = "G";
            } else {
                const std::size_t a = policy[mdp.state_index({se, mon_state})];
                const JointAction ja = mdp.joint_action(a);
                cell = ja.env < 4 ? arrows[ja.env] : std::to_string(ja.env);
                if (mdp.monitor.n_actions > 1)
                    cell += "/" + (ja.mon < mdp.monitor.action_names.size() ? mdp.monitor.action_names[ja.mon]
                                                                           : std::to_string(ja.mon));
            }
            out << std::left << std::setw(14) << cell;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace monmdp
