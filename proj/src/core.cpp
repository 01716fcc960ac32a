#include "monmdp/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace monmdp {

namespace {

constexpr double kRowTol = 1e-12;

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

void check_distribution(std::span<const double> probs, const std::string& what) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw ValidationError(concat(what, " has a negative or non-finite entry"));
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTol)
        throw ValidationError(concat(what, " sums to ", sum, " (must be 1 within 1e-12)"));
}

} // namespace

void EnvModel::validate() const {
    if (n_states == 0 || n_actions == 0)
        throw ValidationError("env: n_states and n_actions must be positive");
    if (transition.size() != n_states * n_actions * n_states)
        throw ValidationError("env: transition table has the wrong size");
    if (reward_mean.size() != n_states * n_actions)
        throw ValidationError("env: reward table has the wrong size");
    if (terminal.size() != n_states) throw ValidationError("env: terminal mask has the wrong size");
    if (initial_dist.size() != n_states)
        throw ValidationError("env: initial distribution has the wrong size");
    if (!(reward_noise_sd >= 0.0) || !std::isfinite(reward_noise_sd))
        throw ValidationError("env: reward_noise_sd must be finite and nonnegative");
    if (!(reward_bounds.first <= reward_bounds.second))
        throw ValidationError("env: reward_bounds must satisfy r_min <= r_max");

    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            const std::span<const double> row(&transition[(s * n_actions + a) * n_states], n_states);
            check_distribution(row, concat("env transition row (s=", s, ", a=", a, ")"));
            const double r_sa = r(s, a);
            if (!std::isfinite(r_sa))
                throw ValidationError(concat("env reward (s=", s, ", a=", a, ") is not finite"));
            if (r_sa < reward_bounds.first || r_sa > reward_bounds.second)
                throw ValidationError(concat("env reward (s=", s, ", a=", a, ") = ", r_sa,
                                             " lies outside reward_bounds"));
            if (is_terminal(s)) {
                if (std::abs(p(s, a, s) - 1.0) > kRowTol)
                    throw ValidationError(
                        concat("env terminal state ", s, " is not absorbing under action ", a));
                if (r_sa != 0.0)
                    throw ValidationError(
                        concat("env terminal state ", s, " has nonzero reward under action ", a));
            }
        }
    }
    check_distribution(initial_dist, "env initial distribution");
}

void MonitorModel::validate() const {
    if (n_states == 0 || n_actions == 0)
        throw ValidationError("monitor: n_states and n_actions must be positive");
    if (transition.size() != n_states * n_env_states * n_actions * n_env_actions * n_states)
        throw ValidationError("monitor: transition table has the wrong size");
    if (initial_dist.size() != n_states)
        throw ValidationError("monitor: initial distribution has the wrong size");
    if (!reward) throw ValidationError("monitor: reward function is missing");
    if (!monitor_fn) throw ValidationError("monitor: monitor function is missing");

    for (std::size_t m = 0; m < n_states; ++m)
        for (std::size_t se = 0; se < n_env_states; ++se)
            for (std::size_t am = 0; am < n_actions; ++am)
                for (std::size_t ae = 0; ae < n_env_actions; ++ae) {
                    const std::span<const double> row(&transition[index(m, se, am, ae)], n_states);
                    check_distribution(row, concat("monitor transition row (m=", m, ", se=", se,
                                                   ", am=", am, ", ae=", ae, ")"));
                }
    check_distribution(initial_dist, "monitor initial distribution");
}

void MonMdp::validate() const {
    env.validate();
    if (monitor.n_env_states != env.n_states || monitor.n_env_actions != env.n_actions)
        throw ValidationError("monitor: env dimensions do not match the environment");
    monitor.validate();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
    if (horizon < 1) throw ValidationError("horizon must be at least 1");

    // Monitor rewards must be bounded (finite) on every transition that can occur.
    for (std::size_t se = 0; se < env.n_states; ++se)
        for (std::size_t ae = 0; ae < env.n_actions; ++ae)
            for (std::size_t se2 = 0; se2 < env.n_states; ++se2) {
                if (env.p(se, ae, se2) <= 0.0) continue;
                for (std::size_t m = 0; m < monitor.n_states; ++m)
                    for (std::size_t am = 0; am < monitor.n_actions; ++am)
                        for (std::size_t m2 = 0; m2 < monitor.n_states; ++m2) {
                            if (monitor.p(m, se, am, ae, m2) <= 0.0) continue;
                            const double rm = monitor.reward({se, ae, se2, m, am, m2});
                            if (!std::isfinite(rm))
                                throw ValidationError(concat(
                                    "monitor reward is not finite at (m=", m, ", am=", am,
                                    ", se=", se, ", ae=", ae, ")"));
                        }
            }
}

JointState sample_initial_state(const MonMdp& mdp, Rng& rng) {
    const std::size_t se = rng.categorical(mdp.env.initial_dist);
    const std::size_t m = rng.categorical(mdp.monitor.initial_dist);
    return {se, m};
}

ObservedStep step(const MonMdp& mdp, JointState state, JointAction action, Rng& rng) {
    const auto& env = mdp.env;
    const auto& mon = mdp.monitor;
    if (state.env >= env.n_states || state.mon >= mon.n_states)
        throw ContractError("step: joint state index out of range");
    if (action.env >= env.n_actions || action.mon >= mon.n_actions)
        throw ContractError("step: joint action index out of range");
    if (env.is_terminal(state.env)) throw ContractError("step: state is terminal");

    const std::span<const double> env_row(
        &env.transition[(state.env * env.n_actions + action.env) * env.n_states], env.n_states);
    const std::size_t next_env = rng.categorical(env_row);

    double reward = env.r(state.env, action.env);
    if (env.reward_noise_sd > 0.0) reward += rng.normal(0.0, env.reward_noise_sd);

    const std::span<const double> mon_row(
        &mon.transition[mon.index(state.mon, state.env, action.mon, action.env)], mon.n_states);
    const std::size_t next_mon = rng.categorical(mon_row);

    const MonitorInput in{state.env, action.env, next_env, state.mon, action.mon, next_mon};

    ObservedStep out;
    out.state = state;
    out.action = action;
    out.hidden_env_reward = reward;
    out.proxy = mon.monitor_fn(reward, in);
    out.mon_reward = mon.reward(in);
    out.next_state = {next_env, next_mon};
    out.terminal = env.is_terminal(next_env);
    return out;
}

std::vector<double> joint_transition(const MonMdp& mdp) {
    const std::size_t ns = mdp.n_joint_states();
    const std::size_t na = mdp.n_joint_actions();
    std::vector<double> table(ns * na * ns, 0.0);
    const auto& env = mdp.env;
    const auto& mon = mdp.monitor;
    for (std::size_t s = 0; s < ns; ++s) {
        const JointState js = mdp.joint_state(s);
        for (std::size_t a = 0; a < na; ++a) {
            const JointAction ja = mdp.joint_action(a);
            for (std::size_t se2 = 0; se2 < env.n_states; ++se2) {
                const double pe = env.p(js.env, ja.env, se2);
                if (pe == 0.0) continue;
                for (std::size_t m2 = 0; m2 < mon.n_states; ++m2) {
                    const double pm = mon.p(js.mon, js.env, ja.mon, ja.env, m2);
                    table[(s * na + a) * ns + mdp.state_index({se2, m2})] += pe * pm;
                }
            }
        }
    }
    return table;
}

JointModel build_joint_model(const MonMdp& mdp) {
    const auto& env = mdp.env;
    const auto& mon = mdp.monitor;
    JointModel model;
    model.n_states = mdp.n_joint_states();
    model.n_actions = mdp.n_joint_actions();
    model.n_env_states = env.n_states;
    model.n_env_actions = env.n_actions;
    model.n_mon_states = mon.n_states;
    model.n_mon_actions = mon.n_actions;
    model.gamma = mdp.gamma;
    model.horizon = mdp.horizon;
    model.successors.resize(model.n_states * model.n_actions);
    model.env_reward.assign(model.n_states * model.n_actions, 0.0);
    model.mon_reward.assign(model.n_states * model.n_actions, 0.0);
    model.terminal.assign(model.n_states, 0);
    model.initial.assign(model.n_states, 0.0);

    for (std::size_t s = 0; s < model.n_states; ++s) {
        const JointState js = mdp.joint_state(s);
        model.terminal[s] = env.terminal[js.env];
        model.initial[s] = env.initial_dist[js.env] * mon.initial_dist[js.mon];
        for (std::size_t a = 0; a < model.n_actions; ++a) {
            const JointAction ja = mdp.joint_action(a);
            const std::size_t idx = model.sa(s, a);
            model.env_reward[idx] = env.r(js.env, ja.env);
            double expected_mon = 0.0;
            auto& succ = model.successors[idx];
            for (std::size_t se2 = 0; se2 < env.n_states; ++se2) {
                const double pe = env.p(js.env, ja.env, se2);
                if (pe == 0.0) continue;
                for (std::size_t m2 = 0; m2 < mon.n_states; ++m2) {
                    const double pm = mon.p(js.mon, js.env, ja.mon, ja.env, m2);
                    if (pm == 0.0) continue;
                    const double prob = pe * pm;
                    succ.push_back({static_cast<std::uint32_t>(mdp.state_index({se2, m2})), prob});
                    // Nothing is ever paid from an absorbing terminal state.
                    if (!model.terminal[s])
                        expected_mon += prob * mon.reward({js.env, ja.env, se2, js.mon, ja.mon, m2});
                }
            }
            model.mon_reward[idx] = expected_mon;
        }
    }
    return model;
}

double QTable::max(std::size_t s) const {
    const auto first = values.begin() + static_cast<std::ptrdiff_t>(s * n_actions);
    return *std::max_element(first, first + static_cast<std::ptrdiff_t>(n_actions));
}

std::vector<double> expected_reward(const JointModel& model, const RewardSpec& spec) {
    std::vector<double> r(model.n_states * model.n_actions, 0.0);
    if (spec.mode == RewardMode::CustomTable &&
        spec.custom_env_reward.size() != model.n_env_states * model.n_env_actions)
        throw ContractError("custom reward table must be sized [env states][env actions]");
    for (std::size_t s = 0; s < model.n_states; ++s) {
        const std::size_t se = s / model.n_mon_states;
        for (std::size_t a = 0; a < model.n_actions; ++a) {
            const std::size_t ae = a / model.n_mon_actions;
            const std::size_t idx = model.sa(s, a);
            switch (spec.mode) {
            case RewardMode::Joint: r[idx] = model.env_reward[idx] + model.mon_reward[idx]; break;
            case RewardMode::EnvOnly: r[idx] = model.env_reward[idx]; break;
            case RewardMode::CustomTable:
                r[idx] = spec.custom_env_reward[se * model.n_env_actions + ae] +
                         model.mon_reward[idx];
                break;
            }
            if (model.terminal[s]) r[idx] = 0.0;
        }
    }
    return r;
}

namespace {

double backup(const JointModel& model, const std::vector<double>& reward,
              const std::vector<double>& value, std::size_t s, std::size_t a) {
    const std::size_t idx = model.sa(s, a);
    double future = 0.0;
    for (const auto& succ : model.successors[idx])
        if (!model.terminal[succ.state]) future += succ.prob * value[succ.state];
    return reward[idx] + model.gamma * future;
}

std::vector<double> state_values(const JointModel& model, const QTable& q) {
    std::vector<double> v(model.n_states, 0.0);
    for (std::size_t s = 0; s < model.n_states; ++s)
        if (!model.terminal[s]) v[s] = q.max(s);
    return v;
}

} // namespace

double bellman_residual(const JointModel& model, const RewardSpec& spec, const QTable& q) {
    const auto reward = expected_reward(model, spec);
    const auto v = state_values(model, q);
    double residual = 0.0;
    for (std::size_t s = 0; s < model.n_states; ++s) {
        if (model.terminal[s]) continue;
        for (std::size_t a = 0; a < model.n_actions; ++a)
            residual = std::max(residual, std::abs(q(s, a) - backup(model, reward, v, s, a)));
    }
    return residual;
}

DeterministicPolicy greedy_policy(const JointModel& model, const QTable& q) {
    DeterministicPolicy pi(model.n_states, 0);
    for (std::size_t s = 0; s < model.n_states; ++s) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < model.n_actions; ++a)
            if (q(s, a) > q(s, best)) best = a;
        pi[s] = best;
    }
    return pi;
}

PlanResult value_iteration(const JointModel& model, const RewardSpec& spec, double tol,
                           std::size_t max_iterations) {
    if (!(tol > 0.0)) throw ContractError("value_iteration: tol must be positive");
    const auto reward = expected_reward(model, spec);

    PlanResult result;
    result.q = QTable(model.n_states, model.n_actions, 0.0);
    std::vector<double> v(model.n_states, 0.0);
    // Stopping on the value change bounds the Bellman residual of Q by the
    // same amount (gamma < 1), so the residual reported below is below tol.
    for (std::size_t it = 0; it < max_iterations; ++it) {
        double delta = 0.0;
        for (std::size_t s = 0; s < model.n_states; ++s) {
            if (model.terminal[s]) continue;
            for (std::size_t a = 0; a < model.n_actions; ++a) {
                const double nq = backup(model, reward, v, s, a);
                delta = std::max(delta, std::abs(nq - result.q(s, a)));
                result.q(s, a) = nq;
            }
        }
        v = state_values(model, result.q);
        result.iterations = it + 1;
        if (delta < tol * 0.5) break;
    }
    result.residual = bellman_residual(model, spec, result.q);
    if (!(result.residual < tol))
        throw ConvergenceError("value_iteration did not converge within the iteration cap",
                               result.residual);
    result.greedy = greedy_policy(model, result.q);
    result.optimal_return = policy_evaluation(model, result.greedy, model.horizon, spec);
    return result;
}

PlanResult value_iteration(const MonMdp& mdp, const RewardSpec& spec, double tol) {
    return value_iteration(build_joint_model(mdp), spec, tol);
}

namespace {

std::vector<char> reachable_under(const JointModel& model, std::size_t horizon,
                                  const std::function<bool(std::size_t, std::size_t)>& uses) {
    std::vector<char> reached(model.n_states, 0);
    std::vector<std::size_t> frontier;
    for (std::size_t s = 0; s < model.n_states; ++s)
        if (model.initial[s] > 0.0) {
            reached[s] = 1;
            frontier.push_back(s);
        }
    // Depth-limited: a state first reached at depth >= horizon never acts.
    for (std::size_t depth = 1; depth < horizon && !frontier.empty(); ++depth) {
        std::vector<std::size_t> next;
        for (std::size_t s : frontier) {
            if (model.terminal[s]) continue;
            for (std::size_t a = 0; a < model.n_actions; ++a) {
                if (!uses(s, a)) continue;
                for (const auto& succ : model.successors[model.sa(s, a)])
                    if (!reached[succ.state]) {
                        reached[succ.state] = 1;
                        next.push_back(succ.state);
                    }
            }
        }
        frontier = std::move(next);
    }
    return reached;
}

} // namespace

std::vector<double> policy_state_values(const JointModel& model, const DeterministicPolicy& policy,
                                        std::size_t horizon, const RewardSpec& spec) {
    if (policy.size() != model.n_states)
        throw ContractError("policy_evaluation: policy has the wrong number of states");
    const auto reached = reachable_under(model, horizon, [&](std::size_t s, std::size_t a) {
        return policy[s] == a;
    });
    for (std::size_t s = 0; s < model.n_states; ++s) {
        if (!reached[s] || model.terminal[s]) continue;
        if (policy[s] == kNoAction)
            throw ContractError("policy_evaluation: policy undefined at reachable joint state " +
                                std::to_string(s));
        if (policy[s] >= model.n_actions)
            throw ContractError("policy_evaluation: action index out of range at state " +
                                std::to_string(s));
    }

    const auto reward = expected_reward(model, spec);
    std::vector<double> v(model.n_states, 0.0), next(model.n_states, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) {
        for (std::size_t s = 0; s < model.n_states; ++s) {
            const std::size_t a = policy[s];
            if (model.terminal[s] || a >= model.n_actions) {
                next[s] = 0.0;
                continue;
            }
            next[s] = backup(model, reward, v, s, a);
        }
        std::swap(v, next);
    }
    return v;
}

double policy_evaluation(const JointModel& model, const DeterministicPolicy& policy,
                         std::size_t horizon, const RewardSpec& spec) {
    const auto v = policy_state_values(model, policy, horizon, spec);
    double ret = 0.0;
    for (std::size_t s = 0; s < model.n_states; ++s) ret += model.initial[s] * v[s];
    return ret;
}

double policy_evaluation(const JointModel& model, const StochasticPolicy& policy,
                         std::size_t horizon, const RewardSpec& spec) {
    if (policy.n_states != model.n_states || policy.n_actions != model.n_actions ||
        policy.probs.size() != model.n_states * model.n_actions)
        throw ContractError("policy_evaluation: stochastic policy has the wrong shape");
    const auto reached = reachable_under(model, horizon, [&](std::size_t s, std::size_t a) {
        return policy.probs[s * model.n_actions + a] > 0.0;
    });
    for (std::size_t s = 0; s < model.n_states; ++s) {
        if (!reached[s] || model.terminal[s]) continue;
        double sum = 0.0;
        for (std::size_t a = 0; a < model.n_actions; ++a) sum += policy.probs[s * model.n_actions + a];
        if (std::abs(sum - 1.0) > 1e-9)
            throw ContractError("policy_evaluation: policy undefined at reachable joint state " +
                                std::to_string(s));
    }

    const auto reward = expected_reward(model, spec);
    std::vector<double> v(model.n_states, 0.0), next(model.n_states, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) {
        for (std::size_t s = 0; s < model.n_states; ++s) {
            next[s] = 0.0;
            if (model.terminal[s]) continue;
            for (std::size_t a = 0; a < model.n_actions; ++a) {
                const double pa = policy.probs[s * model.n_actions + a];
                if (pa > 0.0) next[s] += pa * backup(model, reward, v, s, a);
            }
        }
        std::swap(v, next);
    }
    double ret = 0.0;
    for (std::size_t s = 0; s < model.n_states; ++s) ret += model.initial[s] * v[s];
    return ret;
}

} // namespace monmdp
