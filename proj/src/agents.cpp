#include "monmdp/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace monmdp {

namespace {

constexpr double kTieTol = 1e-12;

// Argmax over [0, n) of value(i). Ties go to a uniform draw when `rng` is
// given, otherwise to the highest entry of `priority`.
template <typename ValueFn>
std::size_t argmax(std::size_t n, ValueFn&& value, Rng* rng, const std::vector<std::uint64_t>* priority) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, value(i));
    std::size_t chosen = kNoAction;
    std::size_t ties = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (value(i) < best - kTieTol) continue;
        if (rng) {
            // Reservoir sampling over the tied set.
            ++ties;
            if (rng->index(ties) == 0) chosen = i;
        } else if (chosen == kNoAction || (*priority)[i] > (*priority)[chosen]) {
            chosen = i;
        }
    }
    return chosen;
}

} // namespace

std::string to_string(AgentKind kind) {
    switch (kind) {
    case AgentKind::Oracle: return "oracle";
    case AgentKind::ConstantAssign: return "constant-assign";
    case AgentKind::Ignore: return "ignore";
    case AgentKind::Joint: return "joint";
    case AgentKind::Sequential: return "sequential";
    case AgentKind::RewardModel: return "reward-model";
    }
    return "?";
}

AgentKind parse_agent_kind(const std::string& name) {
    std::string n;
    for (char c : name) n += c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (AgentKind k : all_agent_kinds())
        if (to_string(k) == n) return k;
    throw std::invalid_argument("unknown agent '" + name + "'");
}

const std::vector<AgentKind>& all_agent_kinds() {
    static const std::vector<AgentKind> kinds = {AgentKind::Oracle, AgentKind::RewardModel,
                                                 AgentKind::Sequential, AgentKind::Joint,
                                                 AgentKind::ConstantAssign, AgentKind::Ignore};
    return kinds;
}

void AgentConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("agent: learning rate must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("agent: gamma must lie in [0, 1)");
    if (!std::isfinite(q_init) || !std::isfinite(unobservable_value))
        throw ContractError("agent: q_init and unobservable_value must be finite");
}

AgentStep visible_part(const ObservedStep& s) {
    return {s.state, s.action, s.proxy, s.mon_reward, s.next_state, s.terminal};
}

TiePriority TiePriority::draw(const MonMdp& mdp, Rng& rng) {
    TiePriority t;
    auto fill = [&](std::vector<std::uint64_t>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.bits();
    };
    fill(t.joint, mdp.n_joint_actions());
    fill(t.env, mdp.env.n_actions);
    fill(t.mon, mdp.monitor.n_actions);
    return t;
}

Agent::Agent(const MonMdp& mdp, AgentConfig config)
    : config_(config),
      n_se_(mdp.env.n_states),
      n_ae_(mdp.env.n_actions),
      n_m_(mdp.monitor.n_states),
      n_am_(mdp.monitor.n_actions) {
    config_.validate();
    if (two_tables()) {
        q_env_ = QTable(n_se_, n_ae_, config_.q_init);
        q_mon_ = QTable(n_se_ * n_ae_, n_m_ * n_am_, config_.q_init);
    } else {
        q_ = QTable(n_se_ * n_m_, n_ae_ * n_am_, config_.q_init);
    }
    reward_model_ = RewardModelTable(n_se_, n_ae_, 0.0);
}

double Agent::action_value(JointState s, JointAction a) const {
    if (two_tables()) return q_env_(s.env, a.env) + q_mon(s.env, a.env, s.mon, a.mon);
    return q_(s.env * n_m_ + s.mon, a.env * n_am_ + a.mon);
}

std::size_t Agent::sequential_env_choice(std::size_t se, Rng* rng, const TiePriority* ties) const {
    return argmax(n_ae_, [&](std::size_t ae) { return q_env_(se, ae); }, rng, ties ? &ties->env : nullptr);
}

JointAction Agent::greedy(JointState s, Rng& rng) const {
    if (config_.kind == AgentKind::Sequential) {
        const std::size_t ae = sequential_env_choice(s.env, &rng, nullptr);
        const std::size_t am =
            argmax(n_am_, [&](std::size_t am) { return q_mon(s.env, ae, s.mon, am); }, &rng, nullptr);
        return {ae, am};
    }
    const std::size_t a = argmax(
        n_ae_ * n_am_, [&](std::size_t a) { return action_value(s, {a / n_am_, a % n_am_}); }, &rng, nullptr);
    return {a / n_am_, a % n_am_};
}

JointAction Agent::greedy(JointState s, const TiePriority& ties) const {
    if (config_.kind == AgentKind::Sequential) {
        const std::size_t ae = sequential_env_choice(s.env, nullptr, &ties);
        const std::size_t am =
            argmax(n_am_, [&](std::size_t am) { return q_mon(s.env, ae, s.mon, am); }, nullptr, &ties.mon);
        return {ae, am};
    }
    const std::size_t a = argmax(
        n_ae_ * n_am_, [&](std::size_t a) { return action_value(s, {a / n_am_, a % n_am_}); }, nullptr,
        &ties.joint);
    return {a / n_am_, a % n_am_};
}

DeterministicPolicy Agent::greedy_policy(const TiePriority& ties) const {
    DeterministicPolicy policy(n_se_ * n_m_);
    for (std::size_t s = 0; s < policy.size(); ++s) {
        const JointAction a = greedy({s / n_m_, s % n_m_}, ties);
        policy[s] = a.env * n_am_ + a.mon;
    }
    return policy;
}

JointAction Agent::act(JointState s, double epsilon, Rng& rng) const {
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        const std::size_t a = rng.index(n_ae_ * n_am_);
        return {a / n_am_, a % n_am_};
    }
    return greedy(s, rng);
}

void Agent::q_learning_update(const AgentStep& st, double env_reward) {
    const std::size_t s = st.state.env * n_m_ + st.state.mon;
    const std::size_t a = st.action.env * n_am_ + st.action.mon;
    const std::size_t next = st.next_state.env * n_m_ + st.next_state.mon;
    const double bootstrap = st.terminal ? 0.0 : q_.max(next);
    const double target = env_reward + st.mon_reward + config_.gamma * bootstrap;
    q_(s, a) = (1.0 - config_.alpha) * q_(s, a) + config_.alpha * target;
}

void Agent::two_table_update(const AgentStep& st, Rng& rng) {
    const std::size_t se = st.state.env, ae = st.action.env;
    const std::size_t se2 = st.next_state.env, m2 = st.next_state.mon;
    const double alpha = config_.alpha, gamma = config_.gamma;

    if (st.proxy.observed()) {
        const double bootstrap = st.terminal ? 0.0 : q_env_.max(se2);
        q_env_(se, ae) = (1.0 - alpha) * q_env_(se, ae) + alpha * (st.proxy.get() + gamma * bootstrap);
    }

    double bootstrap = 0.0;
    if (!st.terminal) {
        if (config_.kind == AgentKind::Joint) {
            bootstrap = -std::numeric_limits<double>::infinity();
            for (std::size_t ae2 = 0; ae2 < n_ae_; ++ae2)
                for (std::size_t am2 = 0; am2 < n_am_; ++am2)
                    bootstrap = std::max(bootstrap, q_mon(se2, ae2, m2, am2));
        } else {
            const std::size_t ae2 = sequential_env_choice(se2, &rng, nullptr);
            bootstrap = -std::numeric_limits<double>::infinity();
            for (std::size_t am2 = 0; am2 < n_am_; ++am2)
                bootstrap = std::max(bootstrap, q_mon(se2, ae2, m2, am2));
        }
    }
    double& qm = q_mon_(se * n_ae_ + ae, st.state.mon * n_am_ + st.action.mon);
    qm = (1.0 - alpha) * qm + alpha * (st.mon_reward + gamma * bootstrap);
}

void Agent::update(const AgentStep& st, Rng& rng) {
    switch (config_.kind) {
    case AgentKind::Oracle: throw ContractError("the Oracle learns through update_oracle");
    case AgentKind::ConstantAssign:
        q_learning_update(st, st.proxy.observed() ? st.proxy.get() : config_.unobservable_value);
        break;
    case AgentKind::Ignore:
        if (st.proxy.observed()) q_learning_update(st, st.proxy.get());
        break;
    case AgentKind::RewardModel:
        if (st.proxy.observed()) reward_model_.observe(st.state.env, st.action.env, st.proxy.get());
        q_learning_update(st, reward_model_.mean(st.state.env, st.action.env));
        break;
    case AgentKind::Joint:
    case AgentKind::Sequential: two_table_update(st, rng); break;
    }
}

void Agent::update_oracle(const ObservedStep& step, Rng& rng) {
    if (config_.kind != AgentKind::Oracle) {
        update(visible_part(step), rng);
        return;
    }
    const AgentStep st = visible_part(step);
    double reward = step.hidden_env_reward;
    if (config_.use_reward_model_in_oracle) {
        reward_model_.observe(st.state.env, st.action.env, reward);
        reward = reward_model_.mean(st.state.env, st.action.env);
    }
    q_learning_update(st, reward);
}

} // namespace monmdp
