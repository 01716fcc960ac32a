#pragma once

// Tabular learners for Mon-MDPs. They differ only in how an unobservable
// proxy reward enters the Q-update and, for Joint/Sequential, in how the
// monitor part of the value is kept apart.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "monmdp/core.hpp"
#include "monmdp/rng.hpp"

namespace monmdp {

enum class AgentKind { Oracle, ConstantAssign, Ignore, Joint, Sequential, RewardModel };

std::string to_string(AgentKind kind);
/// Accepts the names printed by to_string (case-insensitive, '-' or '_').
AgentKind parse_agent_kind(const std::string& name);
const std::vector<AgentKind>& all_agent_kinds();

struct AgentConfig {
    AgentKind kind = AgentKind::RewardModel;
    double q_init = -10.0;
    double alpha = 1.0;
    double gamma = 0.99;
    double unobservable_value = 0.0; // ConstantAssign only
    bool use_reward_model_in_oracle = false;

    void validate() const;
};

/// Linear decay from 1 at step 0 to 0 at `total`.
struct Schedule {
    std::size_t total = 1;
    double epsilon(std::size_t t) const {
        if (t >= total) return 0.0;
        return 1.0 - static_cast<double>(t) / static_cast<double>(total);
    }
};

/// Sample mean of observed rewards per (env state, env action). Keeps the
/// running sum so the mean is exact whenever the sum is.
class RewardModelTable {
public:
    RewardModelTable() = default;
    RewardModelTable(std::size_t n_states, std::size_t n_actions, double init = 0.0)
        : n_actions_(n_actions), init_(init), sums_(n_states * n_actions, 0.0), counts_(n_states * n_actions, 0) {}

    void observe(std::size_t s, std::size_t a, double value) {
        const std::size_t i = s * n_actions_ + a;
        ++counts_[i];
        sums_[i] += value;
    }
    double mean(std::size_t s, std::size_t a) const {
        const std::size_t i = s * n_actions_ + a;
        return counts_[i] ? sums_[i] / static_cast<double>(counts_[i]) : init_;
    }
    std::uint64_t count(std::size_t s, std::size_t a) const { return counts_[s * n_actions_ + a]; }

private:
    std::size_t n_actions_ = 0;
    double init_ = 0.0;
    std::vector<double> sums_;
    std::vector<std::uint64_t> counts_;
};

/// What a learner may see of one transition: no hidden reward.
struct AgentStep {
    JointState state;
    JointAction action;
    Proxy proxy = Proxy::unobservable();
    double mon_reward = 0.0;
    JointState next_state;
    bool terminal = false;
};

AgentStep visible_part(const ObservedStep& step);

/// Fixed random ranking used to break greedy ties reproducibly.
struct TiePriority {
    std::vector<std::uint64_t> joint; // per joint action
    std::vector<std::uint64_t> env;   // per env action
    std::vector<std::uint64_t> mon;   // per monitor action

    static TiePriority draw(const MonMdp& mdp, Rng& rng);
};

class Agent {
public:
    Agent(const MonMdp& mdp, AgentConfig config);

    const AgentConfig& config() const { return config_; }

    /// epsilon-greedy; greedy ties broken uniformly at random.
    JointAction act(JointState state, double epsilon, Rng& rng) const;
    JointAction greedy(JointState state, Rng& rng) const;
    /// Greedy with ties resolved by the fixed ranking.
    JointAction greedy(JointState state, const TiePriority& ties) const;
    DeterministicPolicy greedy_policy(const TiePriority& ties) const;

    /// Learner update. Throws ContractError for the Oracle, which must be fed
    /// through update_oracle.
    void update(const AgentStep& step, Rng& rng);
    /// Oracle update with the hidden reward; other kinds ignore the hidden
    /// field and behave as update().
    void update_oracle(const ObservedStep& step, Rng& rng);

    /// Single-table kinds: Q over joint states and actions.
    const QTable& q() const { return q_; }
    /// Joint/Sequential: Q^E over [env state][env action].
    const QTable& q_env() const { return q_env_; }
    /// Joint/Sequential: Q^M over [env state * env actions + env action][mon state * mon actions + mon action].
    const QTable& q_mon() const { return q_mon_; }
    double q_mon(std::size_t se, std::size_t ae, std::size_t m, std::size_t am) const {
        return q_mon_(se * n_ae_ + ae, m * n_am_ + am);
    }
    const RewardModelTable& reward_model() const { return reward_model_; }

    /// Value the agent's greedy action selection maximizes for (state, action).
    double action_value(JointState state, JointAction action) const;

private:
    bool two_tables() const {
        return config_.kind == AgentKind::Joint || config_.kind == AgentKind::Sequential;
    }
    void q_learning_update(const AgentStep& step, double env_reward);
    void two_table_update(const AgentStep& step, Rng& rng);
    std::size_t sequential_env_choice(std::size_t se, Rng* rng, const TiePriority* ties) const;

    AgentConfig config_;
    std::size_t n_se_, n_ae_, n_m_, n_am_;
    QTable q_;
    QTable q_env_;
    QTable q_mon_;
    RewardModelTable reward_model_;
};

} // namespace monmdp
