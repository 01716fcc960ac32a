#pragma once

// Finite Monitored MDPs: an environment MDP paired with a monitor process that
// decides whether the agent sees the environment reward. This header holds the
// data model, the simulation step and the exact planners (value iteration and
// finite-horizon policy evaluation) that every other module uses as ground
// truth.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "monmdp/rng.hpp"

namespace monmdp {

/// Broken precondition on an index or argument. Never silently clamped.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A model that violates one of its invariants. The message names the
/// failing constraint.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// What the agent sees in place of the environment reward: a value, or the
/// unobservable marker.
class Proxy {
public:
    static Proxy value(double v) { return Proxy(v); }
    static Proxy unobservable() { return Proxy(); }

    bool observed() const noexcept { return value_.has_value(); }
    double get() const {
        if (!value_) throw ContractError("Proxy::get on an unobservable reward");
        return *value_;
    }

    friend bool operator==(const Proxy&, const Proxy&) = default;

private:
    Proxy() = default;
    explicit Proxy(double v) : value_(v) {}
    std::optional<double> value_;
};

struct JointState {
    std::size_t env = 0;
    std::size_t mon = 0;
    friend bool operator==(const JointState&, const JointState&) = default;
};

struct JointAction {
    std::size_t env = 0;
    std::size_t mon = 0;
    friend bool operator==(const JointAction&, const JointAction&) = default;
};

struct EnvModel {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;   // [s][a][s']
    std::vector<double> reward_mean;  // [s][a]
    double reward_noise_sd = 0.0;
    std::vector<char> terminal;       // [s]
    std::vector<double> initial_dist; // [s]
    std::pair<double, double> reward_bounds{0.0, 0.0};
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;

    double p(std::size_t s, std::size_t a, std::size_t next) const {
        return transition[(s * n_actions + a) * n_states + next];
    }
    double& p(std::size_t s, std::size_t a, std::size_t next) {
        return transition[(s * n_actions + a) * n_states + next];
    }
    double r(std::size_t s, std::size_t a) const { return reward_mean[s * n_actions + a]; }
    double& r(std::size_t s, std::size_t a) { return reward_mean[s * n_actions + a]; }
    bool is_terminal(std::size_t s) const { return terminal[s] != 0; }

    void validate() const;
};

/// Everything a monitor may condition on for one transition. The formal
/// monitor function only reads the reward, the monitor state and the monitor
/// action; the remaining fields let instances such as the button monitor and
/// the battery monitor be expressed directly.
struct MonitorInput {
    std::size_t env_state = 0;
    std::size_t env_action = 0;
    std::size_t next_env_state = 0;
    std::size_t mon_state = 0;
    std::size_t mon_action = 0;
    std::size_t next_mon_state = 0;
};

struct MonitorModel {
    std::string kind;
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t n_env_states = 0;
    std::size_t n_env_actions = 0;
    std::vector<double> transition; // [m][se][am][ae][m']
    std::function<double(const MonitorInput&)> reward;
    std::function<Proxy(double, const MonitorInput&)> monitor_fn;
    std::vector<double> initial_dist;
    bool truthful = true;
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;

    std::size_t index(std::size_t m, std::size_t se, std::size_t am, std::size_t ae) const {
        return (((m * n_env_states + se) * n_actions + am) * n_env_actions + ae) * n_states;
    }
    double p(std::size_t m, std::size_t se, std::size_t am, std::size_t ae, std::size_t next) const {
        return transition[index(m, se, am, ae) + next];
    }
    double& p(std::size_t m, std::size_t se, std::size_t am, std::size_t ae, std::size_t next) {
        return transition[index(m, se, am, ae) + next];
    }

    void validate() const;
};

/// Environment + monitor + discount. Immutable after construction in
/// practice; share it read-only across runs.
struct MonMdp {
    std::string name;
    EnvModel env;
    MonitorModel monitor;
    double gamma = 0.99;
    std::size_t horizon = 50;
    // Rendering metadata for gridworld instances; 0 when not a grid.
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;

    std::size_t n_joint_states() const { return env.n_states * monitor.n_states; }
    std::size_t n_joint_actions() const { return env.n_actions * monitor.n_actions; }
    std::size_t state_index(JointState s) const { return s.env * monitor.n_states + s.mon; }
    std::size_t action_index(JointAction a) const { return a.env * monitor.n_actions + a.mon; }
    JointState joint_state(std::size_t i) const {
        return {i / monitor.n_states, i % monitor.n_states};
    }
    JointAction joint_action(std::size_t i) const {
        return {i / monitor.n_actions, i % monitor.n_actions};
    }

    /// Checks every env, monitor and Mon-MDP invariant; throws ValidationError.
    void validate() const;
};

/// One interaction record. The hidden reward is carried for the oracle and
/// for tests; learners only ever see an AgentStep (see agents.hpp).
struct ObservedStep {
    JointState state;
    JointAction action;
    Proxy proxy = Proxy::unobservable();
    double mon_reward = 0.0;
    double hidden_env_reward = 0.0;
    JointState next_state;
    bool terminal = false;
};

JointState sample_initial_state(const MonMdp& mdp, Rng& rng);

/// Samples one transition of the joint process. The same reward draw feeds
/// the hidden reward and the monitor function.
ObservedStep step(const MonMdp& mdp, JointState state, JointAction action, Rng& rng);

/// Dense joint transition table indexed [joint s][joint a][joint s'].
std::vector<double> joint_transition(const MonMdp& mdp);

/// Sparse planning view of the joint chain with expected rewards.
struct JointModel {
    struct Successor {
        std::uint32_t state;
        double prob;
    };

    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t n_env_states = 0;
    std::size_t n_env_actions = 0;
    std::size_t n_mon_states = 0;
    std::size_t n_mon_actions = 0;
    double gamma = 0.99;
    std::size_t horizon = 50;
    std::vector<std::vector<Successor>> successors; // [s * n_actions + a]
    std::vector<double> env_reward;                 // expected r^E, [s * n_actions + a]
    std::vector<double> mon_reward;                 // expected r^M, [s * n_actions + a]
    std::vector<char> terminal;                     // [s]
    std::vector<double> initial;                    // [s]

    std::size_t sa(std::size_t s, std::size_t a) const { return s * n_actions + a; }
};

JointModel build_joint_model(const MonMdp& mdp);

/// Joint-state x joint-action table (row-major).
struct QTable {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> values;

    QTable() = default;
    QTable(std::size_t states, std::size_t actions, double init = 0.0)
        : n_states(states), n_actions(actions), values(states * actions, init) {}

    double operator()(std::size_t s, std::size_t a) const { return values[s * n_actions + a]; }
    double& operator()(std::size_t s, std::size_t a) { return values[s * n_actions + a]; }
    double max(std::size_t s) const;
};

enum class RewardMode {
    Joint,       // r^E + E[r^M]
    EnvOnly,     // r^E alone
    CustomTable, // caller-supplied env reward table + E[r^M]
};

struct RewardSpec {
    RewardMode mode = RewardMode::Joint;
    std::vector<double> custom_env_reward; // [se][ae], CustomTable only

    static RewardSpec joint() { return {}; }
    static RewardSpec env_only() { return {RewardMode::EnvOnly, {}}; }
    static RewardSpec custom(std::vector<double> table) {
        return {RewardMode::CustomTable, std::move(table)};
    }
};

/// Per-(joint state, joint action) expected reward for a reward spec.
std::vector<double> expected_reward(const JointModel& model, const RewardSpec& spec);

inline constexpr std::size_t kNoAction = std::numeric_limits<std::size_t>::max();

/// Joint action index per joint state; kNoAction where undefined.
using DeterministicPolicy = std::vector<std::size_t>;

/// Row-major [joint state][joint action] probabilities.
struct StochasticPolicy {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> probs;
};

struct PlanResult {
    QTable q;
    DeterministicPolicy greedy;
    double optimal_return = 0.0;
    double residual = 0.0;
    std::size_t iterations = 0;
};

/// Infinite-horizon value iteration on the joint chain. Terminal states have
/// value 0. `optimal_return` is the horizon-truncated expected return of the
/// greedy policy from the initial distribution.
PlanResult value_iteration(const JointModel& model, const RewardSpec& spec, double tol = 1e-10,
                           std::size_t max_iterations = 1'000'000);
PlanResult value_iteration(const MonMdp& mdp, const RewardSpec& spec = RewardSpec::joint(),
                           double tol = 1e-10);

/// sup-norm of Q - T(Q) under the given reward spec.
double bellman_residual(const JointModel& model, const RewardSpec& spec, const QTable& q);

/// Greedy joint actions of q; ties resolve to the lowest index.
DeterministicPolicy greedy_policy(const JointModel& model, const QTable& q);

/// Exact expected discounted return over `horizon` steps from the initial
/// distribution, noise off. Throws ContractError if the policy is undefined at
/// a state it reaches.
double policy_evaluation(const JointModel& model, const DeterministicPolicy& policy,
                         std::size_t horizon, const RewardSpec& spec = RewardSpec::joint());
double policy_evaluation(const JointModel& model, const StochasticPolicy& policy,
                         std::size_t horizon, const RewardSpec& spec = RewardSpec::joint());

/// Same, returning the value of every joint state instead of the initial mix.
std::vector<double> policy_state_values(const JointModel& model, const DeterministicPolicy& policy,
                                        std::size_t horizon,
                                        const RewardSpec& spec = RewardSpec::joint());

} // namespace monmdp
