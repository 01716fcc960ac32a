#pragma once

// Decidable checks on finite Mon-MDPs: reachability-based ergodicity,
// observability of environment rewards, truthfulness, invariance, and a
// worst-case planner for rewards that are never observable.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "monmdp/core.hpp"

namespace monmdp {

enum class Label { Trivial, Hopeless, SolvableByProp1, NonHopelessUnknown };
std::string to_string(Label label);

struct PropertyReport {
    bool joint_ergodic = false;
    bool monitor_fn_ergodic = false;
    bool truthful = false;
    std::set<std::pair<std::size_t, std::size_t>> observable_pairs;   // reachable and observable
    std::set<std::pair<std::size_t, std::size_t>> unobservable_pairs; // reachable, never observable
};

/// Joint ergodicity is tested on the restart chain: transitions into a
/// terminal state are redirected to the initial distribution, and only
/// reachable non-terminal joint states count.
PropertyReport check_properties(const MonMdp& mdp);

/// Joint states reachable from the initial distribution under any actions.
std::vector<char> reachable_joint_states(const MonMdp& mdp);

struct MonitorSummary {
    std::size_t dimensionality = 0; // |S^M| * |A^M|
    bool explicit_monitor_actions = false;
    bool invariant = false;
    bool positive_monitor_rewards = false;
};

struct Classification {
    std::string instance;
    PropertyReport properties;
    Label label = Label::NonHopelessUnknown;
    std::optional<bool> invariant;
    MonitorSummary summary;
    std::string notes;
};

Classification classify(const MonMdp& mdp);

/// True iff some joint-optimal deterministic policy picks, at every joint
/// state it reaches, an environment action that is optimal for the
/// environment MDP alone.
bool check_invariant(const MonMdp& mdp, double tol = 1e-9);

bool has_positive_monitor_reward(const MonMdp& mdp);

struct MinimaxResult {
    DeterministicPolicy policy;
    double pessimistic_return = 0.0; // under the substituted rewards
    double true_return = 0.0;        // the same policy under the real rewards
    std::set<std::pair<std::size_t, std::size_t>> substituted_pairs;
};

/// Replaces the reward of every reachable, never-observable (s^E, a^E) with
/// `r_min` (default: the lower reward bound) and plans on the result.
MinimaxResult minimax_plan(const MonMdp& mdp, std::optional<double> r_min = std::nullopt);

std::string format_classification(const Classification& c);
std::string classification_csv_header();
std::string classification_csv_row(const Classification& c);

} // namespace monmdp
