#include "monmdp/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace monmdp {

std::string to_string(Label label) {
    switch (label) {
    case Label::Trivial: return "trivial";
    case Label::Hopeless: return "hopeless";
    case Label::SolvableByProp1: return "solvable";
    case Label::NonHopelessUnknown: return "non-hopeless-unknown";
    }
    return "?";
}

std::vector<char> reachable_joint_states(const MonMdp& mdp) {
    const JointModel model = build_joint_model(mdp);
    std::vector<char> seen(model.n_states, 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < model.n_states; ++s)
        if (model.initial[s] > 0.0) {
            seen[s] = 1;
            stack.push_back(s);
        }
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        if (model.terminal[s]) continue;
        for (std::size_t a = 0; a < model.n_actions; ++a)
            for (const auto& succ : model.successors[model.sa(s, a)])
                if (!seen[succ.state]) {
                    seen[succ.state] = 1;
                    stack.push_back(succ.state);
                }
    }
    return seen;
}

namespace {

// Calls fn for every transition tuple that can occur from a reachable,
// non-terminal joint state.
void for_each_feasible(const MonMdp& mdp, const std::vector<char>& reachable,
                       const std::function<void(const MonitorInput&)>& fn) {
    const EnvModel& env = mdp.env;
    const MonitorModel& mon = mdp.monitor;
    for (std::size_t s = 0; s < reachable.size(); ++s) {
        if (!reachable[s]) continue;
        const JointState js = mdp.joint_state(s);
        if (env.is_terminal(js.env)) continue;
        for (std::size_t ae = 0; ae < env.n_actions; ++ae)
            for (std::size_t am = 0; am < mon.n_actions; ++am)
                for (std::size_t m2 = 0; m2 < mon.n_states; ++m2) {
                    if (mon.p(js.mon, js.env, am, ae, m2) <= 0.0) continue;
                    for (std::size_t se2 = 0; se2 < env.n_states; ++se2)
                        if (env.p(js.env, ae, se2) > 0.0) fn({js.env, ae, se2, js.mon, am, m2});
                }
    }
}

std::vector<double> reward_samples(const EnvModel& env, std::size_t se, std::size_t ae) {
    const auto [lo, hi] = env.reward_bounds;
    const double mean = env.r(se, ae);
    std::vector<double> v = {lo, hi, mean, 0.5 * (lo + hi), 0.0, lo + 0.25 * (hi - lo)};
    if (env.reward_noise_sd > 0.0)
        for (double k : {-2.0, -1.0, 1.0, 2.0}) v.push_back(mean + k * env.reward_noise_sd);
    return v;
}

bool strongly_connected(const std::vector<std::vector<std::size_t>>& adj, const std::vector<std::size_t>& nodes) {
    if (nodes.empty()) return true;
    const std::size_t n = adj.size();
    std::vector<std::vector<std::size_t>> radj(n);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v : adj[u]) radj[v].push_back(u);
    auto covers = [&](const std::vector<std::vector<std::size_t>>& g) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{nodes.front()};
        seen[nodes.front()] = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v : g[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
        }
        return std::all_of(nodes.begin(), nodes.end(), [&](std::size_t u) { return seen[u] != 0; });
    };
    return covers(adj) && covers(radj);
}

} // namespace

PropertyReport check_properties(const MonMdp& mdp) {
    PropertyReport report;
    const JointModel model = build_joint_model(mdp);
    const auto reachable = reachable_joint_states(mdp);

    // Property 1 on the restart chain.
    std::vector<std::size_t> starts, nodes;
    for (std::size_t s = 0; s < model.n_states; ++s) {
        if (model.initial[s] > 0.0) starts.push_back(s);
        if (reachable[s] && !model.terminal[s]) nodes.push_back(s);
    }
    std::vector<std::vector<std::size_t>> adj(model.n_states);
    for (std::size_t s : nodes)
        for (std::size_t a = 0; a < model.n_actions; ++a)
            for (const auto& succ : model.successors[model.sa(s, a)]) {
                if (model.terminal[succ.state])
                    adj[s].insert(adj[s].end(), starts.begin(), starts.end());
                else
                    adj[s].push_back(succ.state);
            }
    report.joint_ergodic = strongly_connected(adj, nodes);

    // Properties 2 and 3 over every feasible tuple.
    report.truthful = true;
    std::set<std::pair<std::size_t, std::size_t>> visited;
    for_each_feasible(mdp, reachable, [&](const MonitorInput& in) {
        visited.insert({in.env_state, in.env_action});
        for (double r : reward_samples(mdp.env, in.env_state, in.env_action)) {
            const Proxy p = mdp.monitor.monitor_fn(r, in);
            if (!p.observed()) continue;
            report.observable_pairs.insert({in.env_state, in.env_action});
            if (p.get() != r) report.truthful = false;
        }
    });
    for (const auto& pair : visited)
        if (!report.observable_pairs.contains(pair)) report.unobservable_pairs.insert(pair);
    report.monitor_fn_ergodic = report.unobservable_pairs.empty() && !visited.empty();
    return report;
}

bool has_positive_monitor_reward(const MonMdp& mdp) {
    bool positive = false;
    for_each_feasible(mdp, reachable_joint_states(mdp), [&](const MonitorInput& in) {
        if (mdp.monitor.reward(in) > 0.0) positive = true;
    });
    return positive;
}

namespace {

bool is_trivial(const MonMdp& mdp) {
    bool trivial = true;
    for_each_feasible(mdp, reachable_joint_states(mdp), [&](const MonitorInput& in) {
        if (!trivial) return;
        if (mdp.monitor.reward(in) != 0.0) {
            trivial = false;
            return;
        }
        for (double r : reward_samples(mdp.env, in.env_state, in.env_action)) {
            const Proxy p = mdp.monitor.monitor_fn(r, in);
            if (!p.observed() || p.get() != r) {
                trivial = false;
                return;
            }
        }
    });
    return trivial;
}

std::vector<std::vector<std::size_t>> optimal_action_sets(const JointModel& model, const QTable& q, double tol) {
    std::vector<std::vector<std::size_t>> sets(model.n_states);
    for (std::size_t s = 0; s < model.n_states; ++s) {
        if (model.terminal[s]) continue;
        const double best = q.max(s);
        for (std::size_t a = 0; a < model.n_actions; ++a)
            if (q(s, a) >= best - tol * std::max(1.0, std::abs(best))) sets[s].push_back(a);
    }
    return sets;
}

} // namespace

bool check_invariant(const MonMdp& mdp, double tol) {
    const JointModel model = build_joint_model(mdp);
    const auto joint = value_iteration(model, RewardSpec::joint());
    // The environment reward does not depend on the monitor, so env-only VI
    // on the joint chain yields Q^E* replicated over monitor components.
    const auto env_only = value_iteration(model, RewardSpec::env_only());
    const auto joint_sets = optimal_action_sets(model, joint.q, tol);
    const auto env_sets = optimal_action_sets(model, env_only.q, tol);
    const std::size_t nam = mdp.monitor.n_actions;

    std::vector<char> env_greedy(model.n_states * mdp.env.n_actions, 0);
    for (std::size_t s = 0; s < model.n_states; ++s)
        for (std::size_t a : env_sets[s]) env_greedy[s * mdp.env.n_actions + a / nam] = 1;

    // Walk the states reachable under joint-optimal actions; each needs an
    // optimal action with an env-greedy environment component.
    std::vector<char> seen(model.n_states, 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < model.n_states; ++s)
        if (model.initial[s] > 0.0) {
            seen[s] = 1;
            stack.push_back(s);
        }
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        if (model.terminal[s]) continue;
        bool witness = false;
        for (std::size_t a : joint_sets[s]) witness = witness || env_greedy[s * mdp.env.n_actions + a / nam];
        if (!witness) return false;
        for (std::size_t a : joint_sets[s])
            for (const auto& succ : model.successors[model.sa(s, a)])
                if (!seen[succ.state]) {
                    seen[succ.state] = 1;
                    stack.push_back(succ.state);
                }
    }
    return true;
}

Classification classify(const MonMdp& mdp) {
    Classification c;
    c.instance = mdp.name;
    c.properties = check_properties(mdp);
    const auto& p = c.properties;
    if (is_trivial(mdp)) {
        c.label = Label::Trivial;
    } else if (p.observable_pairs.empty()) {
        c.label = Label::Hopeless;
    } else if (p.joint_ergodic && p.monitor_fn_ergodic && p.truthful) {
        c.label = Label::SolvableByProp1;
    } else {
        c.label = Label::NonHopelessUnknown;
    }

    std::ostringstream notes;
    if (c.label != Label::Hopeless) c.invariant = check_invariant(mdp);
    if (!p.unobservable_pairs.empty())
        notes << p.unobservable_pairs.size() << " reachable env state-action pair(s) never observable. ";
    if (c.label == Label::NonHopelessUnknown)
        notes << "Solvability is not decided by these sufficient checks.";
    c.notes = notes.str();

    c.summary.dimensionality = mdp.monitor.n_states * mdp.monitor.n_actions;
    c.summary.explicit_monitor_actions = mdp.monitor.n_actions > 1;
    c.summary.invariant = c.invariant.value_or(false);
    c.summary.positive_monitor_rewards = has_positive_monitor_reward(mdp);
    return c;
}

MinimaxResult minimax_plan(const MonMdp& mdp, std::optional<double> r_min) {
    const double floor = r_min.value_or(mdp.env.reward_bounds.first);
    const auto report = check_properties(mdp);
    std::vector<double> table = mdp.env.reward_mean;
    for (const auto& [s, a] : report.unobservable_pairs) table[s * mdp.env.n_actions + a] = floor;

    const JointModel model = build_joint_model(mdp);
    const RewardSpec spec = RewardSpec::custom(table);
    const auto plan = value_iteration(model, spec);
    MinimaxResult result;
    result.policy = plan.greedy;
    result.pessimistic_return = policy_evaluation(model, plan.greedy, mdp.horizon, spec);
    result.true_return = policy_evaluation(model, plan.greedy, mdp.horizon);
    result.substituted_pairs = report.unobservable_pairs;
    return result;
}

std::string format_classification(const Classification& c) {
    auto yn = [](bool b) { return b ? "yes" : "no"; };
    std::ostringstream out;
    out << "instance:                 " << c.instance << '\n'
        << "label:                    " << to_string(c.label) << '\n'
        << "joint ergodic:            " << yn(c.properties.joint_ergodic) << '\n'
        << "monitor fn ergodic:       " << yn(c.properties.monitor_fn_ergodic) << '\n'
        << "truthful:                 " << yn(c.properties.truthful) << '\n'
        << "observable pairs:         " << c.properties.observable_pairs.size() << '\n'
        << "invariant:                " << (c.invariant ? yn(*c.invariant) : "n/a") << '\n'
        << "dimensionality |SMxAM|:   " << c.summary.dimensionality << '\n'
        << "explicit monitor actions: " << yn(c.summary.explicit_monitor_actions) << '\n'
        << "positive monitor rewards: " << yn(c.summary.positive_monitor_rewards) << '\n';
    if (!c.notes.empty()) out << "notes:                    " << c.notes << '\n';
    return out.str();
}

std::string classification_csv_header() {
    return "instance,label,truthful,joint_ergodic,monitor_fn_ergodic,invariant,dimensionality,"
           "explicit_monitor_actions,positive_monitor_rewards";
}

std::string classification_csv_row(const Classification& c) {
    std::ostringstream out;
    out << c.instance << ',' << to_string(c.label) << ',' << c.properties.truthful << ','
        << c.properties.joint_ergodic << ',' << c.properties.monitor_fn_ergodic << ','
        << (c.invariant ? std::to_string(*c.invariant) : std::string()) << ',' << c.summary.dimensionality << ','
        << c.summary.explicit_monitor_actions << ',' << c.summary.positive_monitor_rewards;
    return out.str();
}

} // namespace monmdp
