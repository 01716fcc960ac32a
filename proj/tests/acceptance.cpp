// Acceptance harness: one PASS/FAIL line per criterion, details below each.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "monmdp/envs.hpp"
#include "monmdp/experiments.hpp"
#include "monmdp/taxonomy.hpp"

using namespace monmdp;

namespace {

const std::vector<std::string> kEnvs{"simple", "penalty", "button", "n-monitor", "limited-time", "limited-use"};
const std::vector<std::string> kSmall{"simple", "penalty", "button"};

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) ok = false;
        detail << "    [" << (cond ? "ok" : "FAIL") << "] " << what << "\n";
    }
};

std::string fmt(double v, int prec = 0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

// Suites are shared between criteria 1 and 2.
std::map<std::pair<std::string, AgentKind>, AggregateResult> g_det;

const AggregateResult& deterministic(const std::string& env, AgentKind k) {
    const auto key = std::make_pair(env, k);
    auto it = g_det.find(key);
    if (it == g_det.end()) it = g_det.emplace(key, run_suite(ExperimentConfig::defaults(env, k)).aggregate).first;
    return it->second;
}

void criterion1(Check& c) {
    auto at_least = [&](const std::string& env, AgentKind k, double pct) {
        const auto& a = deterministic(env, k);
        c.expect(a.percent_optimal >= pct,
                 to_string(k) + "/" + env + " " + fmt(a.percent_optimal) + "% >= " + fmt(pct) + "%");
    };
    auto at_most = [&](const std::string& env, AgentKind k, double pct) {
        const auto& a = deterministic(env, k);
        c.expect(a.percent_optimal <= pct,
                 to_string(k) + "/" + env + " " + fmt(a.percent_optimal) + "% <= " + fmt(pct) + "%");
    };
    for (const auto& e : {"simple", "penalty", "button", "n-monitor", "limited-use"})
        at_least(e, AgentKind::RewardModel, 95);
    at_least("limited-time", AgentKind::RewardModel, 90);
    for (AgentKind k : {AgentKind::Joint, AgentKind::Sequential}) {
        at_least("simple", k, 95);
        at_least("penalty", k, 95);
        at_most("button", k, 5);
    }
    at_most("n-monitor", AgentKind::Joint, 5);
    at_most("limited-use", AgentKind::Sequential, 5);
}

void criterion2(Check& c) {
    // Reference mean convergence steps per env; 0 marks cells
    // without a successful run.
    const std::map<AgentKind, std::vector<double>> reference{
        {AgentKind::Oracle, {97, 353, 612, 1568, 1911, 2157}},
        {AgentKind::RewardModel, {160, 445, 662, 2146, 2109, 2252}},
        {AgentKind::Sequential, {134, 533, 0, 1639, 2728, 0}},
        {AgentKind::Joint, {130, 535, 0, 0, 2755, 2940}},
    };
    for (const auto& [kind, means] : reference)
        for (std::size_t i = 0; i < kEnvs.size(); ++i) {
            if (means[i] == 0) continue;
            const auto& a = deterministic(kEnvs[i], kind);
            const bool ok = a.n_optimal > 0 && a.mean_steps >= 0.5 * means[i] && a.mean_steps <= 2.0 * means[i];
            c.expect(ok, to_string(kind) + "/" + kEnvs[i] + " mean " + fmt(a.mean_steps) + " in [" +
                             fmt(0.5 * means[i]) + ", " + fmt(2.0 * means[i]) + "]");
        }
    for (const auto& e : kEnvs) {
        const double o = deterministic(e, AgentKind::Oracle).mean_steps;
        const double r = deterministic(e, AgentKind::RewardModel).mean_steps;
        c.expect(o <= r, "oracle " + fmt(o) + " <= reward-model " + fmt(r) + " on " + e);
    }
}

void criterion3(Check& c) {
    for (const auto& e : kEnvs) {
        const auto o = run_suite(ExperimentConfig::defaults(e, AgentKind::Oracle, true)).aggregate;
        const auto r = run_suite(ExperimentConfig::defaults(e, AgentKind::RewardModel, true)).aggregate;
        if (std::find(kSmall.begin(), kSmall.end(), e) != kSmall.end())
            c.expect(r.percent_optimal >= 90, "noisy reward-model/" + e + " " + fmt(r.percent_optimal) + "% >= 90%");
        const double ratio = r.mean_steps / o.mean_steps;
        c.expect(ratio >= 1.3 && ratio <= 3.5, "noisy " + e + " steps reward-model " + fmt(r.mean_steps) +
                                                   " / oracle " + fmt(o.mean_steps) + " = " + fmt(ratio, 2) +
                                                   " in [1.3, 3.5]");
    }
}

void criterion4(Check& c) {
    {
        // ConstantAssign(0) on Penalty: the learned greedy path enters a
        // penalty cell while the monitor is not asked.
        ExperimentConfig cfg = ExperimentConfig::defaults("penalty", AgentKind::ConstantAssign);
        cfg.agent.unobservable_value = 0.0;
        const auto ctx = ExperimentContext::build(cfg);
        const auto layout = grid_layout_of("penalty");
        std::size_t crossing = 0;
        const std::size_t seeds = 20;
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            const auto run = train(ctx, cfg, seed);
            Rng rng(seed);
            JointState s = sample_initial_state(ctx.mdp, rng);
            bool crossed = false;
            for (std::size_t t = 0; t < ctx.mdp.horizon && !ctx.mdp.env.is_terminal(s.env); ++t) {
                const JointAction a = ctx.mdp.joint_action(run.result.final_policy[ctx.mdp.state_index(s)]);
                const auto o = step(ctx.mdp, s, a, rng);
                for (const auto& p : layout->penalty_cells)
                    if (o.next_state.env == layout->index(p) && a.mon == 1) crossed = true;
                s = o.next_state;
            }
            if (crossed) ++crossing;
        }
        c.expect(crossing * 2 > seeds,
                 "constant-assign(0)/penalty crosses a penalty cell unmonitored in " + std::to_string(crossing) +
                     "/" + std::to_string(seeds) + " seeds");
    }
    {
        // Ignore on Simple: greedy monitor action is ASK in every reachable
        // non-terminal state.
        const ExperimentConfig cfg = ExperimentConfig::defaults("simple", AgentKind::Ignore);
        const auto ctx = ExperimentContext::build(cfg);
        const auto reach = reachable_joint_states(ctx.mdp);
        std::size_t all_ask = 0;
        const std::size_t seeds = 20;
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            const auto run = train(ctx, cfg, seed);
            bool ok = true;
            for (std::size_t s = 0; s < ctx.mdp.n_joint_states(); ++s) {
                if (!reach[s] || ctx.mdp.env.is_terminal(ctx.mdp.joint_state(s).env)) continue;
                if (ctx.mdp.joint_action(run.result.final_policy[s]).mon != 0) ok = false;
            }
            if (ok) ++all_ask;
        }
        c.expect(all_ask == seeds,
                 "ignore/simple asks in every state in " + std::to_string(all_ask) + "/" + std::to_string(seeds) +
                     " seeds");
    }
    {
        enum { kGoA = 0, kStay = 1, kGoC = 2 };
        ExperimentConfig cfg = ExperimentConfig::defaults("chain-joint", AgentKind::Joint);
        const auto ctx = ExperimentContext::build(cfg);
        std::size_t matches = 0;
        const std::size_t seeds = 20, b = 1;
        for (std::uint64_t seed = 0; seed < seeds; ++seed) {
            const auto run = train(ctx, cfg, seed);
            const Agent& a = run.agent;
            Rng rng(seed);
            const bool stays = a.greedy({b, 0}, rng).env == kStay;
            std::size_t env_arg = 0, mon_arg = 0;
            for (std::size_t x = 1; x < 3; ++x) {
                if (a.q_env()(b, x) > a.q_env()(b, env_arg)) env_arg = x;
                if (a.q_mon(b, x, 0, 0) > a.q_mon(b, mon_arg, 0, 0)) mon_arg = x;
            }
            if (stays && env_arg == kGoA && mon_arg == kGoC) ++matches;
        }
        c.expect(matches == seeds, "joint/chain stays in B while Q^E picks GO-A and Q^M picks GO-C in " +
                                       std::to_string(matches) + "/" + std::to_string(seeds) + " seeds");
    }
}

void criterion5(Check& c) {
    ExperimentConfig base = ExperimentConfig::defaults("simple", AgentKind::ConstantAssign);
    for (const auto& s : ablation_unobservable_value({-10.0, 0.0, 1.0}, kSmall, base))
        c.expect(s.aggregate.percent_optimal == 0.0, "constant-assign(" + fmt(s.config.agent.unobservable_value) +
                                                          ")/" + s.config.env + " " +
                                                          fmt(s.aggregate.percent_optimal) + "% == 0%");
    for (const auto& s : ablation_qinit({1.0}, {"simple", "penalty"}, {AgentKind::Joint, AgentKind::Ignore}, base)) {
        if (s.config.agent.kind == AgentKind::Joint) {
            c.expect(s.aggregate.n_optimal == 0, "joint q_init=1 on " + s.config.env + " " +
                                                     fmt(s.aggregate.percent_optimal) + "% == 0%");
            continue;
        }
        const auto ctx = ExperimentContext::build(s.config);
        const auto reach = reachable_joint_states(ctx.mdp);
        std::size_t monitoring = 0;
        for (const auto& r : s.runs)
            for (std::size_t j = 0; j < ctx.mdp.n_joint_states(); ++j)
                if (reach[j] && !ctx.mdp.env.is_terminal(ctx.mdp.joint_state(j).env) &&
                    ctx.mdp.joint_action(r.final_policy[j]).mon == 0)
                    ++monitoring;
        c.expect(monitoring == 0, "ignore q_init=1 on " + s.config.env + ": " + std::to_string(monitoring) +
                                      " greedy ASK choices across seeds");
    }
}

void criterion6(Check& c) {
    struct Row {
        const char* name;
        std::size_t dim;
        bool explicit_actions, invariant;
    };
    for (const Row& r : {Row{"simple", 2, true, true}, Row{"penalty", 2, true, true}, Row{"button", 2, false, false},
                         Row{"n-monitor", 25, true, true}, Row{"limited-time", 2, false, true},
                         Row{"limited-use", 36, true, false}}) {
        const auto cl = classify(make_env(r.name));
        c.expect(cl.summary.dimensionality == r.dim, std::string(r.name) + " dimensionality " +
                                                        std::to_string(cl.summary.dimensionality) +
                                                        " == " + std::to_string(r.dim));
        c.expect(cl.summary.explicit_monitor_actions == r.explicit_actions,
                 std::string(r.name) + " explicit monitor actions flag");
        c.expect(cl.summary.invariant == r.invariant, std::string(r.name) + " invariance flag");
        c.expect(cl.label == Label::SolvableByProp1, std::string(r.name) + " satisfies all three properties");
    }
    c.expect(classify(make_identity_grid()).label == Label::Trivial, "identity monitor is trivial");
    c.expect(classify(make_hopeless_grid()).label == Label::Hopeless, "all-unobservable instance is hopeless");

    const MonMdp m = make_single_blind_grid();
    const auto plan = minimax_plan(m);
    const auto layout = grid_layout_of("single-blind");
    Rng rng(0);
    JointState s = sample_initial_state(m, rng);
    bool touched = false;
    for (std::size_t t = 0; t < m.horizon && !m.env.is_terminal(s.env); ++t) {
        s = step(m, s, m.joint_action(plan.policy[m.state_index(s)]), rng).next_state;
        if (s.env == layout->index({0, 1})) touched = true;
    }
    c.expect(!touched && s.env == layout->index(layout->goal), "minimax reaches the goal avoiding the blind cell");
}

double monte_carlo(const MonMdp& mdp, const DeterministicPolicy& policy, std::size_t episodes, std::uint64_t seed,
                   double& se) {
    Rng rng(seed);
    double sum = 0.0, sq = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        JointState s = sample_initial_state(mdp, rng);
        double g = 0.0, disc = 1.0;
        for (std::size_t t = 0; t < mdp.horizon && !mdp.env.is_terminal(s.env); ++t) {
            const auto o = step(mdp, s, mdp.joint_action(policy[mdp.state_index(s)]), rng);
            g += disc * (o.hidden_env_reward + o.mon_reward);
            disc *= mdp.gamma;
            s = o.next_state;
        }
        sum += g;
        sq += g * g;
    }
    const double mean = sum / static_cast<double>(episodes);
    se = std::sqrt(std::max(0.0, sq / episodes - mean * mean) / static_cast<double>(episodes - 1));
    return mean;
}

void criterion7(Check& c) {
    // Transition rows.
    double worst = 0.0;
    for (const auto& info : registered_envs()) {
        const auto jm = build_joint_model(make_env(info.name));
        for (const auto& row : jm.successors) {
            double total = 0.0;
            for (const auto& x : row) total += x.prob;
            worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    c.expect(worst < 1e-12, "joint transition rows sum to 1 (worst error " + std::to_string(worst) + ")");

    // Truthfulness: random reward values through every monitor input.
    Rng rng(7);
    bool truthful = true;
    for (const auto& e : kEnvs) {
        const MonMdp m = make_env(e);
        for (int i = 0; i < 20000; ++i) {
            MonitorInput in{rng.index(m.env.n_states), rng.index(m.env.n_actions), rng.index(m.env.n_states),
                            rng.index(m.monitor.n_states), rng.index(m.monitor.n_actions),
                            rng.index(m.monitor.n_states)};
            const double r = rng.normal(0.0, 5.0);
            const Proxy p = m.monitor.monitor_fn(r, in);
            if (p.observed() && p.get() != r) truthful = false;
        }
    }
    c.expect(truthful, "every grid monitor reveals the exact reward or nothing");
    MonMdp clipped = make_chain_abc();
    clipped.monitor = clip_monitor(clipped.env, -1.0, 1.0);
    c.expect(!check_properties(clipped).truthful, "clipping monitor detected as untruthful");

    // Reward model mean.
    RewardModelTable t(1, 1);
    double sum = 0.0;
    for (int i = 0; i < 64; ++i) {
        const double v = static_cast<double>(static_cast<int>(rng.index(64)) - 32) / 8.0;
        t.observe(0, 0, v);
        sum += v;
    }
    c.expect(t.mean(0, 0) == sum / 64.0 && t.count(0, 0) == 64, "reward model mean is the exact sample mean");

    // Single-table learners agree under the identity monitor.
    {
        const MonMdp m = make_identity_grid();
        std::vector<Agent> agents;
        for (AgentKind k :
             {AgentKind::Oracle, AgentKind::RewardModel, AgentKind::ConstantAssign, AgentKind::Ignore}) {
            AgentConfig cfg;
            cfg.kind = k;
            agents.emplace_back(m, cfg);
        }
        Rng env_rng(3), agent_rng(4);
        JointState s = sample_initial_state(m, env_rng);
        for (int i = 0; i < 5000; ++i) {
            const auto o = step(m, s, agents[0].act(s, 0.5, agent_rng), env_rng);
            for (auto& a : agents) a.update_oracle(o, agent_rng);
            s = o.terminal ? sample_initial_state(m, env_rng) : o.next_state;
        }
        bool same = true;
        for (const auto& a : agents) same = same && a.q().values == agents[0].q().values;
        c.expect(same, "oracle and single-table variants identical under full observability");
    }

    // Exact evaluation against Monte-Carlo.
    for (const auto& e : kEnvs) {
        const MonMdp m = make_env(e);
        const auto jm = build_joint_model(m);
        DeterministicPolicy random(jm.n_states);
        for (auto& a : random) a = rng.index(jm.n_actions);
        for (const auto& p : {value_iteration(jm, RewardSpec::joint()).greedy, random}) {
            const double exact = policy_evaluation(jm, p, m.horizon);
            double se = 0.0;
            const double mc = monte_carlo(m, p, 20000, 5, se);
            c.expect(std::abs(mc - exact) <= 3.0 * se + 1e-9,
                     "policy evaluation on " + e + " exact " + fmt(exact, 4) + " vs MC " + fmt(mc, 4) + " +- " +
                         fmt(3.0 * se, 4));
        }
    }

    // Parallelism does not change results.
    ExperimentConfig cfg = ExperimentConfig::defaults("button", AgentKind::RewardModel);
    cfg.n_seeds = 8;
    const auto one = run_suite(cfg, 1), four = run_suite(cfg, 4);
    bool same = one.runs.size() == four.runs.size();
    for (std::size_t i = 0; same && i < one.runs.size(); ++i)
        same = one.runs[i].eval_returns == four.runs[i].eval_returns;
    c.expect(same, "fixed seeds give identical curves with 1 and 4 threads");
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        void (*run)(Check&);
    };
    const Criterion criteria[] = {
        {"1 policy-outcome matrix", criterion1},  {"2 convergence-step windows", criterion2},
        {"3 noisy rewards", criterion3},          {"4 failure-mode behaviours", criterion4},
        {"5 ablations", criterion5},              {"6 taxonomy", criterion6},
        {"7 property suite", criterion7},
    };
    int failed = 0;
    std::ostringstream details;
    for (const auto& cr : criteria) {
        Check c;
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        std::cout << (c.ok ? "PASS " : "FAIL ") << cr.name << std::endl;
        details << cr.name << "\n" << c.detail.str();
        if (!c.ok) ++failed;
    }
    std::cout << "\n" << details.str();
    std::cout << "\n" << (7 - failed) << "/7 criteria passed\n";
    return failed == 0 ? 0 : 1;
}
