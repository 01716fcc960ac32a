#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "monmdp/agents.hpp"
#include "monmdp/envs.hpp"
#include "monmdp/experiments.hpp"

using namespace monmdp;

namespace {

AgentConfig cfg(AgentKind k) {
    AgentConfig c;
    c.kind = k;
    return c;
}

// Pearson chi-square against the uniform distribution.
double chi_square(const std::vector<std::size_t>& counts) {
    double n = 0.0;
    for (auto c : counts) n += static_cast<double>(c);
    const double e = n / static_cast<double>(counts.size());
    double x = 0.0;
    for (auto c : counts) x += (c - e) * (c - e) / e;
    return x;
}

} // namespace

TEST(AgentKinds, NamesRoundTrip) {
    for (AgentKind k : all_agent_kinds()) EXPECT_EQ(parse_agent_kind(to_string(k)), k);
    EXPECT_EQ(parse_agent_kind("Reward_Model"), AgentKind::RewardModel);
    EXPECT_THROW(parse_agent_kind("sarsa"), std::invalid_argument);
}

TEST(AgentConfig, RejectsBadRates) {
    AgentConfig c;
    c.alpha = 0.0;
    EXPECT_THROW(c.validate(), ContractError);
    c.alpha = 1.0;
    c.gamma = 1.0;
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(Schedule, LinearDecay) {
    const Schedule s{1000};
    EXPECT_EQ(s.epsilon(0), 1.0);
    EXPECT_DOUBLE_EQ(s.epsilon(250), 0.75);
    EXPECT_EQ(s.epsilon(1000), 0.0);
    EXPECT_EQ(s.epsilon(5000), 0.0);
    for (std::size_t t = 1; t < 1000; ++t) EXPECT_LT(s.epsilon(t), s.epsilon(t - 1));
}

TEST(Exploration, FullEpsilonIsUniform) {
    const MonMdp m = make_penalty();
    Agent agent(m, cfg(AgentKind::RewardModel));
    Rng rng(4);
    std::vector<std::size_t> counts(m.n_joint_actions(), 0);
    for (int i = 0; i < 80000; ++i) ++counts[m.action_index(agent.act({0, 0}, 1.0, rng))];
    // 7 degrees of freedom, 99.9% quantile is 24.3.
    EXPECT_LT(chi_square(counts), 24.3);
}

TEST(Exploration, GreedyTiesAreUniform) {
    const MonMdp m = make_penalty();
    for (AgentKind k : {AgentKind::RewardModel, AgentKind::Joint, AgentKind::Sequential}) {
        Agent agent(m, cfg(k));
        Rng rng(9);
        std::vector<std::size_t> counts(m.n_joint_actions(), 0);
        for (int i = 0; i < 80000; ++i) ++counts[m.action_index(agent.act({0, 0}, 0.0, rng))];
        EXPECT_LT(chi_square(counts), 24.3) << to_string(k);
    }
}

TEST(Exploration, UniqueMaximumIsChosen) {
    const MonMdp m = make_simple();
    Agent agent(m, cfg(AgentKind::Oracle));
    Rng rng(1);
    const std::size_t pre_goal = grid_layout_of("simple")->index({0, 1});
    agent.update_oracle(step(m, {pre_goal, 0}, {kRight, 1}, rng), rng);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(agent.greedy({pre_goal, 0}, rng), (JointAction{kRight, 1}));
    TiePriority ties = TiePriority::draw(m, rng);
    EXPECT_EQ(agent.greedy({pre_goal, 0}, ties), (JointAction{kRight, 1}));
}

TEST(Update, OracleTerminalStepWithUnitRate) {
    const MonMdp m = make_simple();
    Agent agent(m, cfg(AgentKind::Oracle));
    Rng rng(1);
    const std::size_t pre_goal = grid_layout_of("simple")->index({0, 1});
    const auto o = step(m, {pre_goal, 0}, {kRight, 0}, rng); // ASK costs 0.2
    ASSERT_TRUE(o.terminal);
    agent.update_oracle(o, rng);
    EXPECT_DOUBLE_EQ(agent.action_value({pre_goal, 0}, {kRight, 0}), 0.8);
    EXPECT_THROW(agent.update(visible_part(o), rng), ContractError);
}

TEST(Update, IgnoreLeavesTableUntouchedOnBottom) {
    const MonMdp m = make_penalty();
    Agent agent(m, cfg(AgentKind::Ignore));
    Rng rng(2);
    const auto before = agent.q().values;
    const auto o = step(m, {0, 0}, {kRight, 1}, rng); // NO-OP
    ASSERT_FALSE(o.proxy.observed());
    agent.update(visible_part(o), rng);
    EXPECT_EQ(agent.q().values, before);
}

TEST(Update, ConstantAssignUsesItsValue) {
    const MonMdp m = make_penalty();
    AgentConfig c = cfg(AgentKind::ConstantAssign);
    c.unobservable_value = 0.25;
    Agent agent(m, c);
    Rng rng(2);
    agent.update(visible_part(step(m, {0, 0}, {kRight, 1}, rng)), rng);
    EXPECT_DOUBLE_EQ(agent.action_value({0, 0}, {kRight, 1}), 0.25 + 0.99 * -10.0);
}

TEST(Update, RewardModelTargetsTheMean) {
    const MonMdp m = make_penalty();
    Agent agent(m, cfg(AgentKind::RewardModel));
    Rng rng(2);
    // Unobserved at first: R-hat is still 0.
    agent.update(visible_part(step(m, {0, 0}, {kRight, 1}, rng)), rng);
    EXPECT_DOUBLE_EQ(agent.action_value({0, 0}, {kRight, 1}), 0.99 * -10.0);
    agent.update(visible_part(step(m, {0, 0}, {kRight, 0}, rng)), rng); // ASK
    EXPECT_EQ(agent.reward_model().count(0, kRight), 1u);
    EXPECT_EQ(agent.reward_model().mean(0, kRight), -10.0);
    agent.update(visible_part(step(m, {0, 0}, {kRight, 1}, rng)), rng);
    EXPECT_DOUBLE_EQ(agent.action_value({0, 0}, {kRight, 1}), -10.0 + 0.99 * -10.0);
}

TEST(RewardModelTable, DyadicMeanIsExact) {
    RewardModelTable t(2, 2);
    const double vals[] = {0.5, -1.25, 3.0, 0.125, -0.375, 2.0, 1.5, -0.5};
    double sum = 0.0;
    for (double v : vals) {
        t.observe(1, 0, v);
        sum += v;
    }
    EXPECT_EQ(t.mean(1, 0), sum / 8.0);
    EXPECT_EQ(t.count(1, 0), 8u);
    EXPECT_EQ(t.mean(0, 0), 0.0);
    EXPECT_EQ(t.count(0, 1), 0u);
}

TEST(RewardModelTable, NoisyMeanConverges) {
    RewardModelTable t(1, 1);
    Rng rng(12);
    for (int i = 0; i < 10000; ++i) t.observe(0, 0, rng.normal(-0.2, 0.05));
    EXPECT_NEAR(t.mean(0, 0), -0.2, 0.02);
}

TEST(Update, EquivalentUnderFullObservability) {
    // Identity monitor, deterministic rewards: the proxy always equals the
    // reward, so every single-table learner does the same arithmetic.
    const MonMdp m = make_identity_grid();
    std::vector<Agent> agents;
    for (AgentKind k : {AgentKind::Oracle, AgentKind::RewardModel, AgentKind::ConstantAssign, AgentKind::Ignore})
        agents.emplace_back(m, cfg(k));
    Rng env_rng(3), agent_rng(4);
    JointState s = sample_initial_state(m, env_rng);
    for (int t = 0; t < 5000; ++t) {
        const JointAction a = agents[0].act(s, 0.5, agent_rng);
        const auto o = step(m, s, a, env_rng);
        for (auto& ag : agents) ag.update_oracle(o, agent_rng);
        s = o.terminal ? sample_initial_state(m, env_rng) : o.next_state;
    }
    for (std::size_t i = 1; i < agents.size(); ++i) EXPECT_EQ(agents[i].q().values, agents[0].q().values) << i;
}

TEST(Update, JointAndSequentialObservedOnly) {
    const MonMdp m = make_penalty();
    Agent agent(m, cfg(AgentKind::Joint));
    Rng rng(5);
    const auto env_before = agent.q_env().values;
    agent.update(visible_part(step(m, {0, 0}, {kDown, 1}, rng)), rng);
    EXPECT_EQ(agent.q_env().values, env_before);
    EXPECT_DOUBLE_EQ(agent.q_mon(0, kDown, 0, 1), 0.99 * -10.0);
    agent.update(visible_part(step(m, {0, 0}, {kDown, 0}, rng)), rng);
    EXPECT_DOUBLE_EQ(agent.q_env()(0, kDown), 0.99 * -10.0);
    EXPECT_DOUBLE_EQ(agent.q_mon(0, kDown, 0, 0), -0.2 + 0.99 * -10.0);
}

TEST(Joint, CounterexampleTablesDisagreeWithSum) {
    enum { kGoA = 0, kStay = 1, kGoC = 2 };
    ExperimentConfig c = ExperimentConfig::defaults("chain-joint", AgentKind::Joint);
    c.total_steps = 5000;
    c.convergence_window = 1000;
    const auto ctx = ExperimentContext::build(c);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto run = train(ctx, c, seed);
        const Agent& a = run.agent;
        const std::size_t b = 1;
        Rng rng(seed);
        EXPECT_EQ(a.greedy({b, 0}, rng).env, static_cast<std::size_t>(kStay));
        EXPECT_NEAR(a.q_env()(b, kGoA), 1.0, 1e-9);
        EXPECT_NEAR(a.q_env()(b, kStay), 0.99, 1e-6);
        EXPECT_NEAR(a.q_mon(b, kGoC, 0, 0), 1.0, 1e-9);
        EXPECT_NEAR(a.q_mon(b, kStay, 0, 0), 0.99, 1e-6);
        EXPECT_LT(run.result.final_return, ctx.optimal_return - 0.5);
    }
}

TEST(Sequential, ChainCounterexampleIsSolved) {
    ExperimentConfig c = ExperimentConfig::defaults("chain-joint", AgentKind::Sequential);
    c.total_steps = 5000;
    c.convergence_window = 1000;
    c.n_seeds = 10;
    EXPECT_EQ(run_suite(c).aggregate.n_optimal, 10u);
}
