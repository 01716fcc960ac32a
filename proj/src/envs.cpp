#include "monmdp/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace monmdp {

std::size_t GridLayout::move(std::size_t s, std::size_t action) const {
    Cell c = cell(s);
    switch (action) {
    case kLeft:
        if (c.col > 0) --c.col;
        break;
    case kDown:
        if (c.row + 1 < rows) ++c.row;
        break;
    case kRight:
        if (c.col + 1 < cols) ++c.col;
        break;
    case kUp:
        if (c.row > 0) --c.row;
        break;
    default: throw ContractError("grid action out of range");
    }
    return index(c);
}

double GridLayout::cell_reward(std::size_t s) const {
    const Cell c = cell(s);
    if (c == goal) return goal_reward;
    if (penalty_cells.contains(c)) return penalty_reward;
    return 0.0;
}

void GridLayout::validate() const {
    if (rows == 0 || cols == 0) throw ValidationError("grid: rows and cols must be positive");
    auto in_bounds = [&](Cell c) { return c.row < rows && c.col < cols; };
    if (!in_bounds(start)) throw ValidationError("grid: start cell out of bounds");
    if (!in_bounds(goal)) throw ValidationError("grid: goal cell out of bounds");
    if (start == goal) throw ValidationError("grid: start must differ from goal");
    for (const Cell& p : penalty_cells) {
        if (!in_bounds(p)) throw ValidationError("grid: penalty cell out of bounds");
        if (p == goal) throw ValidationError("grid: goal cannot be a penalty cell");
    }
    if (button_cell) {
        if (!in_bounds(*button_cell)) throw ValidationError("grid: button cell out of bounds");
        if (*button_cell == goal) throw ValidationError("grid: button cell cannot be the goal");
    }
}

EnvModel make_grid_env(const GridLayout& layout, double noise_sd) {
    layout.validate();
    EnvModel env;
    env.n_states = layout.n_cells();
    env.n_actions = 4;
    env.transition.assign(env.n_states * env.n_actions * env.n_states, 0.0);
    env.reward_mean.assign(env.n_states * env.n_actions, 0.0);
    env.terminal.assign(env.n_states, 0);
    env.initial_dist.assign(env.n_states, 0.0);
    env.reward_noise_sd = noise_sd;
    env.reward_bounds = {std::min({0.0, layout.penalty_reward, layout.goal_reward}),
                         std::max({0.0, layout.penalty_reward, layout.goal_reward})};
    env.action_names = {"LEFT", "DOWN", "RIGHT", "UP"};

    const std::size_t goal = layout.index(layout.goal);
    env.terminal[goal] = 1;
    env.initial_dist[layout.index(layout.start)] = 1.0;
    for (std::size_t s = 0; s < env.n_states; ++s) {
        const Cell c = layout.cell(s);
        env.state_names.push_back("r" + std::to_string(c.row) + "c" + std::to_string(c.col));
        for (std::size_t a = 0; a < env.n_actions; ++a) {
            if (s == goal) {
                env.p(s, a, s) = 1.0;
                continue;
            }
            const std::size_t next = layout.move(s, a);
            env.p(s, a, next) = 1.0;
            env.r(s, a) = layout.cell_reward(next);
        }
    }
    return env;
}

namespace {

MonitorModel blank_monitor(const EnvModel& env, std::string kind, std::size_t n_states,
                           std::size_t n_actions) {
    MonitorModel m;
    m.kind = std::move(kind);
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.n_env_states = env.n_states;
    m.n_env_actions = env.n_actions;
    m.transition.assign(n_states * env.n_states * n_actions * env.n_actions * n_states, 0.0);
    m.initial_dist.assign(n_states, 0.0);
    return m;
}

template <typename NextFn>
void fill_transitions(MonitorModel& m, NextFn&& next_dist) {
    for (std::size_t ms = 0; ms < m.n_states; ++ms)
        for (std::size_t se = 0; se < m.n_env_states; ++se)
            for (std::size_t am = 0; am < m.n_actions; ++am)
                for (std::size_t ae = 0; ae < m.n_env_actions; ++ae)
                    next_dist(ms, se, am, ae, &m.transition[m.index(ms, se, am, ae)]);
}

Proxy reveal_if(bool cond, double r) { return cond ? Proxy::value(r) : Proxy::unobservable(); }

} // namespace

MonitorModel ask_monitor(const EnvModel& env, double ask_cost) {
    enum : std::size_t { kAsk = 0, kNoOp = 1 };
    auto m = blank_monitor(env, "ask", 1, 2);
    m.state_names = {"OFF"};
    m.action_names = {"ASK", "NO-OP"};
    m.initial_dist = {1.0};
    fill_transitions(m, [](auto, auto, auto, auto, double* row) { row[0] = 1.0; });
    m.reward = [ask_cost](const MonitorInput& in) { return in.mon_action == kAsk ? ask_cost : 0.0; };
    m.monitor_fn = [](double r, const MonitorInput& in) { return reveal_if(in.mon_action == kAsk, r); };
    return m;
}

MonitorModel button_monitor(const EnvModel& env, std::size_t button_state,
                            std::size_t press_action, double on_cost) {
    enum : std::size_t { kOn = 0, kOff = 1 };
    if (button_state >= env.n_states || press_action >= env.n_actions)
        throw ContractError("button_monitor: button state or press action out of range");
    auto m = blank_monitor(env, "button", 2, 1);
    m.state_names = {"ON", "OFF"};
    m.action_names = {"NO-OP"};
    m.initial_dist = {0.5, 0.5};
    fill_transitions(m, [&](std::size_t ms, std::size_t se, std::size_t, std::size_t ae,
                            double* row) {
        const bool pressed = se == button_state && ae == press_action;
        row[pressed ? (ms == kOn ? kOff : kOn) : ms] = 1.0;
    });
    m.reward = [on_cost](const MonitorInput& in) { return in.next_mon_state == kOn ? on_cost : 0.0; };
    m.monitor_fn = [](double r, const MonitorInput& in) {
        return reveal_if(in.next_mon_state == kOn, r);
    };
    return m;
}

MonitorModel n_monitor(const EnvModel& env, std::size_t n, double ask_cost, double miss_bonus) {
    if (n == 0) throw ContractError("n_monitor: n must be positive");
    auto m = blank_monitor(env, "n-monitor", n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m.state_names.push_back("ON" + std::to_string(i + 1));
        m.action_names.push_back("ASK" + std::to_string(i + 1));
    }
    m.initial_dist.assign(n, 1.0 / static_cast<double>(n));
    fill_transitions(m, [n](auto, auto, auto, auto, double* row) {
        std::fill(row, row + n, 1.0 / static_cast<double>(n));
    });
    m.reward = [ask_cost, miss_bonus](const MonitorInput& in) {
        return in.mon_action == in.mon_state ? ask_cost : miss_bonus;
    };
    m.monitor_fn = [](double r, const MonitorInput& in) {
        return reveal_if(in.mon_action == in.mon_state, r);
    };
    return m;
}

MonitorModel limited_time_monitor(const EnvModel& env, double stay_on_prob) {
    enum : std::size_t { kOn = 0, kOff = 1 };
    if (!(stay_on_prob > 0.0 && stay_on_prob <= 1.0))
        throw ContractError("limited_time_monitor: p must lie in (0, 1]");
    auto m = blank_monitor(env, "limited-time", 2, 1);
    m.state_names = {"ON", "OFF"};
    m.action_names = {"NO-OP"};
    m.initial_dist = {1.0, 0.0};
    fill_transitions(m, [stay_on_prob](std::size_t ms, auto, auto, auto, double* row) {
        if (ms == kOn) {
            row[kOn] = stay_on_prob;
            row[kOff] = 1.0 - stay_on_prob;
        } else {
            row[kOff] = 1.0;
        }
    });
    m.reward = [](const MonitorInput&) { return 0.0; };
    m.monitor_fn = [](double r, const MonitorInput& in) { return reveal_if(in.mon_state == kOn, r); };
    return m;
}

std::size_t limited_use_state(std::size_t battery, bool on, std::size_t capacity) {
    return on ? battery : capacity + 1 + battery;
}

MonitorModel limited_use_monitor(const EnvModel& env, std::size_t capacity) {
    enum : std::size_t { kTurnOn = 0, kTurnOff = 1, kNoOp = 2 };
    if (capacity == 0) throw ContractError("limited_use_monitor: battery must be positive");
    const std::size_t levels = capacity + 1;
    auto m = blank_monitor(env, "limited-use", 2 * levels, 3);
    for (int on = 1; on >= 0; --on)
        for (std::size_t b = 0; b < levels; ++b)
            m.state_names.push_back(std::string(on ? "ON" : "OFF") + "/" + std::to_string(b));
    m.action_names = {"TURN-ON", "TURN-OFF", "NO-OP"};
    m.initial_dist[limited_use_state(capacity, false, capacity)] = 1.0;

    auto battery_of = [levels](std::size_t ms) { return ms % levels; };
    auto is_on = [levels](std::size_t ms) { return ms < levels; };
    fill_transitions(m, [&](std::size_t ms, auto, std::size_t am, auto, double* row) {
        const std::size_t b = battery_of(ms);
        const bool on = is_on(ms);
        const std::size_t next_b = on && b > 0 ? b - 1 : b;
        bool next_on = false;
        if (am == kTurnOff || b == 0)
            next_on = false;
        else if (on || am == kTurnOn)
            next_on = true;
        row[limited_use_state(next_b, next_on, capacity)] = 1.0;
    });
    std::vector<char> terminal = env.terminal;
    m.reward = [terminal, battery_of](const MonitorInput& in) {
        return battery_of(in.mon_state) == 0 && terminal[in.next_env_state] ? 1.0 : 0.0;
    };
    m.monitor_fn = [is_on](double r, const MonitorInput& in) { return reveal_if(is_on(in.mon_state), r); };
    return m;
}

MonitorModel identity_monitor(const EnvModel& env) {
    auto m = blank_monitor(env, "identity", 1, 1);
    m.state_names = {"-"};
    m.action_names = {"NO-OP"};
    m.initial_dist = {1.0};
    fill_transitions(m, [](auto, auto, auto, auto, double* row) { row[0] = 1.0; });
    m.reward = [](const MonitorInput&) { return 0.0; };
    m.monitor_fn = [](double r, const MonitorInput&) { return Proxy::value(r); };
    return m;
}

MonitorModel always_unobservable_monitor(const EnvModel& env, std::vector<double> action_rewards) {
    if (action_rewards.empty()) throw ContractError("always_unobservable_monitor: need one action");
    auto m = blank_monitor(env, "always-unobservable", 1, action_rewards.size());
    m.state_names = {"OFF"};
    for (std::size_t i = 0; i < action_rewards.size(); ++i)
        m.action_names.push_back("A" + std::to_string(i));
    m.initial_dist = {1.0};
    fill_transitions(m, [](auto, auto, auto, auto, double* row) { row[0] = 1.0; });
    m.reward = [action_rewards](const MonitorInput& in) { return action_rewards[in.mon_action]; };
    m.monitor_fn = [](double, const MonitorInput&) { return Proxy::unobservable(); };
    return m;
}

MonitorModel blind_pairs_monitor(const EnvModel& env,
                                 const std::set<std::pair<std::size_t, std::size_t>>& hidden) {
    auto m = blank_monitor(env, "blind", 1, 1);
    m.state_names = {"-"};
    m.action_names = {"NO-OP"};
    m.initial_dist = {1.0};
    fill_transitions(m, [](auto, auto, auto, auto, double* row) { row[0] = 1.0; });
    std::vector<char> mask(env.n_states * env.n_actions, 0);
    for (const auto& [s, a] : hidden) {
        if (s >= env.n_states || a >= env.n_actions)
            throw ContractError("blind_pairs_monitor: hidden pair out of range");
        mask[s * env.n_actions + a] = 1;
    }
    const std::size_t na = env.n_actions;
    m.reward = [](const MonitorInput&) { return 0.0; };
    m.monitor_fn = [mask, na](double r, const MonitorInput& in) {
        return reveal_if(!mask[in.env_state * na + in.env_action], r);
    };
    return m;
}

MonitorModel clip_monitor(const EnvModel& env, double lo, double hi) {
    auto m = ask_monitor(env, 0.0);
    m.kind = "clip";
    m.truthful = false;
    m.monitor_fn = [lo, hi](double r, const MonitorInput& in) {
        return reveal_if(in.mon_action == 0, std::clamp(r, lo, hi));
    };
    return m;
}

MonitorModel full_observability(MonitorModel base) {
    base.kind = "full-observability(" + base.kind + ")";
    base.truthful = true;
    base.monitor_fn = [](double r, const MonitorInput&) { return Proxy::value(r); };
    return base;
}

namespace {

MonMdp assemble(std::string name, EnvModel env, MonitorModel monitor, const GridLayout* grid) {
    MonMdp mdp;
    mdp.name = std::move(name);
    mdp.env = std::move(env);
    mdp.monitor = std::move(monitor);
    mdp.gamma = 0.99;
    mdp.horizon = 50;
    if (grid) {
        mdp.grid_rows = grid->rows;
        mdp.grid_cols = grid->cols;
    }
    mdp.validate();
    return mdp;
}

} // namespace

MonMdp make_simple(double noise_sd) {
    const auto layout = GridLayout::simple_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = ask_monitor(env);
    return assemble("simple", std::move(env), std::move(mon), &layout);
}

MonMdp make_penalty(double noise_sd) {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = ask_monitor(env);
    return assemble("penalty", std::move(env), std::move(mon), &layout);
}

MonMdp make_button(double noise_sd) {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = button_monitor(env, layout.index(*layout.button_cell), kDown);
    return assemble("button", std::move(env), std::move(mon), &layout);
}

MonMdp make_n_monitor(std::size_t n, double noise_sd) {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = n_monitor(env, n);
    return assemble("n-monitor", std::move(env), std::move(mon), &layout);
}

MonMdp make_limited_time(double stay_on_prob, double noise_sd) {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = limited_time_monitor(env, stay_on_prob);
    return assemble("limited-time", std::move(env), std::move(mon), &layout);
}

MonMdp make_limited_use(std::size_t battery, double noise_sd) {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout, noise_sd);
    auto mon = limited_use_monitor(env, battery);
    return assemble("limited-use", std::move(env), std::move(mon), &layout);
}

namespace {

// A - B - C line. Actions LEFT/RIGHT; from either end every action returns to B.
EnvModel chain_abc_env() {
    enum : std::size_t { A = 0, B = 1, C = 2 };
    enum : std::size_t { kL = 0, kR = 1 };
    EnvModel env;
    env.n_states = 3;
    env.n_actions = 2;
    env.transition.assign(3 * 2 * 3, 0.0);
    env.reward_mean.assign(3 * 2, 0.0);
    env.terminal.assign(3, 0);
    env.initial_dist = {0.0, 1.0, 0.0};
    env.state_names = {"A", "B", "C"};
    env.action_names = {"LEFT", "RIGHT"};
    env.reward_bounds = {-3.0, 2.0};
    env.p(B, kL, A) = 1.0;
    env.r(B, kL) = 2.0;
    env.p(B, kR, C) = 1.0;
    env.r(B, kR) = 1.0;
    for (std::size_t a : {kL, kR}) {
        env.p(A, a, B) = 1.0;
        env.r(A, a) = -3.0;
        env.p(C, a, B) = 1.0;
        env.r(C, a) = -1.0;
    }
    return env;
}

} // namespace

MonMdp make_chain_abc() {
    auto env = chain_abc_env();
    auto mon = ask_monitor(env, 0.0);
    return assemble("chain-abc", std::move(env), std::move(mon), nullptr);
}

MonMdp make_chain_joint_counterexample() {
    enum : std::size_t { A = 0, B = 1, C = 2 };
    enum : std::size_t { kToA = 0, kStay = 1, kToC = 2 };
    EnvModel env;
    env.n_states = 3;
    env.n_actions = 3;
    env.transition.assign(3 * 3 * 3, 0.0);
    env.reward_mean.assign(3 * 3, 0.0);
    env.terminal = {1, 0, 1};
    env.initial_dist = {0.0, 1.0, 0.0};
    env.state_names = {"A", "B", "C"};
    env.action_names = {"GO-A", "STAY", "GO-C"};
    env.reward_bounds = {0.0, 1.0};
    for (std::size_t a = 0; a < 3; ++a) {
        env.p(A, a, A) = 1.0;
        env.p(C, a, C) = 1.0;
    }
    env.p(B, kToA, A) = 1.0;
    env.p(B, kStay, B) = 1.0;
    env.p(B, kToC, C) = 1.0;
    env.r(B, kToA) = 1.0;

    // Singleton monitor: every reward observed; reaching C pays +1 through the
    // monitor, so A and C have the same joint reward.
    auto mon = identity_monitor(env);
    mon.kind = "chain-joint";
    mon.reward = [](const MonitorInput& in) {
        return in.env_state == B && in.env_action == kToC ? 1.0 : 0.0;
    };
    return assemble("chain-joint", std::move(env), std::move(mon), nullptr);
}

MonMdp make_identity_grid() {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout);
    auto mon = identity_monitor(env);
    return assemble("identity", std::move(env), std::move(mon), &layout);
}

MonMdp make_hopeless_grid() {
    const auto layout = GridLayout::penalty_default();
    auto env = make_grid_env(layout);
    auto mon = always_unobservable_monitor(env);
    return assemble("hopeless", std::move(env), std::move(mon), &layout);
}

MonMdp make_single_blind_grid() {
    const auto layout = GridLayout::simple_default();
    auto env = make_grid_env(layout);
    const std::size_t blind = layout.index({0, 1});
    std::set<std::pair<std::size_t, std::size_t>> hidden;
    for (std::size_t s = 0; s < env.n_states; ++s)
        for (std::size_t a = 0; a < env.n_actions; ++a)
            if (!env.is_terminal(s) && layout.move(s, a) == blind) hidden.insert({s, a});
    auto mon = blind_pairs_monitor(env, hidden);
    return assemble("single-blind", std::move(env), std::move(mon), &layout);
}

MonMdp with_noise(MonMdp mdp, double noise_sd) {
    mdp.env.reward_noise_sd = noise_sd;
    mdp.validate();
    return mdp;
}

const std::vector<EnvInfo>& registered_envs() {
    static const std::vector<EnvInfo> envs = {
        {"simple", "3x3 grid, ask monitor (cost -0.2)"},
        {"penalty", "3x3 grid with penalty cells, ask monitor"},
        {"button", "penalty grid, monitor toggled by a button"},
        {"n-monitor", "penalty grid, 5 random monitors"},
        {"limited-time", "penalty grid, monitor turns off with probability 0.2 per step"},
        {"limited-use", "penalty grid, battery-limited monitor (7 charges)"},
        {"chain-abc", "three-state chain with ask monitor and zero monitor cost"},
        {"chain-joint", "three-state chain where the joint greedy policy stays put"},
        {"identity", "penalty grid with a monitor that always reveals and costs nothing"},
        {"hopeless", "penalty grid whose rewards are never observable"},
        {"single-blind", "simple grid with one never-observable cell"},
    };
    return envs;
}

MonMdp make_env(const std::string& name, double noise_sd) {
    if (name == "simple") return make_simple(noise_sd);
    if (name == "penalty") return make_penalty(noise_sd);
    if (name == "button") return make_button(noise_sd);
    if (name == "n-monitor") return make_n_monitor(5, noise_sd);
    if (name == "limited-time") return make_limited_time(0.8, noise_sd);
    if (name == "limited-use") return make_limited_use(7, noise_sd);
    if (name == "chain-abc") return with_noise(make_chain_abc(), noise_sd);
    if (name == "chain-joint") return with_noise(make_chain_joint_counterexample(), noise_sd);
    if (name == "identity") return with_noise(make_identity_grid(), noise_sd);
    if (name == "hopeless") return with_noise(make_hopeless_grid(), noise_sd);
    if (name == "single-blind") return with_noise(make_single_blind_grid(), noise_sd);
    throw std::invalid_argument("unknown environment '" + name + "'");
}

std::optional<GridLayout> grid_layout_of(const std::string& name) {
    if (name == "simple" || name == "single-blind") return GridLayout::simple_default();
    if (name == "penalty" || name == "button" || name == "n-monitor" || name == "limited-time" ||
        name == "limited-use" || name == "identity" || name == "hopeless")
        return GridLayout::penalty_default();
    return std::nullopt;
}

MonMdp resolve_env(const std::string& name_or_path, double noise_sd) {
    for (const auto& info : registered_envs())
        if (info.name == name_or_path) return make_env(name_or_path, noise_sd);
    if (std::filesystem::exists(name_or_path)) {
        auto mdp = load_monmdp(name_or_path);
        if (noise_sd > 0.0) mdp = with_noise(std::move(mdp), noise_sd);
        return mdp;
    }
    throw std::invalid_argument("'" + name_or_path +
                                "' is neither a registered environment nor an instance file");
}

} // namespace monmdp
