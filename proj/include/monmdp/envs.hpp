#pragma once

// Builders for the gridworld and chain Mon-MDPs, plus the instance file
// loader. Builders are pure; every returned model has passed validate().

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "monmdp/core.hpp"

namespace monmdp {

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum GridAction : std::size_t { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };

/// 3x3 default: start top-left, goal top-right, penalties on the top and
/// centre cells of the middle column, button under the bottom-right cell.
struct GridLayout {
    std::size_t rows = 3;
    std::size_t cols = 3;
    Cell start{0, 0};
    Cell goal{0, 2};
    std::set<Cell> penalty_cells{{0, 1}, {1, 1}};
    std::optional<Cell> button_cell = Cell{2, 2};
    double goal_reward = 1.0;
    double penalty_reward = -10.0;

    std::size_t n_cells() const { return rows * cols; }
    std::size_t index(Cell c) const { return c.row * cols + c.col; }
    Cell cell(std::size_t i) const { return {i / cols, i % cols}; }
    /// Successor cell; bumping a wall keeps the agent in place.
    std::size_t move(std::size_t s, std::size_t action) const;
    double cell_reward(std::size_t s) const;

    void validate() const;

    static GridLayout penalty_default() { return {}; }
    static GridLayout simple_default() {
        GridLayout g;
        g.penalty_cells.clear();
        return g;
    }
};

/// Deterministic gridworld. The reward of (s, a) is the reward of the cell the
/// move lands on; the goal is terminal.
EnvModel make_grid_env(const GridLayout& layout, double noise_sd = 0.0);

/// Monitor builders. `env` supplies the dimensions (and terminal mask where
/// the monitor depends on it).
MonitorModel ask_monitor(const EnvModel& env, double ask_cost = -0.2);
MonitorModel button_monitor(const EnvModel& env, std::size_t button_state,
                            std::size_t press_action = kDown, double on_cost = -0.2);
MonitorModel n_monitor(const EnvModel& env, std::size_t n, double ask_cost = -0.2,
                       double miss_bonus = 0.001);
MonitorModel limited_time_monitor(const EnvModel& env, double stay_on_prob);
MonitorModel limited_use_monitor(const EnvModel& env, std::size_t battery);
MonitorModel identity_monitor(const EnvModel& env);
MonitorModel always_unobservable_monitor(const EnvModel& env,
                                         std::vector<double> action_rewards = {0.0});
/// Singleton monitor that hides the reward of the listed (env state, env
/// action) pairs and reveals everything else.
MonitorModel blind_pairs_monitor(const EnvModel& env,
                                 const std::set<std::pair<std::size_t, std::size_t>>& hidden);
/// Ask monitor that reveals a clipped reward. Not truthful.
MonitorModel clip_monitor(const EnvModel& env, double lo, double hi);
/// Keeps the dynamics and monitor rewards of `base` but always reveals the
/// environment reward.
MonitorModel full_observability(MonitorModel base);

// Battery monitor state layout: index = (off ? battery + 1 + N : battery).
std::size_t limited_use_state(std::size_t battery, bool on, std::size_t capacity);

MonMdp make_simple(double noise_sd = 0.0);
MonMdp make_penalty(double noise_sd = 0.0);
MonMdp make_button(double noise_sd = 0.0);
MonMdp make_n_monitor(std::size_t n = 5, double noise_sd = 0.0);
MonMdp make_limited_time(double stay_on_prob = 0.8, double noise_sd = 0.0);
MonMdp make_limited_use(std::size_t battery = 7, double noise_sd = 0.0);
MonMdp make_chain_abc();
MonMdp make_chain_joint_counterexample();
/// Penalty grid with the identity monitor (monitor has no effect).
MonMdp make_identity_grid();
/// Penalty grid whose rewards are never observable.
MonMdp make_hopeless_grid();
/// Simple grid where entering the top-centre cell is never observable.
MonMdp make_single_blind_grid();

/// Returns a copy with the reward noise replaced.
MonMdp with_noise(MonMdp mdp, double noise_sd);

struct EnvInfo {
    std::string name;
    std::string description;
};

/// Registered builder names, in presentation order.
const std::vector<EnvInfo>& registered_envs();
/// Builds a registered instance; throws std::invalid_argument for unknown
/// names.
MonMdp make_env(const std::string& name, double noise_sd = 0.0);
/// Layout of a registered grid instance, if it is one.
std::optional<GridLayout> grid_layout_of(const std::string& name);

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parses an instance file (schema in docs/instance-format.md).
MonMdp parse_monmdp(const std::string& text);
MonMdp load_monmdp(const std::filesystem::path& path);
/// Writes a fully explicit instance. The monitor must be truthful.
std::string serialize_monmdp(const MonMdp& mdp);
void save_monmdp(const MonMdp& mdp, const std::filesystem::path& path);

/// Registered name or instance file path.
MonMdp resolve_env(const std::string& name_or_path, double noise_sd = 0.0);

} // namespace monmdp
