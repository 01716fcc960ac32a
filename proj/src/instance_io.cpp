#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "monmdp/envs.hpp"

namespace monmdp {

namespace {

struct Entry {
    std::size_t line;
    std::string key;
    std::string value;
};

using Section = std::vector<Entry>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class Sections {
public:
    explicit Sections(const std::string& text) {
        std::istringstream in(text);
        std::string raw;
        std::size_t line = 0;
        Section* current = nullptr;
        while (std::getline(in, raw)) {
            ++line;
            const auto hash = raw.find('#');
            const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ParseError(line, "malformed section header");
                const std::string name = trim(s.substr(1, s.size() - 2));
                if (name != "mdp" && name != "env" && name != "grid" && name != "monitor")
                    throw ParseError(line, "unknown section [" + name + "]");
                if (sections_.contains(name)) throw ParseError(line, "duplicate section [" + name + "]");
                current = &sections_[name];
                headers_[name] = line;
                continue;
            }
            if (!current) throw ParseError(line, "key outside of any section");
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
            current->push_back({line, trim(s.substr(0, eq)), trim(s.substr(eq + 1))});
        }
        last_line_ = line;
    }

    bool has(const std::string& name) const { return sections_.contains(name); }
    const Section& get(const std::string& name) const {
        static const Section empty;
        auto it = sections_.find(name);
        return it == sections_.end() ? empty : it->second;
    }
    std::size_t header(const std::string& name) const {
        auto it = headers_.find(name);
        return it == headers_.end() ? last_line_ : it->second;
    }

private:
    std::map<std::string, Section> sections_;
    std::map<std::string, std::size_t> headers_;
    std::size_t last_line_ = 0;
};

// Key lookup within one section. Scalar keys must appear at most once; list
// keys may repeat and are concatenated.
class Reader {
public:
    Reader(const Section& section, std::size_t header) : section_(section), header_(header) {
        for (const auto& e : section) counts_[e.key]++;
    }

    bool has(const std::string& key) const { return counts_.contains(key); }

    const Entry& scalar(const std::string& key) const {
        const Entry* found = nullptr;
        for (const auto& e : section_)
            if (e.key == key) {
                if (found) throw ParseError(e.line, "key '" + key + "' given twice");
                found = &e;
            }
        if (!found) throw ParseError(header_, "missing key '" + key + "'");
        used_.insert(key);
        return *found;
    }

    std::vector<const Entry*> all(const std::string& key) const {
        std::vector<const Entry*> out;
        for (const auto& e : section_)
            if (e.key == key) out.push_back(&e);
        used_.insert(key);
        return out;
    }

    double number(const std::string& key) const {
        const auto& e = scalar(key);
        return to_double(e.value, e.line);
    }
    double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    std::size_t count(const std::string& key) const {
        const auto& e = scalar(key);
        return to_size(e.value, e.line);
    }
    std::size_t count(const std::string& key, std::size_t fallback) const {
        return has(key) ? count(key) : fallback;
    }
    std::string text(const std::string& key, const std::string& fallback = "") const {
        return has(key) ? scalar(key).value : fallback;
    }

    void reject_unknown() const {
        for (const auto& e : section_)
            if (!used_.contains(e.key)) throw ParseError(e.line, "unknown key '" + e.key + "'");
    }

    static double to_double(const std::string& s, std::size_t line) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ParseError(line, "expected a number, got '" + s + "'");
        }
    }
    static std::size_t to_size(const std::string& s, std::size_t line) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw ParseError(line, "expected a non-negative integer, got '" + s + "'");
        return std::stoull(s);
    }

private:
    const Section& section_;
    std::size_t header_;
    std::map<std::string, int> counts_;
    mutable std::set<std::string> used_;
};

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// Tuples separated by ';', fields by whitespace.
std::vector<std::vector<std::string>> tuples(const std::vector<const Entry*>& entries,
                                             std::size_t arity, std::vector<std::size_t>* lines) {
    std::vector<std::vector<std::string>> out;
    for (const Entry* e : entries) {
        std::istringstream in(e->value);
        for (std::string part; std::getline(in, part, ';');) {
            auto w = words(part);
            if (w.empty()) continue;
            if (w.size() != arity)
                throw ParseError(e->line, "expected " + std::to_string(arity) + " fields in '" +
                                              trim(part) + "'");
            out.push_back(std::move(w));
            lines->push_back(e->line);
        }
    }
    return out;
}

std::size_t index_field(const std::string& s, std::size_t bound, std::size_t line, const char* what) {
    const std::size_t v = Reader::to_size(s, line);
    if (v >= bound)
        throw ParseError(line, std::string(what) + " index " + s + " out of range [0, " +
                                   std::to_string(bound) + ")");
    return v;
}

Cell parse_cell(const std::vector<std::string>& w, std::size_t line) {
    return {Reader::to_size(w[0], line), Reader::to_size(w[1], line)};
}

Cell cell_of(const Reader& r, const std::string& key) {
    const auto& e = r.scalar(key);
    const auto w = words(e.value);
    if (w.size() != 2) throw ParseError(e.line, "expected 'row col'");
    return parse_cell(w, e.line);
}

GridLayout read_grid(const Reader& r) {
    GridLayout g;
    g.rows = r.count("rows");
    g.cols = r.count("cols");
    g.start = cell_of(r, "start");
    g.goal = cell_of(r, "goal");
    g.penalty_cells.clear();
    std::vector<std::size_t> lines;
    for (const auto& t : tuples(r.all("penalties"), 2, &lines)) g.penalty_cells.insert(parse_cell(t, 0));
    g.button_cell.reset();
    if (r.has("button")) g.button_cell = cell_of(r, "button");
    g.goal_reward = r.number("goal_reward", 1.0);
    g.penalty_reward = r.number("penalty_reward", -10.0);
    g.validate();
    return g;
}

EnvModel read_env(const Reader& r) {
    EnvModel env;
    env.n_states = r.count("n_states");
    env.n_actions = r.count("n_actions");
    if (env.n_states == 0 || env.n_actions == 0)
        throw ParseError(r.scalar("n_states").line, "env needs at least one state and one action");
    const std::size_t ns = env.n_states, na = env.n_actions;
    env.transition.assign(ns * na * ns, 0.0);
    env.reward_mean.assign(ns * na, 0.0);
    env.terminal.assign(ns, 0);
    env.initial_dist.assign(ns, 0.0);
    env.reward_noise_sd = r.number("noise_sd", 0.0);

    std::vector<std::size_t> lines;
    auto rows = tuples(r.all("transition"), 4, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        const std::size_t s = index_field(t[0], ns, lines[i], "state");
        const std::size_t a = index_field(t[1], na, lines[i], "action");
        const std::size_t n = index_field(t[2], ns, lines[i], "state");
        env.p(s, a, n) += Reader::to_double(t[3], lines[i]);
    }
    lines.clear();
    rows = tuples(r.all("reward"), 3, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        env.r(index_field(t[0], ns, lines[i], "state"), index_field(t[1], na, lines[i], "action")) =
            Reader::to_double(t[2], lines[i]);
    }
    for (const Entry* e : r.all("terminals"))
        for (const auto& w : words(e->value)) env.terminal[index_field(w, ns, e->line, "state")] = 1;
    lines.clear();
    rows = tuples(r.all("initial"), 2, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i)
        env.initial_dist[index_field(rows[i][0], ns, lines[i], "state")] +=
            Reader::to_double(rows[i][1], lines[i]);

    const auto& bounds = r.scalar("reward_bounds");
    const auto b = words(bounds.value);
    if (b.size() != 2) throw ParseError(bounds.line, "expected 'lo hi'");
    env.reward_bounds = {Reader::to_double(b[0], bounds.line), Reader::to_double(b[1], bounds.line)};
    if (r.has("state_names")) env.state_names = words(r.scalar("state_names").value);
    if (r.has("action_names")) env.action_names = words(r.scalar("action_names").value);
    if (!env.state_names.empty() && env.state_names.size() != ns)
        throw ParseError(r.scalar("state_names").line, "state_names must list n_states names");
    if (!env.action_names.empty() && env.action_names.size() != na)
        throw ParseError(r.scalar("action_names").line, "action_names must list n_actions names");
    return env;
}

// Dense tables over (m, se, am, ae, se', m') for explicitly listed monitors.
struct ExplicitTables {
    std::size_t nm, nse, nam, nae;
    std::vector<double> reward;
    std::vector<char> observe;

    std::size_t at(const MonitorInput& in) const {
        return ((((in.mon_state * nse + in.env_state) * nam + in.mon_action) * nae + in.env_action) *
                    nse +
                in.next_env_state) *
                   nm +
               in.next_mon_state;
    }
};

MonitorModel read_explicit_monitor(const Reader& r, const EnvModel& env) {
    MonitorModel m;
    m.kind = "explicit";
    m.n_states = r.count("n_states");
    m.n_actions = r.count("n_actions");
    if (m.n_states == 0 || m.n_actions == 0)
        throw ParseError(r.scalar("n_states").line, "monitor needs at least one state and one action");
    m.n_env_states = env.n_states;
    m.n_env_actions = env.n_actions;
    const std::size_t nm = m.n_states, nam = m.n_actions, nse = env.n_states, nae = env.n_actions;
    m.transition.assign(nm * nse * nam * nae * nm, 0.0);
    m.initial_dist.assign(nm, 0.0);

    auto tables = std::make_shared<ExplicitTables>();
    *tables = {nm, nse, nam, nae, {}, {}};
    tables->reward.assign(nm * nse * nam * nae * nse * nm, 0.0);
    tables->observe.assign(tables->reward.size(), 0);

    std::vector<std::size_t> lines;
    auto rows = tuples(r.all("transition"), 6, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        const std::size_t ln = lines[i];
        m.p(index_field(t[0], nm, ln, "monitor state"), index_field(t[1], nse, ln, "env state"),
            index_field(t[2], nam, ln, "monitor action"), index_field(t[3], nae, ln, "env action"),
            index_field(t[4], nm, ln, "monitor state")) += Reader::to_double(t[5], ln);
    }
    auto input_of = [&](const std::vector<std::string>& t, std::size_t ln) {
        return MonitorInput{index_field(t[1], nse, ln, "env state"),
                            index_field(t[3], nae, ln, "env action"),
                            index_field(t[4], nse, ln, "env state"),
                            index_field(t[0], nm, ln, "monitor state"),
                            index_field(t[2], nam, ln, "monitor action"),
                            index_field(t[5], nm, ln, "monitor state")};
    };
    lines.clear();
    rows = tuples(r.all("reward"), 7, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i)
        tables->reward[tables->at(input_of(rows[i], lines[i]))] = Reader::to_double(rows[i][6], lines[i]);
    lines.clear();
    rows = tuples(r.all("observe"), 6, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i) tables->observe[tables->at(input_of(rows[i], lines[i]))] = 1;
    lines.clear();
    rows = tuples(r.all("initial"), 2, &lines);
    for (std::size_t i = 0; i < rows.size(); ++i)
        m.initial_dist[index_field(rows[i][0], nm, lines[i], "monitor state")] +=
            Reader::to_double(rows[i][1], lines[i]);
    if (r.has("state_names")) m.state_names = words(r.scalar("state_names").value);
    if (r.has("action_names")) m.action_names = words(r.scalar("action_names").value);

    m.reward = [tables](const MonitorInput& in) { return tables->reward[tables->at(in)]; };
    m.monitor_fn = [tables](double v, const MonitorInput& in) {
        return tables->observe[tables->at(in)] ? Proxy::value(v) : Proxy::unobservable();
    };
    return m;
}

MonitorModel read_monitor(const Reader& r, const EnvModel& env, const GridLayout* grid) {
    const std::string kind = r.scalar("kind").value;
    if (kind == "ask") return ask_monitor(env, r.number("cost", -0.2));
    if (kind == "button") {
        std::size_t state = 0;
        if (r.has("button_state")) {
            state = r.count("button_state");
        } else if (grid && grid->button_cell) {
            state = grid->index(*grid->button_cell);
        } else {
            throw ParseError(r.scalar("kind").line, "button monitor needs button_state or a grid button");
        }
        return button_monitor(env, state, r.count("press_action", kDown), r.number("cost", -0.2));
    }
    if (kind == "n-monitor")
        return n_monitor(env, r.count("n", 5), r.number("cost", -0.2), r.number("miss_bonus", 0.001));
    if (kind == "limited-time") return limited_time_monitor(env, r.number("p", 0.8));
    if (kind == "limited-use") return limited_use_monitor(env, r.count("battery", 7));
    if (kind == "identity") return identity_monitor(env);
    if (kind == "always-unobservable") {
        std::vector<double> costs;
        if (r.has("action_rewards")) {
            const auto& e = r.scalar("action_rewards");
            for (const auto& w : words(e.value)) costs.push_back(Reader::to_double(w, e.line));
        } else {
            costs = {0.0};
        }
        return always_unobservable_monitor(env, costs);
    }
    if (kind == "blind") {
        std::set<std::pair<std::size_t, std::size_t>> hidden;
        std::vector<std::size_t> lines;
        const auto rows = tuples(r.all("hidden"), 2, &lines);
        for (std::size_t i = 0; i < rows.size(); ++i)
            hidden.insert({index_field(rows[i][0], env.n_states, lines[i], "env state"),
                           index_field(rows[i][1], env.n_actions, lines[i], "env action")});
        return blind_pairs_monitor(env, hidden);
    }
    if (kind == "explicit") return read_explicit_monitor(r, env);
    throw ParseError(r.scalar("kind").line, "unknown monitor kind '" + kind + "'");
}

} // namespace

MonMdp parse_monmdp(const std::string& text) {
    const Sections sections(text);
    if (!sections.has("monitor")) throw ParseError(sections.header("monitor"), "missing [monitor] section");
    if (sections.has("env") == sections.has("grid"))
        throw ParseError(sections.header("env"), "exactly one of [env] or [grid] is required");

    MonMdp mdp;
    {
        const Reader r(sections.get("mdp"), sections.header("mdp"));
        mdp.name = r.text("name", "instance");
        mdp.gamma = r.number("gamma", 0.99);
        mdp.horizon = r.count("horizon", 50);
        r.reject_unknown();
    }
    std::optional<GridLayout> grid;
    if (sections.has("grid")) {
        const Reader r(sections.get("grid"), sections.header("grid"));
        try {
            grid = read_grid(r);
        } catch (const ValidationError& e) {
            throw ParseError(sections.header("grid"), e.what());
        }
        mdp.env = make_grid_env(*grid, r.number("noise_sd", 0.0));
        mdp.grid_rows = grid->rows;
        mdp.grid_cols = grid->cols;
        r.reject_unknown();
    } else {
        const Reader r(sections.get("env"), sections.header("env"));
        mdp.env = read_env(r);
        r.reject_unknown();
    }
    {
        const Reader r(sections.get("monitor"), sections.header("monitor"));
        try {
            mdp.monitor = read_monitor(r, mdp.env, grid ? &*grid : nullptr);
        } catch (const ContractError& e) {
            throw ParseError(sections.header("monitor"), e.what());
        }
        r.reject_unknown();
    }
    mdp.validate();
    return mdp;
}

MonMdp load_monmdp(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_monmdp(buf.str());
}

namespace {
// Shortest text that parses back to the same double.
std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
} // namespace

std::string serialize_monmdp(const MonMdp& mdp) {
    const EnvModel& env = mdp.env;
    const MonitorModel& mon = mdp.monitor;
    std::ostringstream out;
    out << "[mdp]\nname = " << mdp.name << "\ngamma = " << shortest(mdp.gamma) << "\nhorizon = " << mdp.horizon
        << "\n\n[env]\nn_states = " << env.n_states << "\nn_actions = " << env.n_actions
        << "\nnoise_sd = " << shortest(env.reward_noise_sd) << "\nreward_bounds = " << shortest(env.reward_bounds.first)
        << ' ' << shortest(env.reward_bounds.second) << '\n';
    auto names = [&](const char* key, const std::vector<std::string>& v) {
        if (v.empty()) return;
        out << key << " =";
        for (const auto& n : v) out << ' ' << n;
        out << '\n';
    };
    names("state_names", env.state_names);
    names("action_names", env.action_names);
    out << "terminals =";
    for (std::size_t s = 0; s < env.n_states; ++s)
        if (env.is_terminal(s)) out << ' ' << s;
    out << '\n';
    for (std::size_t s = 0; s < env.n_states; ++s)
        if (env.initial_dist[s] > 0.0) out << "initial = " << s << ' ' << shortest(env.initial_dist[s]) << '\n';
    for (std::size_t s = 0; s < env.n_states; ++s)
        for (std::size_t a = 0; a < env.n_actions; ++a) {
            if (env.r(s, a) != 0.0) out << "reward = " << s << ' ' << a << ' ' << shortest(env.r(s, a)) << '\n';
            for (std::size_t n = 0; n < env.n_states; ++n)
                if (env.p(s, a, n) > 0.0)
                    out << "transition = " << s << ' ' << a << ' ' << n << ' ' << shortest(env.p(s, a, n)) << '\n';
        }

    out << "\n[monitor]\nkind = explicit\nn_states = " << mon.n_states << "\nn_actions = " << mon.n_actions
        << '\n';
    names("state_names", mon.state_names);
    names("action_names", mon.action_names);
    for (std::size_t m = 0; m < mon.n_states; ++m)
        if (mon.initial_dist[m] > 0.0) out << "initial = " << m << ' ' << shortest(mon.initial_dist[m]) << '\n';

    // Probe values used to read off observability; a truthful monitor either
    // echoes each of them or hides all of them.
    const double probes[] = {env.reward_bounds.first, env.reward_bounds.second, 0.123456789};
    for (std::size_t m = 0; m < mon.n_states; ++m)
        for (std::size_t se = 0; se < env.n_states; ++se)
            for (std::size_t am = 0; am < mon.n_actions; ++am)
                for (std::size_t ae = 0; ae < env.n_actions; ++ae)
                    for (std::size_t m2 = 0; m2 < mon.n_states; ++m2) {
                        const double pm = mon.p(m, se, am, ae, m2);
                        if (pm <= 0.0) continue;
                        out << "transition = " << m << ' ' << se << ' ' << am << ' ' << ae << ' ' << m2
                            << ' ' << shortest(pm) << '\n';
                        if (env.is_terminal(se)) continue;
                        for (std::size_t se2 = 0; se2 < env.n_states; ++se2) {
                            if (env.p(se, ae, se2) <= 0.0) continue;
                            const MonitorInput in{se, ae, se2, m, am, m2};
                            const double rm = mon.reward(in);
                            if (rm != 0.0)
                                out << "reward = " << m << ' ' << se << ' ' << am << ' ' << ae << ' '
                                    << se2 << ' ' << m2 << ' ' << shortest(rm) << '\n';
                            int shown = 0;
                            for (double v : probes) {
                                const Proxy p = mon.monitor_fn(v, in);
                                if (p.observed() && p.get() != v)
                                    throw ContractError("serialize_monmdp: monitor is not truthful");
                                shown += p.observed() ? 1 : 0;
                            }
                            if (shown != 0 && shown != 3)
                                throw ContractError(
                                    "serialize_monmdp: observability depends on the reward value");
                            if (shown == 3)
                                out << "observe = " << m << ' ' << se << ' ' << am << ' ' << ae << ' '
                                    << se2 << ' ' << m2 << '\n';
                        }
                    }
    return out.str();
}

void save_monmdp(const MonMdp& mdp, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write instance file " + path.string());
    out << serialize_monmdp(mdp);
}

} // namespace monmdp
