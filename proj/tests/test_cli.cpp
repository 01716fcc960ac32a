#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

// Runs the real binary through the shell; stderr is folded into the output.
Result run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + " \"" MONMDP_CLI_PATH "\" " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("monmdp_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> v;
    for (std::string l; std::getline(in, l);) v.push_back(l);
    return v;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

const std::string kCurves = "monmdp,agent,seed,step,eval_return";
const std::string kAggregate = "monmdp,agent,noisy,percent_optimal,mean_steps,ci95,n_seeds";
const std::string kPolicy = "env_state,mon_state,env_action,mon_action";

} // namespace

TEST(Cli, RunWritesAllOutputs) {
    const fs::path dir = fresh_dir("run");
    const auto r = run_cli("run --env simple --agent reward-model --seeds 4 --jobs 2 --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("reward-model"), std::string::npos) << r.out;
    const auto curves = lines(dir / "curves.csv");
    ASSERT_FALSE(curves.empty());
    EXPECT_EQ(curves[0], kCurves);
    EXPECT_EQ(curves.size(), 1u + 4 * 1000);
    const auto agg = lines(dir / "aggregate.csv");
    ASSERT_EQ(agg.size(), 2u);
    EXPECT_EQ(agg[0], kAggregate);
    EXPECT_TRUE(starts_with(agg[1], "simple,reward-model,0,100,")) << agg[1];
    const auto pol = lines(dir / "policy.csv");
    ASSERT_EQ(pol.size(), 1u + 9);
    EXPECT_EQ(pol[0], kPolicy);

    std::ifstream mf(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(mf);
    EXPECT_EQ(manifest["command"], "run");
    const auto& suite = manifest["suites"][0];
    EXPECT_EQ(suite["env"], "simple");
    EXPECT_EQ(suite["total_steps"], 10000);
    EXPECT_EQ(suite["n_seeds"], 4);
    EXPECT_EQ(suite["q_init"], -10.0);
    EXPECT_NEAR(suite["optimal_return"].get<double>(), 0.99, 1e-12);
}

TEST(Cli, JobsDoNotChangeOutput) {
    const fs::path a = fresh_dir("jobs1"), b = fresh_dir("jobs3");
    const std::string common = "run --env button --agent sequential --seeds 5 --steps 2000";
    ASSERT_EQ(run_cli(common + " --jobs 1 --out " + a.string()).code, 0);
    ASSERT_EQ(run_cli(common + " --jobs 3 --out " + b.string()).code, 0);
    EXPECT_EQ(lines(a / "curves.csv"), lines(b / "curves.csv"));
    EXPECT_EQ(lines(a / "aggregate.csv"), lines(b / "aggregate.csv"));
}

TEST(Cli, NoisyRunAndEnvVariableOutput) {
    const fs::path dir = fresh_dir("noisy");
    const auto r = run_cli("run --env penalty --agent oracle --noisy --noise-sd 0.1 --seeds 2 --steps 3000 "
                           "--window 500 --eval-every 20 --seed-base 7 --alpha 0.5 --q-init 0",
                           "MONMDP_OUT=" + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto curves = lines(dir / "curves.csv");
    EXPECT_EQ(curves.size(), 1u + 2 * 150);
    EXPECT_TRUE(starts_with(curves[1], "penalty,oracle,7,20,")) << curves[1];
    EXPECT_TRUE(starts_with(lines(dir / "aggregate.csv")[1], "penalty,oracle,1,"));
    std::ifstream mf(dir / "manifest.json");
    const auto suite = nlohmann::json::parse(mf)["suites"][0];
    EXPECT_EQ(suite["noise_sd"], 0.1);
    EXPECT_EQ(suite["convergence_window"], 500);
    EXPECT_EQ(suite["alpha"], 0.5);
    EXPECT_EQ(suite["oracle_reward_model"], true);
}

TEST(Cli, RunFromInstanceFile) {
    const fs::path dir = fresh_dir("file");
    const std::string file = std::string(MONMDP_DATA_DIR) + "/chain_abc.ini";
    const auto r = run_cli("run --env " + file + " --agent constant-assign --unobservable-value -1 --seeds 2 "
                           "--steps 1000 --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(starts_with(lines(dir / "policy.csv")[1], "A,OFF,")) << lines(dir / "policy.csv")[1];
}

TEST(Cli, SweepUnobservable) {
    const fs::path dir = fresh_dir("sweep_u");
    const auto r = run_cli("sweep-unobservable --envs simple,penalty --values -1,0.5 --seeds 2 --steps 1000 --out " +
                           dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto agg = lines(dir / "aggregate.csv");
    ASSERT_EQ(agg.size(), 5u);
    for (std::size_t i = 1; i < agg.size(); ++i) EXPECT_TRUE(starts_with(agg[i], i < 3 ? "simple,constant-assign," : "penalty,constant-assign,"));
    EXPECT_EQ(lines(dir / "curves.csv").size(), 1u + 4 * 2 * 100);
    EXPECT_FALSE(fs::exists(dir / "policy.csv"));
}

TEST(Cli, SweepQinit) {
    const fs::path dir = fresh_dir("sweep_q");
    const auto r = run_cli("sweep-qinit --envs simple --values 1 --agents joint,ignore --seeds 2 --steps 1000 --out " +
                           dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto agg = lines(dir / "aggregate.csv");
    ASSERT_EQ(agg.size(), 3u);
    EXPECT_TRUE(starts_with(agg[1], "simple,joint,"));
    EXPECT_TRUE(starts_with(agg[2], "simple,ignore,"));
    std::ifstream mf(dir / "manifest.json");
    EXPECT_EQ(nlohmann::json::parse(mf)["suites"][1]["q_init"], 1.0);
}

TEST(Cli, ClassifyReportAndCsv) {
    const auto r = run_cli("classify --env button");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("invariant:                no"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("explicit monitor actions: no"), std::string::npos) << r.out;
    const auto c = run_cli("classify --csv --env simple --env hopeless --env " + std::string(MONMDP_DATA_DIR) +
                           "/blind_corridor.ini");
    ASSERT_EQ(c.code, 0) << c.out;
    EXPECT_TRUE(starts_with(c.out, "instance,label,")) << c.out;
    EXPECT_NE(c.out.find("\nsimple,solvable,"), std::string::npos) << c.out;
    EXPECT_NE(c.out.find("\nhopeless,hopeless,"), std::string::npos) << c.out;
    EXPECT_NE(c.out.find("\nblind-corridor,non-hopeless-unknown,"), std::string::npos) << c.out;
}

TEST(Cli, RenderPolicies) {
    const auto opt = run_cli("render-policy --env button --policy optimal");
    ASSERT_EQ(opt.code, 0) << opt.out;
    EXPECT_NE(opt.out.find("monitor state ON:"), std::string::npos) << opt.out;
    EXPECT_NE(opt.out.find("monitor state OFF:"), std::string::npos) << opt.out;
    const auto mm = run_cli("render-policy --env single-blind --policy minimax");
    ASSERT_EQ(mm.code, 0) << mm.out;
    EXPECT_NE(mm.out.find("G"), std::string::npos);
    // Constant-assign(0) learns to cross the penalty column without asking.
    const auto ca = run_cli("render-policy --env penalty --agent constant-assign --unobservable-value 0 --seed 1");
    ASSERT_EQ(ca.code, 0) << ca.out;
    EXPECT_TRUE(starts_with(ca.out, "monitor state OFF:\n>/NO-OP")) << ca.out;
    const auto chain = run_cli("render-policy --env chain-joint --policy optimal");
    ASSERT_EQ(chain.code, 0) << chain.out;
    EXPECT_TRUE(starts_with(chain.out, "env_state,mon_state,env_action,mon_action")) << chain.out;
}

TEST(Cli, ListEnvs) {
    const auto r = run_cli("list-envs");
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* name : {"simple", "penalty", "button", "n-monitor", "limited-time", "limited-use"})
        EXPECT_NE(r.out.find(std::string("\n") + name + " "), std::string::npos) << name;
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("frobnicate").code, 1);
    EXPECT_EQ(run_cli("run --bogus-flag").code, 1);
    EXPECT_EQ(run_cli("run --seeds 0").code, 1);
    EXPECT_EQ(run_cli("run --agent sarsa --seeds 1 --steps 100").code, 1);
    EXPECT_EQ(run_cli("run --env no-such-env --seeds 1 --steps 100").code, 1);
    EXPECT_EQ(run_cli("classify").code, 1);
    EXPECT_EQ(run_cli("render-policy --policy bogus").code, 1);
    EXPECT_EQ(run_cli("sweep-qinit --values 1,x --seeds 1 --steps 100").code, 1);
    EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, ValidationErrorsExitTwo) {
    const fs::path bad = fs::temp_directory_path() / "monmdp_cli_bad.ini";
    std::ofstream(bad) << "[grid]\nrows = 3\nbogus = 1\n";
    const auto r = run_cli("classify --env " + bad.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
    const auto v = run_cli("run --seeds 1 --steps 100 --eval-every 7 --out " + fresh_dir("bad").string());
    EXPECT_EQ(v.code, 2);
    EXPECT_NE(v.out.find("eval_every"), std::string::npos) << v.out;
    EXPECT_EQ(run_cli("run --seeds 1 --steps 100 --window 100").code, 2);
    EXPECT_EQ(run_cli("run --seeds 1 --steps 100 --alpha 2").code, 2);
}
