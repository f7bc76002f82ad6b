#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psm/harness.hpp"
#include "psm/random.hpp"

#include <sys/wait.h>
#include <unistd.h>

using namespace psm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("psm_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string small_config_text(const fs::path& out) {
    return "env = gridworld\nheight = 4\nwidth = 4\ngamma = 0.9\ndataset_size = 3000\n"
           "d = 6\nsteps = 30\nz_pool = 8\nz_batch = 4\ngoal_count = 3\ngoal = 5\nworkers = 2\n"
           "rng_seed = 11\nout = " + out.string() + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_config(
        "# comment\nenv = four_room\nsize = 9   # trailing\ngamma = 0.95\nd = 12\ninference = dual\n"
        "mass_bound = false\nrelax_scale = 1.5\nmode = minibatch\nw_head = amortized\nout = results\n",
        "/base");
    CHECK(c.env == "four_room");
    CHECK(c.size == 9);
    CHECK(c.gamma == 0.95);
    CHECK(c.model.d == 12);
    CHECK(c.inference.method == InferenceMethod::Dual);
    CHECK_FALSE(c.inference.mass_bound);
    CHECK(c.inference.relax_scale == 1.5);
    CHECK(c.model.mode == LossMode::Minibatch);
    CHECK(c.model.w_head == WHeadKind::Amortized);
    CHECK(c.out_dir == fs::path("/base/results"));
    CHECK(c.dataset_file() == fs::path("/base/results/dataset.psmd"));
    CHECK(c.model_file() == fs::path("/base/results/model.psmm"));
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("colour = blue\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("gamma\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("gamma =\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("gamma = 1.0\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("gamma = fast\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("d = 2.5\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("d = 0\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("env = maze\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("env = layout\nlayout = /no/such/file\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("mass_bound = maybe\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("relax_scale = -1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("slip = 2\n"), ValidationError);
    CHECK_THROWS_AS(load_config("/no/such/config.txt"), ValidationError);
}

TEST_CASE("environments from config") {
    const auto grid = make_environment(parse_config("height = 3\nwidth = 5\n"));
    CHECK(grid.mdp.n_states() == 15);
    CHECK(grid.diameter == 6);
    REQUIRE(grid.grid.has_value());
    CHECK(make_environment(parse_config("env = four_room\n")).mdp.n_states() == 104);

    const fs::path dir = scratch_dir("env");
    write_text(dir / "mdp.txt", to_mdp_text(random_mdp(3, 2, 0.9, 1)));
    write_text(dir / "maze.txt", "..#\n...\n");
    const auto text = make_environment(load_config([&] {
        write_text(dir / "a.cfg", "env = mdp\nmdp = mdp.txt\n");
        return dir / "a.cfg";
    }()));
    CHECK(text.mdp.n_states() == 3);
    CHECK_FALSE(text.grid.has_value());
    write_text(dir / "b.cfg", "env = layout\nlayout = maze.txt\n");
    CHECK(make_environment(load_config(dir / "b.cfg")).mdp.n_states() == 5);
    fs::remove_all(dir);
}

TEST_CASE("policy error against the oracle") {
    const auto env = make_environment(parse_config("height = 8\nwidth = 8\ngamma = 0.9\n"));
    double random_error = 0.0;
    for (int g = 0; g < 10; ++g) {
        const auto reward = goal_reward(env.mdp, g * 6);
        const auto vi = value_iteration(env.mdp, reward);
        const auto self = policy_error(vi.q, vi.greedy, 1e-9);
        CHECK(self.mismatches == 0);
        CHECK(self.counted > 0);
        CHECK(rollout_success(env.mdp, vi.greedy, g * 6, 4 * env.diameter) == 1.0);
        Rng rng(static_cast<std::uint64_t>(g));
        std::vector<int> random(64);
        for (auto& a : random) a = static_cast<int>(rng.uniform_index(5));
        random_error += policy_error(vi.q, random, 1e-9).fraction() / 10.0;
    }
    // a uniformly random action is optimal with probability 1/5 where the optimum is unique
    CHECK(std::abs(random_error - 0.8) < 0.05);
    CHECK_THROWS_AS(policy_error(Matrix::Zero(3, 2), {0, 1}, 1e-9), ValidationError);
}

TEST_CASE("ties are not counted") {
    QTable q(3, 2);
    q << 1, 1,
         2, 0,
         0, 3;
    const auto e = policy_error(q, {1, 1, 1}, 1e-9);
    CHECK(e.counted == 2);
    CHECK(e.mismatches == 1);
    CHECK(e.fraction() == 0.5);
    CHECK(PolicyErrorCount{}.fraction() == 0.0);
}

TEST_CASE("rollouts follow the most likely successor") {
    const auto env = make_environment(parse_config("height = 1\nwidth = 4\nslip = 0.2\n"));
    // all "right": every start reaches the last cell
    CHECK(rollout_success(env.mdp, {1, 1, 1, 1}, 3, 10) == 1.0);
    CHECK(rollout_success(env.mdp, {1, 1, 1, 1}, 3, 1) == 0.5);
    CHECK(rollout_success(env.mdp, {4, 4, 4, 4}, 3, 10) == 0.25);
}

TEST_CASE("report aggregates match the rows") {
    EvaluationReport report;
    const double errors[] = {0.1, 0.0, 0.3, 0.2};
    for (int i = 0; i < 4; ++i) {
        GoalEvaluation g;
        g.goal = i;
        g.policy_error = errors[i];
        g.success = i % 2 == 0;
        report.goals.push_back(g);
    }
    report.aggregate();
    CHECK(report.mean_error == doctest::Approx(0.15));
    CHECK(report.std_error == doctest::Approx(std::sqrt(0.05 / 3.0)));
    CHECK(report.success_rate == 0.5);
    const std::string csv = report.to_csv();
    CHECK(csv.rfind("goal,success,start_success,policy_error,mismatches,counted\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(report.to_table().find("mean policy error 0.1500") != std::string::npos);
    CHECK(report.timings_csv().find("total,") != std::string::npos);
    EvaluationReport empty;
    empty.aggregate();
    CHECK(empty.mean_error == 0.0);
}

TEST_CASE("heatmap layout") {
    const auto env = make_environment(parse_config("height = 3\nwidth = 4\n"));
    Vector values = Vector::Zero(12);
    values[env.grid->state_at(2, 1)] = 5.0;
    const std::string pgm = render_heatmap(env, values);
    const std::string header = "P5\n4 3\n255\n";
    REQUIRE(pgm.rfind(header, 0) == 0);
    REQUIRE(pgm.size() == header.size() + 12);
    const std::string pixels = pgm.substr(header.size());
    const auto peak = std::max_element(pixels.begin(), pixels.end(),
                                       [](char a, char b) { return static_cast<unsigned char>(a) < static_cast<unsigned char>(b); });
    CHECK(peak - pixels.begin() == 2 * 4 + 1);
    CHECK(static_cast<unsigned char>(*peak) == 255);
    CHECK(static_cast<unsigned char>(pixels[0]) == 1);
    CHECK_THROWS_AS(render_heatmap(env, Vector::Zero(3)), ValidationError);

    const fs::path dir = scratch_dir("heat");
    write_text(dir / "maze.txt", ".#.\n...\n");
    write_text(dir / "c.cfg", "env = layout\nlayout = maze.txt\n");
    const auto walled = make_environment(load_config(dir / "c.cfg"));
    const std::string w = render_heatmap(walled, Vector::LinSpaced(5, 0.0, 1.0));
    CHECK(w[std::string("P5\n3 2\n255\n").size() + 1] == '\0');
    fs::remove_all(dir);
}

TEST_CASE("csv formats") {
    QTable q(2, 2);
    q << 0.5, 1.0, -2.0, 0.25;
    CHECK(format_q_csv(q) == "state,q0,q1\n0,0.5,1\n1,-2,0.25\n");
    const auto env = make_environment(parse_config("height = 1\nwidth = 2\n"));
    CHECK(format_policy_csv({1, 3}, env) == "state,row,col,action,name\n0,0,0,1,right\n1,0,1,3,left\n");
}

TEST_CASE("reward files") {
    const fs::path dir = scratch_dir("reward");
    const auto mdp = random_mdp(3, 2, 0.9, 0);
    write_text(dir / "r1.txt", "1, 0, 2\n");
    CHECK(read_reward_file(dir / "r1.txt", mdp).values == (Vector(6) << 1, 1, 0, 0, 2, 2).finished());
    write_text(dir / "r2.txt", "1 1 0 0 2 2");
    CHECK(read_reward_file(dir / "r2.txt", mdp).values.size() == 6);
    write_text(dir / "r3.txt", "1 0 0 0 2 2");
    CHECK_THROWS(read_reward_file(dir / "r3.txt", mdp));
    write_text(dir / "r4.txt", "1 2");
    CHECK_THROWS_AS(read_reward_file(dir / "r4.txt", mdp), ValidationError);
    write_text(dir / "r5.txt", "1 x 2");
    CHECK_THROWS_AS(read_reward_file(dir / "r5.txt", mdp), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("evaluation goals are distinct and seeded") {
    const auto env = make_environment(parse_config("height = 3\nwidth = 3\n"));
    auto config = parse_config("height = 3\nwidth = 3\ngoal_count = 9\nrng_seed = 4\n");
    auto goals = evaluation_goals(env, config);
    std::sort(goals.begin(), goals.end());
    CHECK(std::adjacent_find(goals.begin(), goals.end()) == goals.end());
    CHECK(evaluation_goals(env, config) == evaluation_goals(env, config));
    config.goal_count = 20;
    CHECK(evaluation_goals(env, config).size() == 20);
}

TEST_CASE("atomic writes") {
    const fs::path dir = scratch_dir("atomic");
    write_file_atomic(dir / "x.bin", std::string("a\0b", 3));
    CHECK(read_file(dir / "x.bin") == std::string("a\0b", 3));
    write_file_atomic(dir / "x.bin", "second");
    CHECK(read_file(dir / "x.bin") == "second");
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
    CHECK_THROWS(read_file(dir / "missing"));
    fs::remove_all(dir);
}

TEST_CASE("commands are deterministic") {
    const fs::path root = scratch_dir("commands");
    const char* artifacts[] = {"dataset.psmd", "model.psmm", "loss_curve.csv", "q.csv", "policy.csv",
                               "heatmap.pgm", "inference.txt", "eval_report.txt", "eval.csv"};
    for (const char* run : {"a", "b"}) {
        const auto config = parse_config(small_config_text(root / run));
        fs::create_directories(config.out_dir);
        std::ostringstream log;
        cmd_collect(config, log);
        cmd_train(config, log);
        cmd_infer(config, log);
        const auto report = cmd_eval(config, log);
        CHECK(report.goals.size() == 3);
        CHECK(log.str().find("coverage") != std::string::npos);
    }
    for (const char* name : artifacts) {
        CAPTURE(name);
        CHECK(read_file(root / "a" / name) == read_file(root / "b" / name));
    }
    // loss curve: header plus one row per step
    const std::string curve = read_file(root / "a" / "loss_curve.csv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 31);

    // a zero reward gives a zero Q table
    write_text(root / "zero.txt", "0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0");
    auto config = parse_config(small_config_text(root / "a") + "reward = " + (root / "zero.txt").string() + "\n");
    std::ostringstream log;
    cmd_infer(config, log);
    const std::string q = read_file(root / "a" / "q.csv");
    CHECK(q.find("state,q0,q1,q2,q3,q4\n0,0,0,0,0,0\n") == 0);

    auto missing = parse_config(small_config_text(root / "c"));
    CHECK_THROWS_AS(cmd_train(missing, log), ValidationError);
    CHECK_THROWS_AS(cmd_eval(missing, log), ValidationError);
    fs::remove_all(root);
}

#ifdef PSM_CLI_PATH
TEST_CASE("command-line exit codes") {
    const fs::path root = scratch_dir("cli");
    write_text(root / "ok.cfg", small_config_text(root / "out"));
    write_text(root / "bad.cfg", "gamma = 3\n");
    write_text(root / "diverge.cfg", small_config_text(root / "out") + "init_scale = 1e200\n");
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(PSM_CLI_PATH) + " " + args + " > " + (root / "log.txt").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    CHECK(run("collect --config " + (root / "ok.cfg").string()) == 0);
    CHECK(fs::exists(root / "out" / "dataset.psmd"));
    CHECK(run("collect --config " + (root / "ok.cfg").string() + " --seed 3 --out " + (root / "alt").string()) == 0);
    CHECK(fs::exists(root / "alt" / "dataset.psmd"));
    CHECK(read_file(root / "alt" / "dataset.psmd") != read_file(root / "out" / "dataset.psmd"));
    CHECK(run("collect --config " + (root / "bad.cfg").string()) == 2);
    CHECK(run("train --config " + (root / "diverge.cfg").string()) == 3);
    CHECK(run("eval --config " + (root / "ok.cfg").string() + " --set goal_count=0") == 2);
    CHECK(run("frobnicate --config " + (root / "ok.cfg").string()) != 0);
    fs::remove_all(root);
}
#endif
