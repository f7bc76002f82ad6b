#include "psm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "psm/codebook.hpp"
#include "psm/random.hpp"

namespace psm {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kActionNames[kGridActions] = {"up", "right", "down", "left", "stay"};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

long long parse_integer(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects an integer, got '" + value + "'");
    }
    if (used != value.size()) throw ValidationError("config: " + key + " expects an integer, got '" + value + "'");
    return out;
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        return parse_double(value);
    } catch (const Error&) {
        throw ValidationError("config: " + key + " expects a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("config: " + key + " expects true or false, got '" + value + "'");
}

int bounded_int(const std::string& key, const std::string& value, long long lo, long long hi) {
    const long long v = parse_integer(key, value);
    if (v < lo || v > hi) {
        throw ValidationError("config: " + key + " = " + value + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64_mix(seed + stream * kSplitMixIncrement);
}

}  // namespace

fs::path ExperimentConfig::dataset_file() const {
    return dataset_path.empty() ? out_dir / "dataset.psmd" : dataset_path;
}

fs::path ExperimentConfig::model_file() const { return model_path.empty() ? out_dir / "model.psmm" : model_path; }

void ExperimentConfig::validate() const {
    if (env != "gridworld" && env != "four_room" && env != "layout" && env != "mdp") {
        throw ValidationError("config: env must be gridworld, four_room, layout or mdp");
    }
    if (env == "layout" && !fs::exists(layout_path)) throw ValidationError("config: layout file not found: " + layout_path.string());
    if (env == "mdp" && !fs::exists(mdp_path)) throw ValidationError("config: mdp file not found: " + mdp_path.string());
    if (!reward_path.empty() && !fs::exists(reward_path)) {
        throw ValidationError("config: reward file not found: " + reward_path.string());
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("config: gamma must lie in [0, 1)");
    if (!(slip >= 0.0 && slip <= 1.0)) throw ValidationError("config: slip must lie in [0, 1]");
    if (dataset_size == 0) throw ValidationError("config: dataset_size must be positive");
    if (goal_count < 1) throw ValidationError("config: goal_count must be at least 1");
    if (!(tie_tolerance >= 0.0)) throw ValidationError("config: tie_tolerance must be nonnegative");
    if (!(inference.relax_scale > 0.0 && std::isfinite(inference.relax_scale))) {
        throw ValidationError("config: relax_scale must be positive");
    }
    model.validate();
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
    ExperimentConfig c;
    auto resolve = [&](const std::string& value) {
        const fs::path p(value);
        return p.is_absolute() ? p : base_dir / p;
    };
    std::istringstream in(text);
    int line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty value for " + key);

        if (key == "env") c.env = value;
        else if (key == "height") c.height = bounded_int(key, value, 1, 1000);
        else if (key == "width") c.width = bounded_int(key, value, 1, 1000);
        else if (key == "size") c.size = bounded_int(key, value, 7, 1000);
        else if (key == "layout") c.layout_path = resolve(value);
        else if (key == "mdp") c.mdp_path = resolve(value);
        else if (key == "slip") c.slip = parse_number(key, value);
        else if (key == "gamma") c.gamma = parse_number(key, value);
        else if (key == "dataset_size") c.dataset_size = static_cast<std::size_t>(bounded_int(key, value, 1, 2'000'000'000));
        else if (key == "dataset") c.dataset_path = resolve(value);
        else if (key == "model") c.model_path = resolve(value);
        else if (key == "d") c.model.d = bounded_int(key, value, 1, 4096);
        else if (key == "steps") c.model.steps = bounded_int(key, value, 0, 100'000'000);
        else if (key == "learning_rate") c.model.learning_rate = parse_number(key, value);
        else if (key == "target_momentum") c.model.target_momentum = parse_number(key, value);
        else if (key == "z_pool") c.model.z_pool = bounded_int(key, value, 1, 1'000'000);
        else if (key == "z_batch") c.model.z_batch = bounded_int(key, value, 1, 1'000'000);
        else if (key == "ortho_weight") c.model.ortho_weight = parse_number(key, value);
        else if (key == "init_scale") c.model.init_scale = parse_number(key, value);
        else if (key == "mode") c.model.mode = parse_loss_mode(value);
        else if (key == "w_head") c.model.w_head = parse_w_head(value);
        else if (key == "minibatch") c.model.minibatch = bounded_int(key, value, 1, 100'000'000);
        else if (key == "log_every") c.model.log_every = bounded_int(key, value, 0, 100'000'000);
        else if (key == "inference") c.inference.method = parse_inference_method(value);
        else if (key == "mass_bound") c.inference.mass_bound = parse_bool(key, value);
        else if (key == "relax_infeasible") c.inference.relax_infeasible = parse_bool(key, value);
        else if (key == "relax_scale") c.inference.relax_scale = parse_number(key, value);
        else if (key == "dual_w_step") c.inference.dual.w_step = parse_number(key, value);
        else if (key == "dual_lambda_step") c.inference.dual.lambda_step = parse_number(key, value);
        else if (key == "dual_iterations") c.inference.dual.max_iterations = bounded_int(key, value, 1, 1'000'000'000);
        else if (key == "dual_tol") c.inference.dual.tol = parse_number(key, value);
        else if (key == "goal_count") c.goal_count = bounded_int(key, value, 1, 1'000'000);
        else if (key == "goal") c.goal = bounded_int(key, value, 0, 1'000'000'000);
        else if (key == "reward") c.reward_path = resolve(value);
        else if (key == "tie_tolerance") c.tie_tolerance = parse_number(key, value);
        else if (key == "rng_seed") c.rng_seed = static_cast<std::uint64_t>(parse_integer(key, value));
        else if (key == "out") c.out_dir = resolve(value);
        else if (key == "workers") c.workers = bounded_int(key, value, 0, 1024);
        else throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
    return parse_config(read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

Environment make_environment(const ExperimentConfig& config) {
    auto from_grid = [](GridWorld world) {
        const int diameter = grid_diameter(world);
        TabularMdp mdp = world.mdp;
        return Environment{std::move(mdp), std::move(world), diameter};
    };
    if (config.env == "gridworld" || config.env == "four_room" || config.env == "layout") {
        GridSpec spec = config.env == "gridworld" ? open_grid_spec(config.height, config.width)
                        : config.env == "four_room" ? four_room_spec(config.size)
                                                    : parse_grid_layout(read_file(config.layout_path));
        spec.slip = config.slip;
        return from_grid(build_gridworld(spec, config.gamma));
    }
    std::istringstream in(read_file(config.mdp_path));
    TabularMdp mdp = read_mdp_text(in).with_gamma(config.gamma);
    const auto report = validate_mdp(mdp);
    if (!report.ok()) throw ValidationError("mdp file: " + report.summary());
    return Environment{std::move(mdp), std::nullopt, mdp.n_states()};
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw ValidationError("cannot move output into place at " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

PolicyErrorCount policy_error(const QTable& oracle_q, const std::vector<int>& policy, double tie_tol) {
    if (static_cast<Eigen::Index>(policy.size()) != oracle_q.rows()) throw ValidationError("policy_error: size mismatch");
    const auto optimal = optimal_action_sets(oracle_q, tie_tol);
    PolicyErrorCount out;
    for (std::size_t s = 0; s < policy.size(); ++s) {
        if (std::count(optimal[s].begin(), optimal[s].end(), true) != 1) continue;
        ++out.counted;
        if (!optimal[s][static_cast<std::size_t>(policy[s])]) ++out.mismatches;
    }
    return out;
}

double rollout_success(const TabularMdp& mdp, const std::vector<int>& policy, StateIndex goal, int max_steps) {
    const int n_states = mdp.n_states();
    std::vector<int> next(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) {
        Eigen::Index best = 0;
        mdp.transition().row(pair_index(s, policy[static_cast<std::size_t>(s)], mdp.n_actions())).maxCoeff(&best);
        next[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    int reached = 0;
    for (int start = 0; start < n_states; ++start) {
        int s = start;
        for (int t = 0; t < max_steps && s != goal; ++t) s = next[static_cast<std::size_t>(s)];
        reached += s == goal ? 1 : 0;
    }
    return static_cast<double>(reached) / n_states;
}

GoalEvaluation evaluate_goal(const Environment& env, const PsmModel& model, StateIndex goal,
                             const ModelInferenceOptions& options, double tie_tol) {
    const RewardFunction reward = goal_reward(env.mdp, goal);
    const auto oracle = value_iteration(env.mdp, reward);
    const InferenceResult inferred = infer_w_model(model, reward, options);
    const std::vector<int> policy = greedy_policy(q_star(model, inferred.w, reward));
    const PolicyErrorCount errors = policy_error(oracle.q, policy, tie_tol);
    GoalEvaluation out;
    out.goal = goal;
    out.start_success = rollout_success(env.mdp, policy, goal, 4 * std::max(env.diameter, 1));
    out.success = out.start_success == 1.0;
    out.policy_error = errors.fraction();
    out.mismatches = errors.mismatches;
    out.counted = errors.counted;
    out.infer_seconds = inferred.report.wall_seconds;
    return out;
}

void EvaluationReport::aggregate() {
    if (goals.empty()) {
        mean_error = std_error = success_rate = 0.0;
        return;
    }
    const double n = static_cast<double>(goals.size());
    double sum = 0.0;
    double successes = 0.0;
    for (const auto& g : goals) {
        sum += g.policy_error;
        successes += g.success ? 1.0 : 0.0;
    }
    mean_error = sum / n;
    double var = 0.0;
    for (const auto& g : goals) var += (g.policy_error - mean_error) * (g.policy_error - mean_error);
    std_error = goals.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    success_rate = successes / n;
}

EvaluationReport evaluate_model(const Environment& env, const PsmModel& model, const std::vector<StateIndex>& goals,
                                const ModelInferenceOptions& options, double tie_tol, int workers) {
    const auto start = Clock::now();
    EvaluationReport report;
    report.goals.resize(goals.size());
    const int threads = std::max(1, std::min<int>(workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency()),
                                                  static_cast<int>(goals.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    auto work = [&](int id) {
        try {
            for (std::size_t i = next++; i < goals.size(); i = next++) {
                report.goals[i] = evaluate_goal(env, model, goals[i], options, tie_tol);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(id)] = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    report.aggregate();
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

std::string EvaluationReport::to_table() const {
    std::ostringstream out;
    out << std::fixed;
    out << "goal  success  start_success  policy_error  mismatches  counted\n";
    for (const auto& g : goals) {
        out << std::setw(4) << g.goal << "  " << std::setw(7) << (g.success ? "yes" : "no") << "  " << std::setw(13)
            << std::setprecision(4) << g.start_success << "  " << std::setw(12) << g.policy_error << "  "
            << std::setw(10) << g.mismatches << "  " << std::setw(7) << g.counted << '\n';
    }
    out << std::setprecision(4) << "mean policy error " << mean_error << " +- " << std_error << " (std over "
        << goals.size() << " goals)\n"
        << "success rate " << success_rate << '\n';
    return out.str();
}

std::string EvaluationReport::to_csv() const {
    std::ostringstream out;
    out << "goal,success,start_success,policy_error,mismatches,counted\n";
    for (const auto& g : goals) {
        out << g.goal << ',' << (g.success ? 1 : 0) << ',' << format_double(g.start_success) << ','
            << format_double(g.policy_error) << ',' << g.mismatches << ',' << g.counted << '\n';
    }
    return out.str();
}

std::string EvaluationReport::timings_csv() const {
    std::ostringstream out;
    out << "goal,infer_seconds\n";
    for (const auto& g : goals) out << g.goal << ',' << format_double(g.infer_seconds) << '\n';
    out << "total," << format_double(wall_seconds) << '\n';
    return out.str();
}

std::string render_heatmap(const Environment& env, const Vector& state_values) {
    const int n_states = env.mdp.n_states();
    if (state_values.size() != n_states) throw ValidationError("render_heatmap: value count mismatch");
    const int width = env.grid ? env.grid->spec.width : n_states;
    const int height = env.grid ? env.grid->spec.height : 1;
    const double lo = state_values.minCoeff();
    const double hi = state_values.maxCoeff();
    std::string pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), '\0');
    for (int s = 0; s < n_states; ++s) {
        const double t = hi > lo ? (state_values[s] - lo) / (hi - lo) : 1.0;
        const auto level = static_cast<unsigned char>(1 + std::lround(254.0 * t));
        const std::size_t at = env.grid ? static_cast<std::size_t>(env.grid->cells[static_cast<std::size_t>(s)].first * width +
                                                                   env.grid->cells[static_cast<std::size_t>(s)].second)
                                        : static_cast<std::size_t>(s);
        pixels[at] = static_cast<char>(level);
    }
    return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n" + pixels;
}

std::string format_q_csv(const QTable& q) {
    std::ostringstream out;
    out << "state";
    for (Eigen::Index a = 0; a < q.cols(); ++a) out << ",q" << a;
    out << '\n';
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        out << s;
        for (Eigen::Index a = 0; a < q.cols(); ++a) out << ',' << format_double(q(s, a) + 0.0);  // no -0
        out << '\n';
    }
    return out.str();
}

std::string format_policy_csv(const std::vector<int>& policy, const Environment& env) {
    std::ostringstream out;
    out << (env.grid ? "state,row,col,action,name\n" : "state,action\n");
    for (std::size_t s = 0; s < policy.size(); ++s) {
        out << s;
        if (env.grid) {
            const auto [r, c] = env.grid->cells[s];
            out << ',' << r << ',' << c;
        }
        out << ',' << policy[s];
        if (env.grid) out << ',' << kActionNames[policy[s]];
        out << '\n';
    }
    return out.str();
}

RewardFunction read_reward_file(const fs::path& path, const TabularMdp& mdp) {
    std::string text = read_file(path);
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream in(text);
    std::vector<double> values;
    for (std::string token; in >> token;) {
        try {
            values.push_back(parse_double(token));
        } catch (const Error&) {
            throw ValidationError("reward file: malformed number '" + token + "'");
        }
        if (!std::isfinite(values.back())) throw ValidationError("reward file: non-finite value");
    }
    const auto n = static_cast<std::size_t>(mdp.n_states());
    if (values.size() == n) {
        return RewardFunction::state_only(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(n)),
                                          mdp.n_actions());
    }
    if (values.size() == n * static_cast<std::size_t>(mdp.n_actions())) {
        RewardFunction r{Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()))};
        r.state_values(mdp.n_actions());  // rejects action-dependent rewards
        return r;
    }
    throw ValidationError("reward file: expected " + std::to_string(n) + " or " +
                          std::to_string(n * static_cast<std::size_t>(mdp.n_actions())) + " values, found " +
                          std::to_string(values.size()));
}

std::vector<StateIndex> evaluation_goals(const Environment& env, const ExperimentConfig& config) {
    // Distinct goals when possible: partial Fisher-Yates over the states.
    const int n_states = env.mdp.n_states();
    Rng rng(derived_seed(config.rng_seed, 3));
    std::vector<StateIndex> states(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) states[static_cast<std::size_t>(s)] = s;
    std::vector<StateIndex> goals;
    for (int i = 0; i < config.goal_count; ++i) {
        const int remaining = n_states - (i % n_states);
        if (i % n_states == 0 && i > 0) {
            for (int s = 0; s < n_states; ++s) states[static_cast<std::size_t>(s)] = s;
        }
        const auto pick = static_cast<std::size_t>(i % n_states) + rng.uniform_index(static_cast<std::uint64_t>(remaining));
        std::swap(states[static_cast<std::size_t>(i % n_states)], states[pick]);
        goals.push_back(states[static_cast<std::size_t>(i % n_states)]);
    }
    return goals;
}

fs::path cmd_collect(const ExperimentConfig& config, std::ostream& log) {
    const Environment env = make_environment(config);
    const OfflineDataset dataset =
        build_dataset(env.mdp, uniform_policy(env.mdp), config.dataset_size, derived_seed(config.rng_seed, 1));
    std::ostringstream bytes;
    write_dataset(bytes, dataset);
    const fs::path path = config.dataset_file();
    write_file_atomic(path, bytes.str());
    log << "collected " << dataset.size() << " transitions over " << env.mdp.n_states() << " states x "
        << env.mdp.n_actions() << " actions\n"
        << "coverage " << format_double(dataset.coverage()) << '\n'
        << "wrote " << path.string() << '\n';
    return path;
}

fs::path cmd_train(const ExperimentConfig& config, std::ostream& log) {
    const Environment env = make_environment(config);
    const fs::path data_path = config.dataset_file();
    if (!fs::exists(data_path)) throw ValidationError("dataset not found: " + data_path.string() + " (run collect first)");
    std::istringstream data_in(read_file(data_path));
    const OfflineDataset dataset = read_dataset(data_in);
    if (dataset.n_states() != env.mdp.n_states() || dataset.n_actions() != env.mdp.n_actions()) {
        throw ValidationError("dataset shape does not match the configured environment");
    }
    const TrainingProblem problem = TrainingProblem::from_dataset(dataset, config.gamma);
    const auto start = Clock::now();
    const PsmModel model = train_psm(problem, config.model, derived_seed(config.rng_seed, 2),
                                     [&](const TrainingProgress& p) {
                                         log << "step " << p.step << " loss " << p.loss << " ortho " << p.ortho << '\n';
                                     });
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();

    std::ostringstream bytes;
    write_model(bytes, model);
    const fs::path path = config.model_file();
    write_file_atomic(path, bytes.str());
    std::ostringstream curve;
    curve << "step,loss,ortho\n";
    for (std::size_t i = 0; i < model.loss_curve.size(); ++i) {
        curve << i << ',' << format_double(model.loss_curve[i]) << ',' << format_double(model.ortho_curve[i]) << '\n';
    }
    write_file_atomic(config.out_dir / "loss_curve.csv", curve.str());
    log << "trained " << config.model.steps << " steps in " << std::fixed << std::setprecision(1) << seconds << " s\n"
        << "wrote " << path.string() << '\n';
    return path;
}

namespace {

PsmModel load_model_for(const ExperimentConfig& config, const Environment& env) {
    const fs::path path = config.model_file();
    if (!fs::exists(path)) throw ValidationError("model not found: " + path.string() + " (run train first)");
    std::istringstream in(read_file(path));
    PsmModel model = read_model(in);
    if (model.n_states() != env.mdp.n_states() || model.n_actions() != env.mdp.n_actions()) {
        throw ValidationError("model shape does not match the configured environment");
    }
    return model;
}

}  // namespace

fs::path cmd_infer(const ExperimentConfig& config, std::ostream& log) {
    const Environment env = make_environment(config);
    const PsmModel model = load_model_for(config, env);
    RewardFunction reward;
    if (!config.reward_path.empty()) {
        reward = read_reward_file(config.reward_path, env.mdp);
    } else if (config.goal) {
        if (*config.goal >= env.mdp.n_states()) throw ValidationError("config: goal outside the state range");
        reward = goal_reward(env.mdp, *config.goal);
    } else {
        throw ValidationError("infer needs `goal` or `reward` in the config");
    }
    const InferenceResult inferred = infer_w_model(model, reward, config.inference);
    const QTable q = q_star(model, inferred.w, reward);
    const std::vector<int> policy = greedy_policy(q);
    write_file_atomic(config.out_dir / "q.csv", format_q_csv(q));
    write_file_atomic(config.out_dir / "policy.csv", format_policy_csv(policy, env));
    write_file_atomic(config.out_dir / "heatmap.pgm", render_heatmap(env, q.rowwise().maxCoeff()));
    write_file_atomic(config.out_dir / "inference.txt", inferred.report.to_text(false));
    log << inferred.report.to_text() << "wrote q.csv, policy.csv, heatmap.pgm, inference.txt under "
        << config.out_dir.string() << '\n';
    return config.out_dir;
}

EvaluationReport cmd_eval(const ExperimentConfig& config, std::ostream& log) {
    const Environment env = make_environment(config);
    const PsmModel model = load_model_for(config, env);
    const std::vector<StateIndex> goals = evaluation_goals(env, config);
    EvaluationReport report = evaluate_model(env, model, goals, config.inference, config.tie_tolerance, config.workers);
    write_file_atomic(config.out_dir / "eval_report.txt", report.to_table());
    write_file_atomic(config.out_dir / "eval.csv", report.to_csv());
    write_file_atomic(config.out_dir / "eval_timings.csv", report.timings_csv());
    log << report.to_table() << "wall time " << std::fixed << std::setprecision(2) << report.wall_seconds << " s\n";
    return report;
}

}  // namespace psm
