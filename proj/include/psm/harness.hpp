#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psm/env.hpp"
#include "psm/infer.hpp"
#include "psm/learn.hpp"

namespace psm {

struct ExperimentConfig {
    // Environment.
    std::string env = "gridworld";  // gridworld | four_room | layout | mdp
    int height = 8;
    int width = 8;
    int size = 11;  // four_room
    std::filesystem::path layout_path;
    std::filesystem::path mdp_path;
    double slip = 0.0;
    double gamma = 0.98;

    // Data and model.
    std::size_t dataset_size = 100000;
    PsmConfig model;

    // Inference and evaluation.
    ModelInferenceOptions inference;
    int goal_count = 10;
    std::optional<int> goal;
    std::filesystem::path reward_path;
    double tie_tolerance = 1e-9;

    std::uint64_t rng_seed = 0;
    std::filesystem::path out_dir = "psm_out";
    std::filesystem::path dataset_path;  // default out_dir/dataset.psmd
    std::filesystem::path model_path;    // default out_dir/model.psmm
    int workers = 0;                     // 0 = hardware concurrency

    std::filesystem::path dataset_file() const;
    std::filesystem::path model_file() const;
    void validate() const;
};

/// `key = value` lines; '#' starts a comment. Relative paths resolve against
/// base_dir. Unknown keys and out-of-range values throw ValidationError.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

struct Environment {
    TabularMdp mdp;
    std::optional<GridWorld> grid;
    int diameter = 0;  // longest shortest path, in steps
};

Environment make_environment(const ExperimentConfig& config);

/// Writes via a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

struct GoalEvaluation {
    int goal = 0;
    bool success = false;         // every start reaches the goal
    double start_success = 0.0;   // fraction of starts that reach it
    double policy_error = 0.0;    // mismatches / counted
    int mismatches = 0;
    int counted = 0;              // states with a unique optimal action
    double infer_seconds = 0.0;
};

struct EvaluationReport {
    std::vector<GoalEvaluation> goals;
    double mean_error = 0.0;
    double std_error = 0.0;
    double success_rate = 0.0;
    double wall_seconds = 0.0;

    /// Recomputes the aggregates from the per-goal rows.
    void aggregate();
    // Table and CSV carry no timings, so reruns produce identical bytes.
    std::string to_table() const;
    std::string to_csv() const;
    std::string timings_csv() const;
};

struct PolicyErrorCount {
    int mismatches = 0;
    int counted = 0;
    double fraction() const { return counted == 0 ? 0.0 : static_cast<double>(mismatches) / counted; }
};

/// Compares a deterministic policy against the optimal action sets of an
/// oracle Q, skipping states where more than one action is optimal.
PolicyErrorCount policy_error(const QTable& oracle_q, const std::vector<int>& policy, double tie_tol);

/// Fraction of start states whose rollout reaches the goal within
/// max_steps, following the most likely successor of each greedy action.
double rollout_success(const TabularMdp& mdp, const std::vector<int>& policy, StateIndex goal, int max_steps);

GoalEvaluation evaluate_goal(const Environment& env, const PsmModel& model, StateIndex goal,
                             const ModelInferenceOptions& options, double tie_tol);

/// Runs every goal (in parallel when workers > 1); row order follows goals.
EvaluationReport evaluate_model(const Environment& env, const PsmModel& model, const std::vector<StateIndex>& goals,
                                const ModelInferenceOptions& options, double tie_tol, int workers);

/// Binary (P5) graymap of per-state values laid out on the grid; walls are 0
/// and values are scaled linearly to 1..255.
std::string render_heatmap(const Environment& env, const Vector& state_values);

std::string format_q_csv(const QTable& q);
std::string format_policy_csv(const std::vector<int>& policy, const Environment& env);

/// State reward read as whitespace/comma separated numbers: either |S|
/// values or |S|*|A| values constant across actions.
RewardFunction read_reward_file(const std::filesystem::path& path, const TabularMdp& mdp);

std::vector<StateIndex> evaluation_goals(const Environment& env, const ExperimentConfig& config);

// Commands. Each writes its artifacts under config.out_dir and a short
// human-readable summary to `log`.
std::filesystem::path cmd_collect(const ExperimentConfig& config, std::ostream& log);
std::filesystem::path cmd_train(const ExperimentConfig& config, std::ostream& log);
std::filesystem::path cmd_infer(const ExperimentConfig& config, std::ostream& log);
EvaluationReport cmd_eval(const ExperimentConfig& config, std::ostream& log);

}  // namespace psm
