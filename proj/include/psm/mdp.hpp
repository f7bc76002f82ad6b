#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psm/types.hpp"

namespace psm {

/// Finite MDP. Transition rows are indexed by the flattened pair s*|A|+a and
/// hold P(s'|s,a) over s'. Shapes are checked on construction; probability
/// invariants are reported by validate_mdp.
class TabularMdp {
public:
    TabularMdp(int n_states, int n_actions, Matrix transition, double gamma,
               std::optional<Vector> initial_dist = std::nullopt);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int n_pairs() const { return n_states_ * n_actions_; }
    double gamma() const { return gamma_; }

    /// (|S|*|A|) x |S| matrix of P(s'|s,a).
    const Matrix& transition() const { return transition_; }
    double prob(StateIndex next, StateIndex s, ActionIndex a) const {
        return transition_(pair_index(s, a, n_actions_), next);
    }

    const std::optional<Vector>& initial_dist() const { return initial_dist_; }

    TabularMdp with_gamma(double gamma) const;
    TabularMdp with_initial_dist(Vector mu) const;

private:
    int n_states_;
    int n_actions_;
    Matrix transition_;
    double gamma_;
    std::optional<Vector> initial_dist_;
};

/// pi(a|s), one row per state.
class StochasticPolicy {
public:
    explicit StochasticPolicy(Matrix probs);

    static StochasticPolicy from_actions(const std::vector<int>& actions, int n_actions);

    const Matrix& probs() const { return probs_; }
    int n_states() const { return static_cast<int>(probs_.rows()); }
    int n_actions() const { return static_cast<int>(probs_.cols()); }
    double operator()(StateIndex s, ActionIndex a) const { return probs_(s, a); }

    /// Checks the row-stochastic invariant; throws ValidationError.
    void validate(double tol = 1e-12) const;

private:
    Matrix probs_;
};

/// r(s,a) over flattened pairs.
struct RewardFunction {
    Vector values;

    static RewardFunction state_only(const Vector& state_values, int n_actions);
    /// Per-state view; requires the reward to be constant across actions.
    Vector state_values(int n_actions) const;
};

struct Violation {
    std::string constraint;
    int state = -1;
    int action = -1;
    double value = 0.0;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationReport validate_mdp(const TabularMdp& mdp, double tol = 1e-12);

RewardFunction goal_reward(const TabularMdp& mdp, StateIndex goal);
StochasticPolicy uniform_policy(const TabularMdp& mdp);

/// The two-state, two-action example: action 0 switches state, action 1 stays.
TabularMdp toy_mdp(double gamma, std::optional<Vector> mu = std::nullopt);

/// Random dense MDP with rows normalized from uniform draws.
TabularMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed);

/// Random stochastic policy with uniform-draw rows.
StochasticPolicy random_policy(int n_states, int n_actions, std::uint64_t seed);

/// Random probability vector.
Vector random_distribution(int n, std::uint64_t seed);

// Text format:
//   mdp <|S|> <|A|> <gamma>
//   one line per (s,a) in flattened order with space-separated s':prob pairs
//   mu <p_0> ... <p_{|S|-1}>        (optional)
// Doubles are written in shortest round-trip form.
void write_mdp_text(std::ostream& out, const TabularMdp& mdp);
std::string to_mdp_text(const TabularMdp& mdp);
TabularMdp read_mdp_text(std::istream& in);
TabularMdp parse_mdp_text(const std::string& text);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace psm
