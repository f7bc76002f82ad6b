#pragma once

#include <vector>

#include "psm/mdp.hpp"
#include "psm/types.hpp"

namespace psm {

/// M(s,a,s+,a+) over flattened pairs; rows sum to 1 (includes the 1-gamma
/// normalizer). The first action is fixed, the policy is followed afterwards.
struct SuccessorMeasure {
    Matrix tensor;
    double gamma = 0.0;
    int n_states = 0;
    int n_actions = 0;

    /// Marginal over the target action: (|S||A|) x |S|.
    Matrix state_marginal() const;
};

/// Discounted, normalized occupancy over flattened pairs.
struct Visitation {
    Vector values;
};

/// Q tables are |S| x |A|.
using QTable = Matrix;

enum class QScaling {
    Normalized,    // M r
    Conventional,  // M r / (1 - gamma), the usual discounted return
};

/// (s,a) -> (s',a') chain under pi: P(s'|s,a) pi(a'|s').
Matrix pair_transition(const TabularMdp& mdp, const StochasticPolicy& pi);

SuccessorMeasure successor_measure(const TabularMdp& mdp, const StochasticPolicy& pi);

Visitation visitation(const TabularMdp& mdp, const StochasticPolicy& pi, const Vector& mu);

QTable q_from_sm(const SuccessorMeasure& m, const RewardFunction& r,
                 QScaling scaling = QScaling::Conventional);

/// pi(a|s) = d(s,a) / sum_a d(s,a); states with mass <= 1e-12 get uniform rows.
StochasticPolicy policy_from_visitation(const Visitation& d, int n_actions);

/// Argmax per row; ties resolve to the lowest action index.
std::vector<int> greedy_actions(const QTable& q);

/// Per state, whether each action is within `tol` of the row maximum.
std::vector<std::vector<bool>> optimal_action_sets(const QTable& q, double tol);

struct ValueIterationResult {
    QTable q;
    std::vector<int> greedy;
    double residual = 0.0;
    int iterations = 0;
};

/// Q* for the conventional discounted return; stops once the Bellman
/// optimality residual (sup norm) drops below tol.
ValueIterationResult value_iteration(const TabularMdp& mdp, const RewardFunction& r,
                                     double tol = 1e-10, int max_iterations = 1'000'000);

/// Q^pi by fixed-point iteration of the Bellman expectation operator.
QTable evaluate_policy_iterative(const TabularMdp& mdp, const StochasticPolicy& pi,
                                 const RewardFunction& r, double tol = 1e-12,
                                 int max_iterations = 1'000'000);

/// V(s) = sum_a pi(a|s) Q(s,a).
Vector state_values(const QTable& q, const StochasticPolicy& pi);

}  // namespace psm
