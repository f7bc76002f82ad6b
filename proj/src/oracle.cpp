#include "psm/oracle.hpp"

#include <cmath>

namespace psm {

Matrix SuccessorMeasure::state_marginal() const {
    Matrix out(tensor.rows(), n_states);
    for (int s = 0; s < n_states; ++s) {
        out.col(s) = tensor.middleCols(static_cast<Eigen::Index>(s) * n_actions, n_actions).rowwise().sum();
    }
    return out;
}

Matrix pair_transition(const TabularMdp& mdp, const StochasticPolicy& pi) {
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions()) {
        throw ValidationError("policy shape does not match the MDP");
    }
    const int n_actions = mdp.n_actions();
    Matrix chain(mdp.n_pairs(), mdp.n_pairs());
    for (int next = 0; next < mdp.n_states(); ++next) {
        for (int a = 0; a < n_actions; ++a) {
            chain.col(pair_index(next, a, n_actions)) = mdp.transition().col(next) * pi(next, a);
        }
    }
    return chain;
}

SuccessorMeasure successor_measure(const TabularMdp& mdp, const StochasticPolicy& pi) {
    pi.validate(1e-9);
    const Matrix chain = pair_transition(mdp, pi);
    const Eigen::Index n = chain.rows();
    const Matrix system = Matrix::Identity(n, n) - mdp.gamma() * chain;
    Eigen::PartialPivLU<Matrix> lu(system);
    if (!(std::abs(lu.determinant()) > 0.0)) {
        throw NumericalError("successor_measure: singular system");
    }
    SuccessorMeasure out;
    out.tensor = (1.0 - mdp.gamma()) * lu.inverse();
    out.gamma = mdp.gamma();
    out.n_states = mdp.n_states();
    out.n_actions = mdp.n_actions();
    return out;
}

Visitation visitation(const TabularMdp& mdp, const StochasticPolicy& pi, const Vector& mu) {
    if (mu.size() != mdp.n_states() || mu.minCoeff() < 0.0 || std::abs(mu.sum() - 1.0) > 1e-12) {
        throw ValidationError("visitation: mu must be a distribution over states");
    }
    const SuccessorMeasure m = successor_measure(mdp, pi);
    Vector start(mdp.n_pairs());
    for (int s = 0; s < mdp.n_states(); ++s) {
        for (int a = 0; a < mdp.n_actions(); ++a) start[pair_index(s, a, mdp.n_actions())] = mu[s] * pi(s, a);
    }
    return {m.tensor.transpose() * start};
}

QTable q_from_sm(const SuccessorMeasure& m, const RewardFunction& r, QScaling scaling) {
    if (r.values.size() != m.tensor.cols()) throw ValidationError("q_from_sm: reward has wrong length");
    Vector q = m.tensor * r.values;
    if (scaling == QScaling::Conventional) q /= (1.0 - m.gamma);
    return q.reshaped<Eigen::RowMajor>(m.n_states, m.n_actions);
}

StochasticPolicy policy_from_visitation(const Visitation& d, int n_actions) {
    const Eigen::Index n_states = d.values.size() / n_actions;
    Matrix probs(n_states, n_actions);
    for (Eigen::Index s = 0; s < n_states; ++s) {
        const auto row = d.values.segment(s * n_actions, n_actions);
        const double mass = row.sum();
        if (mass > 1e-12) {
            probs.row(s) = row.transpose() / mass;
        } else {
            probs.row(s).setConstant(1.0 / n_actions);
        }
    }
    return StochasticPolicy(std::move(probs));
}

std::vector<int> greedy_actions(const QTable& q) {
    std::vector<int> out(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        int best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a) {
            if (q(s, a) > q(s, best)) best = static_cast<int>(a);
        }
        out[static_cast<std::size_t>(s)] = best;
    }
    return out;
}

std::vector<std::vector<bool>> optimal_action_sets(const QTable& q, double tol) {
    std::vector<std::vector<bool>> out(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double best = q.row(s).maxCoeff();
        auto& row = out[static_cast<std::size_t>(s)];
        row.resize(static_cast<std::size_t>(q.cols()));
        for (Eigen::Index a = 0; a < q.cols(); ++a) row[static_cast<std::size_t>(a)] = q(s, a) >= best - tol;
    }
    return out;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, const RewardFunction& r, double tol,
                                     int max_iterations) {
    if (!(tol > 0.0)) throw ValidationError("value_iteration: tol must be positive");
    if (r.values.size() != mdp.n_pairs()) throw ValidationError("value_iteration: reward has wrong length");
    const int n_states = mdp.n_states();
    const int n_actions = mdp.n_actions();
    Vector q = Vector::Zero(mdp.n_pairs());
    Vector v(n_states);
    ValueIterationResult out;
    for (int it = 1; it <= max_iterations; ++it) {
        for (int s = 0; s < n_states; ++s) v[s] = q.segment(static_cast<Eigen::Index>(s) * n_actions, n_actions).maxCoeff();
        Vector next = r.values + mdp.gamma() * (mdp.transition() * v);
        out.residual = (next - q).lpNorm<Eigen::Infinity>();
        q = std::move(next);
        out.iterations = it;
        if (out.residual < tol) break;
    }
    out.q = q.reshaped<Eigen::RowMajor>(n_states, n_actions);
    out.greedy = greedy_actions(out.q);
    return out;
}

QTable evaluate_policy_iterative(const TabularMdp& mdp, const StochasticPolicy& pi,
                                 const RewardFunction& r, double tol, int max_iterations) {
    const int n_states = mdp.n_states();
    const int n_actions = mdp.n_actions();
    Vector q = Vector::Zero(mdp.n_pairs());
    Vector v(n_states);
    for (int it = 0; it < max_iterations; ++it) {
        for (int s = 0; s < n_states; ++s) {
            v[s] = pi.probs().row(s).dot(q.segment(static_cast<Eigen::Index>(s) * n_actions, n_actions));
        }
        Vector next = r.values + mdp.gamma() * (mdp.transition() * v);
        const double delta = (next - q).lpNorm<Eigen::Infinity>();
        q = std::move(next);
        if (delta < tol) break;
    }
    return q.reshaped<Eigen::RowMajor>(n_states, n_actions);
}

Vector state_values(const QTable& q, const StochasticPolicy& pi) {
    return (q.array() * pi.probs().array()).rowwise().sum();
}

}  // namespace psm
