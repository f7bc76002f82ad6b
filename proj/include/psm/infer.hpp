#pragma once

#include <string>
#include <vector>

#include "psm/flow.hpp"
#include "psm/learn.hpp"
#include "psm/lp.hpp"
#include "psm/mdp.hpp"
#include "psm/oracle.hpp"

namespace psm {

struct InferenceReport {
    std::string method;
    std::string status;
    double objective = 0.0;
    double max_violation = 0.0;
    double gap_proxy = 0.0;
    double relaxation = 0.0;  // uniform constraint slack added to reach feasibility
    int iterations = 0;
    double wall_seconds = 0.0;
    bool converged = false;

    /// One "key = value" line per field; wall_seconds only when asked.
    std::string to_text(bool with_timing = true) const;
};

struct InferenceResult {
    Vector w;
    InferenceReport report;
};

/// max (Phi w + b) . r subject to Phi w + b >= 0 on an exact visitation
/// basis (mu is carried by the bias). Vertex enumeration for d <= 3,
/// interior point otherwise; r == 0 returns the minimum-norm feasible w.
/// Throws NumericalError on infeasible or unbounded programs.
InferenceResult infer_w_exact_lp(const AffineBasis& basis, const RewardFunction& reward, const LpOptions& options = {});

struct DualConfig {
    double w_step = 1e-4;
    double lambda_step = 1e-4;
    int max_iterations = 100000;
    double tol = 1e-6;         // constraint violation sum(max(-(G w + h), 0))
    int check_every = 1000;    // window for the stationarity test
    double stationarity_tol = 1e-3;
};

/// Alternating projected gradient on the Lagrangian
///   L(w, lambda) = -c.w - sum_i lambda_i min(g_i(w), 0),  g = G w + h,
/// descent in w, ascent in lambda >= 0. A constraint counts as active when
/// g_i <= 0. Stops when the violation is below tol and the window-averaged
/// w-gradient is below stationarity_tol * (1 + |c|); returns the best
/// feasible iterate seen (or the last one, with converged = false).
InferenceResult infer_w_dual(const Matrix& g, const Vector& h, const Vector& c, const DualConfig& config = {});
InferenceResult infer_w_dual(const AffineBasis& basis, const RewardFunction& reward, const DualConfig& config = {});

/// Per-source optimal successor measures on the exact successor-measure
/// basis, each starting with its source action; column j of the result holds
/// w for source pair j.
Matrix infer_sm_exact_lp(const SuccessorMeasureBasis& basis, const RewardFunction& reward,
                         const LpOptions& options = {});
/// Q(s,a) = sum M(s,a,s+,a+) r(s+,a+) with M rebuilt from per-source w
/// (normalized scale, i.e. (1-gamma) times the discounted return).
QTable q_star(const SuccessorMeasureBasis& basis, const Matrix& w, const RewardFunction& reward, int n_actions);

enum class InferenceMethod { Lp, Dual };
std::string to_string(InferenceMethod method);
InferenceMethod parse_inference_method(const std::string& text);

struct ModelInferenceOptions {
    InferenceMethod method = InferenceMethod::Lp;
    LpOptions lp{1e-8, 200};
    DualConfig dual{};
    /// Adds sum_{s+} M(s,a,s+) <= 1 for every pair, which keeps the learned
    /// program bounded.
    bool mass_bound = true;
    /// Learned tables need not admit a nonnegative density. When they do
    /// not, every constraint is relaxed by the smallest uniform slack that
    /// makes the program feasible.
    bool relax_infeasible = true;
    /// Slack actually applied, as a multiple of the smallest feasible one;
    /// values at or below 1 keep a hair of interior.
    double relax_scale = 1.0;
};

/// Constraint rows (G, h) and objective c for a state reward on a learned
/// model: maximize E_{(s,a)~rho} Q(s,a) subject to a nonnegative density.
struct ModelLp {
    Matrix g;
    Vector h;
    Vector c;
};
ModelLp build_model_lp(const PsmModel& model, const Vector& state_reward, bool mass_bound);

/// Smallest t >= 0 such that G w + h + t >= 0 is feasible.
double feasibility_gap(const Matrix& g, const Vector& h, const LpOptions& options = {});

InferenceResult infer_w_model(const PsmModel& model, const RewardFunction& reward,
                              const ModelInferenceOptions& options = {});

/// Q(s,a) = sum_{s+} rho(s+) m(s,a,s+) r(s+), i.e. reconstructed M r.
QTable q_star(const PsmModel& model, const Vector& w, const RewardFunction& reward);

/// Argmax per state, ties to the lowest action.
std::vector<int> greedy_policy(const QTable& q);

/// phi(s,a,s+) = phi_psi(s,a)^T varphi(s+), with phi_psi(s,a) in R^{k x d}.
struct SfDecomposition {
    int n_pairs = 0;
    int d = 0;
    int rank = 0;
    Matrix phi_psi;  // (n_pairs * d) x rank; row (p*d + i) holds phi_psi(p)^T row i
    Matrix varphi;   // n_states x rank
    double reconstruction_error = 0.0;  // max abs over all entries

    /// phi_psi(p) as a rank x d matrix.
    Matrix phi_psi_at(int pair) const;
    /// psi(s,a) = phi_psi(s,a) w, stacked as n_pairs x rank.
    Matrix successor_features(const Vector& w) const;
    /// varphi(s+)^T C^-1 with C = sum_s+ rho(s+) varphi varphi^T, as n_states x rank.
    Matrix dual_features(const Vector& rho_state) const;
};

/// Truncated SVD of the basis table unfolded to (pairs*d) x |S|. The basis
/// rows follow the density layout: row p*|S| + s+. Rank 0 keeps every
/// singular value above 1e-12 of the largest; ranks above min(pairs*d, |S|)
/// are rejected.
SfDecomposition sf_decompose(const Matrix& basis, int n_states, int rank = 0);
SfDecomposition sf_decompose(const PsmModel& model, int rank = 0);

/// psi(s,a) = sum_{s+} M(s,a,s+) features(s+) for a state-marginal measure
/// (pairs x |S|) and features (|S| x k).
Matrix successor_features(const Matrix& state_measure, const Matrix& features);
Matrix successor_features(const SuccessorMeasure& m, const Matrix& features);

}  // namespace psm
