#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "psm/codebook.hpp"
#include "psm/dataset.hpp"
#include "psm/flow.hpp"
#include "psm/mdp.hpp"

namespace psm {

enum class LossMode { Exact, Minibatch };
enum class WHeadKind { Tabular, Amortized };

struct PsmConfig {
    int d = 64;
    int steps = 10000;
    double learning_rate = 1e-2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double target_momentum = 0.99;
    int z_pool = 1024;
    int z_batch = 32;
    double ortho_weight = 1.0;
    double init_scale = 0.1;
    LossMode mode = LossMode::Exact;
    WHeadKind w_head = WHeadKind::Tabular;
    int minibatch = 1024;  // transitions per step in minibatch mode
    int log_every = 0;     // 0 disables progress callbacks

    void validate() const;
};

inline constexpr int kSeedEmbeddingDim = 64;

/// +-1/8 per bit of fmix(z).
Vector seed_embedding(LatentSeed seed);

/// Everything the loss needs from the data: rho(s,a), rho(s+), transition
/// estimate and discount.
struct TrainingProblem {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;
    Vector rho_pair;
    Vector rho_state;
    SparseTransitions transitions;
    const OfflineDataset* dataset = nullptr;  // required for minibatch mode

    /// Empirical rho and transitions of the dataset.
    static TrainingProblem from_dataset(const OfflineDataset& dataset, double gamma);
    /// True dynamics with a given pair density (its state marginal is rho(s+)).
    static TrainingProblem from_mdp(const TabularMdp& mdp, const Vector& rho_pair);

    Eigen::Index n_pairs() const { return static_cast<Eigen::Index>(n_states) * n_actions; }
    Eigen::Index n_rows() const { return n_pairs() * n_states; }
};

/// Parameter tables. Row (s*|A|+a)*|S| + s+ of phi/bias holds (s,a,s+).
/// w is z_pool x d (tabular) or d x (kSeedEmbeddingDim + 1) (amortized,
/// last column is the offset).
struct PsmTables {
    Matrix phi;
    Vector bias;
    Matrix w;
};

class PsmModel {
public:
    PsmModel(PsmConfig config, int n_states, int n_actions, double gamma, Vector rho_pair,
             Vector rho_state, std::vector<LatentSeed> seeds, std::uint64_t rng_seed);

    const PsmConfig& config() const { return config_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }
    int d() const { return config_.d; }
    std::uint64_t rng_seed() const { return rng_seed_; }
    const std::string& hash_spec() const { return hash_spec_; }
    const Vector& rho_pair() const { return rho_pair_; }
    const Vector& rho_state() const { return rho_state_; }

    const std::vector<LatentSeed>& seeds() const { return seeds_; }
    /// Codebook actions of pool seed i.
    const std::vector<int>& seed_actions(int i) const { return seed_actions_[static_cast<std::size_t>(i)]; }

    PsmTables online;
    PsmTables target;
    std::vector<double> loss_curve;
    std::vector<double> ortho_curve;

    /// w for pool seed i from the online (or target) head.
    Vector w_for(int pool_index, bool use_target = false) const;
    /// w for any seed; tabular heads only know pool seeds.
    Vector w_for_seed(LatentSeed seed) const;

    /// Density ratio m = phi w + b over all rows.
    Vector density(const Vector& w) const { return online.phi * w + online.bias; }
    /// Reconstructed M(s,a,s+) = m * rho(s+), shaped (|S||A|) x |S|.
    Matrix state_measure(const Vector& w) const;
    /// (phi, b) as an affine set over the density rows.
    AffineBasis affine_basis() const { return {online.phi, online.bias}; }

    void sync_targets() { target = online; }

private:
    PsmConfig config_;
    int n_states_;
    int n_actions_;
    double gamma_;
    Vector rho_pair_;
    Vector rho_state_;
    std::vector<LatentSeed> seeds_;
    std::vector<std::vector<int>> seed_actions_;
    std::uint64_t rng_seed_;
    std::string hash_spec_;
};

/// Fresh model with N(0, init_scale^2) phi and w, zero bias, targets synced.
PsmModel init_model(const TrainingProblem& problem, const PsmConfig& config, std::uint64_t rng_seed);

struct PsmGradients {
    Matrix phi;
    Vector bias;
    Matrix w;
};

struct LossResult {
    double value = 0.0;       // flow + td + weighted ortho
    double flow_term = 0.0;   // -(1-gamma) E[m(s,a,s)]
    double td_term = 0.0;     // 1/2 E[(m - gamma mbar')^2]
    double ortho = 0.0;       // unweighted penalty
    PsmGradients grad;
};

/// One sampled (s,a,s') transition paired with an independent s+.
struct LossSample {
    Transition transition;
    StateIndex s_plus = 0;
};

/// Exact-expectation loss averaged over the pool seeds in z_batch; target
/// tables are constants.
LossResult psm_loss(const PsmModel& model, const TrainingProblem& problem, std::span<const int> z_batch);
/// Sampled version of the same objective.
LossResult psm_loss(const PsmModel& model, const TrainingProblem& problem, std::span<const int> z_batch,
                    std::span<const LossSample> samples);

/// ||E_rho[phi phi^T] - I||_F^2 with rho(s,a) rho(s+) weights.
double orthonormality_penalty(const Matrix& phi, const TrainingProblem& problem);

struct TrainingProgress {
    int step = 0;
    double loss = 0.0;
    double ortho = 0.0;
};

/// Adam on the seed-averaged objective with EMA targets. Deterministic per
/// rng_seed. Throws DivergenceError on a non-finite loss.
PsmModel train_psm(const TrainingProblem& problem, const PsmConfig& config, std::uint64_t rng_seed,
                   const std::function<void(const TrainingProgress&)>& progress = {});

struct WFit {
    Vector w;
    double condition = 0.0;  // condition estimate of the solved system
};

/// TD fixed point for w with phi and b frozen, for any stochastic policy.
/// Zero basis gives the zero vector. Throws NumericalError if the system is
/// singular.
WFit fit_w_for_policy(const PsmModel& model, const StochasticPolicy& pi, const TrainingProblem& problem);

/// Exact density-ratio basis: every state-marginal successor measure of the
/// MDP divided by rho(s+) lies in it, and nothing else flow-inconsistent does.
AffineBasis exact_density_basis(const TabularMdp& mdp, const Vector& rho_state);

/// Appends the bias as a last basis column; coordinates gain a trailing 1.
AffineBasis fold_bias(const AffineBasis& basis);

// PSMM1 model file: magic, u64 config length, UTF-8 key = value block
// (includes hash_spec and rng_seed), then tables as little-endian doubles.
void write_model(std::ostream& out, const PsmModel& model);
PsmModel read_model(std::istream& in);

std::string to_string(LossMode mode);
std::string to_string(WHeadKind kind);
LossMode parse_loss_mode(const std::string& text);
WHeadKind parse_w_head(const std::string& text);

}  // namespace psm
