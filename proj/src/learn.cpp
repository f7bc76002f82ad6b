#include "psm/learn.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "psm/binary_io.hpp"
#include "psm/random.hpp"

namespace psm {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

// rho(s,a) * rho(s+) for every table row.
Vector row_weights(const TrainingProblem& problem) {
    const auto s_count = problem.n_states;
    Vector out(problem.n_rows());
    for (Eigen::Index p = 0; p < problem.n_pairs(); ++p) {
        out.segment(p * s_count, s_count) = problem.rho_pair[p] * problem.rho_state;
    }
    return out;
}

void check_problem(const PsmModel& model, const TrainingProblem& problem) {
    require(model.n_states() == problem.n_states && model.n_actions() == problem.n_actions,
            "psm: model and problem shapes differ");
    require(problem.rho_pair.size() == problem.n_pairs() && problem.rho_state.size() == problem.n_states,
            "psm: density sizes do not match");
}

void add_w_gradient(const PsmModel& model, Matrix& grad_w, int pool_index, const Vector& gw) {
    if (model.config().w_head == WHeadKind::Tabular) {
        grad_w.row(pool_index) += gw.transpose();
        return;
    }
    const Vector e = seed_embedding(model.seeds()[static_cast<std::size_t>(pool_index)]);
    grad_w.leftCols(kSeedEmbeddingDim) += gw * e.transpose();
    grad_w.col(kSeedEmbeddingDim) += gw;
}

// Adds the weighted penalty and its gradient; returns the unweighted penalty.
double add_ortho_exact(const Matrix& phi, const Vector& weights, double scale, Matrix& grad_phi) {
    const Matrix weighted = weights.asDiagonal() * phi;
    Matrix excess = phi.transpose() * weighted;
    excess.diagonal().array() -= 1.0;
    if (scale != 0.0) grad_phi.noalias() += (4.0 * scale) * weighted * excess;
    return excess.squaredNorm();
}

}  // namespace

void PsmConfig::validate() const {
    require(d >= 1, "config: d must be at least 1");
    require(steps >= 0, "config: steps must be nonnegative");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "config: learning_rate must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "config: adam_beta1 outside [0,1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "config: adam_beta2 outside [0,1)");
    require(adam_epsilon > 0.0, "config: adam_epsilon must be positive");
    require(target_momentum >= 0.0 && target_momentum < 1.0, "config: target_momentum outside [0,1)");
    require(z_pool >= 1, "config: z_pool must be at least 1");
    require(z_batch >= 1, "config: z_batch must be at least 1");
    require(ortho_weight >= 0.0, "config: ortho_weight must be nonnegative");
    require(init_scale >= 0.0, "config: init_scale must be nonnegative");
    require(minibatch >= 1, "config: minibatch must be at least 1");
    require(log_every >= 0, "config: log_every must be nonnegative");
}

Vector seed_embedding(LatentSeed seed) {
    const std::uint64_t bits = splitmix64_mix(seed.z);
    Vector e(kSeedEmbeddingDim);
    for (int k = 0; k < kSeedEmbeddingDim; ++k) e[k] = ((bits >> k) & 1u) ? 0.125 : -0.125;
    return e;
}

TrainingProblem TrainingProblem::from_dataset(const OfflineDataset& dataset, double gamma) {
    require(gamma >= 0.0 && gamma < 1.0, "training problem: gamma outside [0,1)");
    TrainingProblem out;
    out.n_states = dataset.n_states();
    out.n_actions = dataset.n_actions();
    out.gamma = gamma;
    out.rho_pair = dataset.pair_density();
    out.rho_state = dataset.state_density();
    out.transitions = dataset.empirical_transitions();
    out.dataset = &dataset;
    return out;
}

TrainingProblem TrainingProblem::from_mdp(const TabularMdp& mdp, const Vector& rho_pair) {
    require(rho_pair.size() == mdp.n_pairs(), "training problem: rho size mismatch");
    require((rho_pair.array() >= 0.0).all() && std::abs(rho_pair.sum() - 1.0) < 1e-12,
            "training problem: rho is not a distribution");
    TrainingProblem out;
    out.n_states = mdp.n_states();
    out.n_actions = mdp.n_actions();
    out.gamma = mdp.gamma();
    out.rho_pair = rho_pair;
    out.rho_state = rho_pair.reshaped(mdp.n_actions(), mdp.n_states()).colwise().sum().transpose();
    out.transitions = SparseTransitions::from_mdp(mdp);
    return out;
}

PsmModel::PsmModel(PsmConfig config, int n_states, int n_actions, double gamma, Vector rho_pair,
                   Vector rho_state, std::vector<LatentSeed> seeds, std::uint64_t rng_seed)
    : config_(config),
      n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      rho_pair_(std::move(rho_pair)),
      rho_state_(std::move(rho_state)),
      seeds_(std::move(seeds)),
      rng_seed_(rng_seed),
      hash_spec_(kCodebookHashSpec) {
    config_.validate();
    require(static_cast<int>(seeds_.size()) == config_.z_pool, "model: seed pool size differs from z_pool");
    const PolicyCodebook codebook(n_actions_);
    seed_actions_.reserve(seeds_.size());
    for (const auto& seed : seeds_) seed_actions_.push_back(codebook.actions(seed, n_states_));
}

Vector PsmModel::w_for(int pool_index, bool use_target) const {
    const PsmTables& tables = use_target ? target : online;
    if (config_.w_head == WHeadKind::Tabular) return tables.w.row(pool_index).transpose();
    return tables.w.leftCols(kSeedEmbeddingDim) * seed_embedding(seeds_[static_cast<std::size_t>(pool_index)]) +
           tables.w.col(kSeedEmbeddingDim);
}

Vector PsmModel::w_for_seed(LatentSeed seed) const {
    if (config_.w_head == WHeadKind::Amortized) {
        return online.w.leftCols(kSeedEmbeddingDim) * seed_embedding(seed) + online.w.col(kSeedEmbeddingDim);
    }
    for (std::size_t i = 0; i < seeds_.size(); ++i) {
        if (seeds_[i] == seed) return w_for(static_cast<int>(i));
    }
    throw ValidationError("model: seed is not in the tabular pool");
}

Matrix PsmModel::state_measure(const Vector& w) const {
    const Vector m = density(w);
    Matrix out = m.reshaped(n_states_, static_cast<Eigen::Index>(n_states_) * n_actions_).transpose();
    return out * rho_state_.asDiagonal();
}

PsmModel init_model(const TrainingProblem& problem, const PsmConfig& config, std::uint64_t rng_seed) {
    config.validate();
    require(problem.n_states > 0 && problem.n_actions > 0, "init_model: empty problem");
    PsmModel model(config, problem.n_states, problem.n_actions, problem.gamma, problem.rho_pair,
                   problem.rho_state, sample_seeds(static_cast<std::size_t>(config.z_pool), rng_seed), rng_seed);
    Rng rng(splitmix64_mix(rng_seed ^ 0x5053'4D49'4E49'5400ULL));
    auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix out(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = config.init_scale * rng.normal();
        }
        return out;
    };
    model.online.phi = draw(problem.n_rows(), config.d);
    model.online.bias = Vector::Zero(problem.n_rows());
    model.online.w = config.w_head == WHeadKind::Tabular ? draw(config.z_pool, config.d)
                                                         : draw(config.d, kSeedEmbeddingDim + 1);
    model.sync_targets();
    return model;
}

double orthonormality_penalty(const Matrix& phi, const TrainingProblem& problem) {
    Matrix unused;
    return add_ortho_exact(phi, row_weights(problem), 0.0, unused);
}

LossResult psm_loss(const PsmModel& model, const TrainingProblem& problem, std::span<const int> z_batch) {
    check_problem(model, problem);
    require(!z_batch.empty(), "psm_loss: empty seed batch");
    require((problem.rho_state.array() > 0.0).all(), "psm_loss: rho(s+) = 0 for some state");
    const int n_states = problem.n_states;
    const int n_actions = problem.n_actions;
    const Eigen::Index pairs = problem.n_pairs();
    const Eigen::Index rows = problem.n_rows();
    const double gamma = problem.gamma;
    const auto batch = static_cast<Eigen::Index>(z_batch.size());
    const double inv_batch = 1.0 / static_cast<double>(batch);
    const auto& tr = problem.transitions;

    Matrix w_online(model.d(), batch);
    for (Eigen::Index j = 0; j < batch; ++j) w_online.col(j) = model.w_for(z_batch[static_cast<std::size_t>(j)]);
    Matrix m = model.online.phi * w_online;
    m.colwise() += model.online.bias;

    LossResult out;
    Matrix g(rows, batch);
    Matrix next_density(n_states, n_states);  // mbar(s', pi(s'), s+)
    for (Eigen::Index j = 0; j < batch; ++j) {
        const int z = z_batch[static_cast<std::size_t>(j)];
        const Vector w_target = model.w_for(z, true);
        const auto& actions = model.seed_actions(z);
        for (int sn = 0; sn < n_states; ++sn) {
            const Eigen::Index start = pair_index(sn, actions[static_cast<std::size_t>(sn)], n_actions) * n_states;
            next_density.row(sn) = (model.target.phi.middleRows(start, n_states) * w_target +
                                    model.target.bias.segment(start, n_states))
                                       .transpose();
        }
        for (Eigen::Index p = 0; p < pairs; ++p) {
            const auto s = static_cast<int>(p / n_actions);
            const double rho = problem.rho_pair[p];
            for (int sp = 0; sp < n_states; ++sp) {
                double first = 0.0;
                double second = 0.0;
                for (int k = tr.offsets[static_cast<std::size_t>(p)]; k < tr.offsets[static_cast<std::size_t>(p) + 1]; ++k) {
                    const double v = next_density(tr.next[static_cast<std::size_t>(k)], sp);
                    first += tr.prob[static_cast<std::size_t>(k)] * v;
                    second += tr.prob[static_cast<std::size_t>(k)] * v * v;
                }
                const Eigen::Index row = p * n_states + sp;
                const double value = m(row, j);
                const double weight = rho * problem.rho_state[sp];
                out.td_term += 0.5 * weight * (value * value - 2.0 * gamma * value * first + gamma * gamma * second);
                double grad = weight * (value - gamma * first);
                if (sp == s) {
                    out.flow_term -= (1.0 - gamma) * rho * value;
                    grad -= (1.0 - gamma) * rho;
                }
                g(row, j) = grad * inv_batch;
            }
        }
    }
    out.td_term *= inv_batch;
    out.flow_term *= inv_batch;

    out.grad.phi.noalias() = g * w_online.transpose();
    out.grad.bias = g.rowwise().sum();
    out.grad.w = Matrix::Zero(model.online.w.rows(), model.online.w.cols());
    const Matrix gw = model.online.phi.transpose() * g;
    for (Eigen::Index j = 0; j < batch; ++j) add_w_gradient(model, out.grad.w, z_batch[static_cast<std::size_t>(j)], gw.col(j));

    out.ortho = add_ortho_exact(model.online.phi, row_weights(problem), model.config().ortho_weight, out.grad.phi);
    out.value = out.flow_term + out.td_term + model.config().ortho_weight * out.ortho;
    return out;
}

LossResult psm_loss(const PsmModel& model, const TrainingProblem& problem, std::span<const int> z_batch,
                    std::span<const LossSample> samples) {
    check_problem(model, problem);
    require(!z_batch.empty(), "psm_loss: empty seed batch");
    require(!samples.empty(), "psm_loss: empty minibatch");
    const int n_states = problem.n_states;
    const int n_actions = problem.n_actions;
    const double gamma = problem.gamma;
    const double scale = 1.0 / (static_cast<double>(z_batch.size()) * static_cast<double>(samples.size()));
    for (const auto& sample : samples) {
        const auto& t = sample.transition;
        require(t.s >= 0 && t.s < n_states && t.a >= 0 && t.a < n_actions && t.next >= 0 && t.next < n_states &&
                    sample.s_plus >= 0 && sample.s_plus < n_states,
                "psm_loss: sample out of range");
        require(problem.rho_state[sample.s_plus] > 0.0, "psm_loss: sampled s+ has rho(s+) = 0");
    }

    LossResult out;
    const Matrix& phi = model.online.phi;
    out.grad.phi = Matrix::Zero(phi.rows(), phi.cols());
    out.grad.bias = Vector::Zero(phi.rows());
    out.grad.w = Matrix::Zero(model.online.w.rows(), model.online.w.cols());
    for (const int z : z_batch) {
        const Vector w = model.w_for(z);
        const Vector w_target = model.w_for(z, true);
        const auto& actions = model.seed_actions(z);
        Vector gw = Vector::Zero(model.d());
        for (const auto& sample : samples) {
            const auto& t = sample.transition;
            const Eigen::Index base = pair_index(t.s, t.a, n_actions) * n_states;
            const Eigen::Index diag_row = base + t.s;
            const Eigen::Index row = base + sample.s_plus;
            const Eigen::Index next_row =
                pair_index(t.next, actions[static_cast<std::size_t>(t.next)], n_actions) * n_states + sample.s_plus;
            const double m_diag = phi.row(diag_row).dot(w) + model.online.bias[diag_row];
            const double m_value = phi.row(row).dot(w) + model.online.bias[row];
            const double m_next = model.target.phi.row(next_row).dot(w_target) + model.target.bias[next_row];
            const double delta = m_value - gamma * m_next;
            out.flow_term -= (1.0 - gamma) * m_diag * scale;
            out.td_term += 0.5 * delta * delta * scale;
            const double g_diag = -(1.0 - gamma) * scale;
            const double g_row = delta * scale;
            out.grad.phi.row(diag_row) += g_diag * w.transpose();
            out.grad.bias[diag_row] += g_diag;
            out.grad.phi.row(row) += g_row * w.transpose();
            out.grad.bias[row] += g_row;
            gw += g_diag * phi.row(diag_row).transpose() + g_row * phi.row(row).transpose();
        }
        add_w_gradient(model, out.grad.w, z, gw);
    }

    // Gram estimate from the sampled (s,a,s+) rows.
    const auto k = static_cast<Eigen::Index>(samples.size());
    Matrix sampled(k, phi.cols());
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& sample = samples[static_cast<std::size_t>(i)];
        sampled.row(i) = phi.row(pair_index(sample.transition.s, sample.transition.a, n_actions) * n_states + sample.s_plus);
    }
    Matrix excess = sampled.transpose() * sampled / static_cast<double>(k);
    excess.diagonal().array() -= 1.0;
    out.ortho = excess.squaredNorm();
    const double weight = model.config().ortho_weight;
    if (weight != 0.0) {
        const Matrix g_rows = (4.0 * weight / static_cast<double>(k)) * sampled * excess;
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto& sample = samples[static_cast<std::size_t>(i)];
            out.grad.phi.row(pair_index(sample.transition.s, sample.transition.a, n_actions) * n_states + sample.s_plus) +=
                g_rows.row(i);
        }
    }
    out.value = out.flow_term + out.td_term + weight * out.ortho;
    return out;
}

namespace {

struct AdamState {
    PsmTables first;
    PsmTables second;
    long step = 0;
};

template <typename Param, typename Grad>
void adam_update(Param& param, const Grad& grad, Param& first, Param& second, const PsmConfig& config,
                 double correction1, double correction2) {
    first = config.adam_beta1 * first + (1.0 - config.adam_beta1) * grad;
    second = config.adam_beta2 * second + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
    param.array() -= config.learning_rate * (first.array() / correction1) /
                     ((second.array() / correction2).sqrt() + config.adam_epsilon);
}

void ema(PsmTables& target, const PsmTables& online, double momentum) {
    target.phi = momentum * target.phi + (1.0 - momentum) * online.phi;
    target.bias = momentum * target.bias + (1.0 - momentum) * online.bias;
    target.w = momentum * target.w + (1.0 - momentum) * online.w;
}

}  // namespace

PsmModel train_psm(const TrainingProblem& problem, const PsmConfig& config, std::uint64_t rng_seed,
                   const std::function<void(const TrainingProgress&)>& progress) {
    config.validate();
    if (config.mode == LossMode::Minibatch) {
        require(problem.dataset != nullptr, "train_psm: minibatch mode needs a dataset");
    }
    PsmModel model = init_model(problem, config, rng_seed);
    AdamState adam;
    for (PsmTables* t : {&adam.first, &adam.second}) {
        t->phi = Matrix::Zero(model.online.phi.rows(), model.online.phi.cols());
        t->bias = Vector::Zero(model.online.bias.size());
        t->w = Matrix::Zero(model.online.w.rows(), model.online.w.cols());
    }
    Rng rng(splitmix64_mix(rng_seed ^ 0x5053'4D54'5241'494EULL));
    std::vector<int> z_batch(static_cast<std::size_t>(config.z_batch));
    std::vector<LossSample> samples(config.mode == LossMode::Minibatch ? static_cast<std::size_t>(config.minibatch) : 0);
    model.loss_curve.reserve(static_cast<std::size_t>(config.steps));
    model.ortho_curve.reserve(static_cast<std::size_t>(config.steps));

    for (int step = 0; step < config.steps; ++step) {
        for (auto& z : z_batch) z = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.z_pool)));
        LossResult result;
        if (config.mode == LossMode::Exact) {
            result = psm_loss(model, problem, z_batch);
        } else {
            const auto& records = problem.dataset->records();
            for (auto& sample : samples) {
                sample.transition = records[rng.uniform_index(records.size())];
                sample.s_plus = records[rng.uniform_index(records.size())].s;
            }
            result = psm_loss(model, problem, z_batch, samples);
        }
        if (!std::isfinite(result.value)) {
            std::ostringstream msg;
            msg << "train_psm: non-finite loss at step " << step;
            if (!model.loss_curve.empty()) msg << " (previous loss " << model.loss_curve.back() << ")";
            msg << "; lower learning_rate or init_scale";
            throw DivergenceError(msg.str());
        }
        model.loss_curve.push_back(result.value);
        model.ortho_curve.push_back(result.ortho);

        ++adam.step;
        const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam.step));
        adam_update(model.online.phi, result.grad.phi, adam.first.phi, adam.second.phi, config, c1, c2);
        adam_update(model.online.bias, result.grad.bias, adam.first.bias, adam.second.bias, config, c1, c2);
        adam_update(model.online.w, result.grad.w, adam.first.w, adam.second.w, config, c1, c2);
        ema(model.target, model.online, config.target_momentum);

        if (progress && config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps)) {
            progress({step, result.value, result.ortho});
        }
    }
    return model;
}

WFit fit_w_for_policy(const PsmModel& model, const StochasticPolicy& pi, const TrainingProblem& problem) {
    check_problem(model, problem);
    require(pi.n_states() == problem.n_states && pi.n_actions() == problem.n_actions,
            "fit_w_for_policy: policy shape mismatch");
    const Matrix& phi = model.online.phi;
    const Vector& bias = model.online.bias;
    const int n_states = problem.n_states;
    const int n_actions = problem.n_actions;
    const double gamma = problem.gamma;
    if (phi.cols() == 0 || phi.isZero(0.0)) return {Vector::Zero(phi.cols()), 1.0};

    // Policy-averaged next rows: (s', s+) -> sum_a' pi(a'|s') phi(s',a',s+).
    Matrix phi_pi = Matrix::Zero(static_cast<Eigen::Index>(n_states) * n_states, phi.cols());
    Vector bias_pi = Vector::Zero(phi_pi.rows());
    for (int sn = 0; sn < n_states; ++sn) {
        for (int a = 0; a < n_actions; ++a) {
            const double p = pi(sn, a);
            if (p == 0.0) continue;
            const Eigen::Index start = pair_index(sn, a, n_actions) * n_states;
            phi_pi.middleRows(static_cast<Eigen::Index>(sn) * n_states, n_states) += p * phi.middleRows(start, n_states);
            bias_pi.segment(static_cast<Eigen::Index>(sn) * n_states, n_states) += p * bias.segment(start, n_states);
        }
    }
    const auto& tr = problem.transitions;
    Matrix phi_next = Matrix::Zero(phi.rows(), phi.cols());
    Vector bias_next = Vector::Zero(phi.rows());
    for (Eigen::Index p = 0; p < problem.n_pairs(); ++p) {
        for (int k = tr.offsets[static_cast<std::size_t>(p)]; k < tr.offsets[static_cast<std::size_t>(p) + 1]; ++k) {
            const Eigen::Index src = static_cast<Eigen::Index>(tr.next[static_cast<std::size_t>(k)]) * n_states;
            const double prob = tr.prob[static_cast<std::size_t>(k)];
            phi_next.middleRows(p * n_states, n_states) += prob * phi_pi.middleRows(src, n_states);
            bias_next.segment(p * n_states, n_states) += prob * bias_pi.segment(src, n_states);
        }
    }
    const Vector weights = row_weights(problem);
    const Matrix weighted = weights.asDiagonal() * phi;
    const Matrix system = weighted.transpose() * (phi - gamma * phi_next);
    Vector rhs = -weighted.transpose() * (bias - gamma * bias_next);
    for (Eigen::Index p = 0; p < problem.n_pairs(); ++p) {
        const Eigen::Index diag_row = p * n_states + p / n_actions;
        rhs += (1.0 - gamma) * problem.rho_pair[p] * phi.row(diag_row).transpose();
    }
    Eigen::JacobiSVD<Matrix> svd(system);
    const Vector& sigma = svd.singularValues();
    const double condition = sigma[sigma.size() - 1] > 0.0 ? sigma[0] / sigma[sigma.size() - 1]
                                                           : std::numeric_limits<double>::infinity();
    if (!(condition < 1e14)) {
        throw NumericalError("fit_w_for_policy: singular TD system (condition " + std::to_string(condition) + ")");
    }
    return {system.colPivHouseholderQr().solve(rhs), condition};
}

AffineBasis exact_density_basis(const TabularMdp& mdp, const Vector& rho_state) {
    require(rho_state.size() == mdp.n_states(), "exact_density_basis: rho size mismatch");
    require((rho_state.array() > 0.0).all(), "exact_density_basis: rho(s+) must be positive");
    const int n_states = mdp.n_states();
    const int n_actions = mdp.n_actions();
    const Eigen::Index pairs = mdp.n_pairs();
    const SuccessorMeasureBasis sm = extract_successor_measure_basis(mdp);
    // Contract the target action and divide by rho(s+).
    Matrix contract = Matrix::Zero(n_states, pairs);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) contract(s, pair_index(s, a, n_actions)) = 1.0 / rho_state[s];
    }
    const Matrix block = contract * sm.basis;
    Eigen::BDCSVD<Matrix> svd(block, Eigen::ComputeThinU);
    const Vector& sigma = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > 1e-10 * sigma[0]) ++rank;
    const Matrix span = svd.matrixU().leftCols(rank);

    AffineBasis out{Matrix::Zero(pairs * n_states, pairs * rank), Vector(pairs * n_states)};
    for (Eigen::Index src = 0; src < pairs; ++src) {
        out.basis.block(src * n_states, src * rank, n_states, rank) = span;
        out.bias.segment(src * n_states, n_states) = contract * sm.biases.col(src);
    }
    return out;
}

AffineBasis fold_bias(const AffineBasis& basis) {
    AffineBasis out{Matrix(basis.basis.rows(), basis.basis.cols() + 1), Vector::Zero(basis.bias.size())};
    out.basis << basis.basis, basis.bias;
    return out;
}

std::string to_string(LossMode mode) { return mode == LossMode::Exact ? "exact" : "minibatch"; }
std::string to_string(WHeadKind kind) { return kind == WHeadKind::Tabular ? "tabular" : "amortized"; }

LossMode parse_loss_mode(const std::string& text) {
    if (text == "exact") return LossMode::Exact;
    if (text == "minibatch") return LossMode::Minibatch;
    throw ValidationError("unknown loss mode '" + text + "' (expected exact or minibatch)");
}

WHeadKind parse_w_head(const std::string& text) {
    if (text == "tabular") return WHeadKind::Tabular;
    if (text == "amortized") return WHeadKind::Amortized;
    throw ValidationError("unknown w head '" + text + "' (expected tabular or amortized)");
}

namespace {

void write_matrix(std::ostream& out, const Matrix& m) {
    io::write_u64(out, static_cast<std::uint64_t>(m.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_f64(out, m(i, j));
    }
}

Matrix read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
    const auto r = static_cast<Eigen::Index>(io::read_u64(in));
    const auto c = static_cast<Eigen::Index>(io::read_u64(in));
    if (r != rows || c != cols) throw ValidationError("PSMM1: table shape does not match the config");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = io::read_f64(in);
    }
    return m;
}

void write_vector(std::ostream& out, const Vector& v) {
    io::write_u64(out, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(out, v[i]);
}

Vector read_vector(std::istream& in, Eigen::Index size) {
    if (static_cast<Eigen::Index>(io::read_u64(in)) != size) throw ValidationError("PSMM1: vector length mismatch");
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = io::read_f64(in);
    return v;
}

void write_curve(std::ostream& out, const std::vector<double>& curve) {
    io::write_u64(out, curve.size());
    for (double v : curve) io::write_f64(out, v);
}

std::vector<double> read_curve(std::istream& in) {
    const auto n = io::read_u64(in);
    if (n > (1ull << 32)) throw ValidationError("PSMM1: implausible curve length");
    std::vector<double> curve(n);
    for (auto& v : curve) v = io::read_f64(in);
    return curve;
}

}  // namespace

void write_model(std::ostream& out, const PsmModel& model) {
    const auto& c = model.config();
    std::ostringstream block;
    block << "n_states = " << model.n_states() << '\n'
          << "n_actions = " << model.n_actions() << '\n'
          << "gamma = " << format_double(model.gamma()) << '\n'
          << "d = " << c.d << '\n'
          << "steps = " << c.steps << '\n'
          << "learning_rate = " << format_double(c.learning_rate) << '\n'
          << "adam_beta1 = " << format_double(c.adam_beta1) << '\n'
          << "adam_beta2 = " << format_double(c.adam_beta2) << '\n'
          << "adam_epsilon = " << format_double(c.adam_epsilon) << '\n'
          << "target_momentum = " << format_double(c.target_momentum) << '\n'
          << "z_pool = " << c.z_pool << '\n'
          << "z_batch = " << c.z_batch << '\n'
          << "ortho_weight = " << format_double(c.ortho_weight) << '\n'
          << "init_scale = " << format_double(c.init_scale) << '\n'
          << "mode = " << to_string(c.mode) << '\n'
          << "w_head = " << to_string(c.w_head) << '\n'
          << "minibatch = " << c.minibatch << '\n'
          << "rng_seed = " << model.rng_seed() << '\n'
          << "hash_spec = " << model.hash_spec() << '\n';
    const std::string text = block.str();
    io::write_magic(out, "PSMM1");
    io::write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_vector(out, model.rho_pair());
    write_vector(out, model.rho_state());
    io::write_u64(out, model.seeds().size());
    for (const auto& seed : model.seeds()) io::write_u64(out, seed.z);
    for (const PsmTables* t : {&model.online, &model.target}) {
        write_matrix(out, t->phi);
        write_vector(out, t->bias);
        write_matrix(out, t->w);
    }
    write_curve(out, model.loss_curve);
    write_curve(out, model.ortho_curve);
}

PsmModel read_model(std::istream& in) {
    io::expect_magic(in, "PSMM1");
    const auto length = io::read_u64(in);
    if (length > (1u << 20)) throw ValidationError("PSMM1: implausible config block");
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw ValidationError("PSMM1: truncated config");
    std::map<std::string, std::string> kv;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw ValidationError("PSMM1: malformed config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ValidationError("PSMM1: missing config key " + key);
        return it->second;
    };
    auto get_int = [&](const std::string& key) { return std::stoi(get(key)); };
    auto get_double = [&](const std::string& key) { return parse_double(get(key)); };

    if (get("hash_spec") != kCodebookHashSpec) throw ValidationError("PSMM1: unknown codebook hash_spec");
    PsmConfig c;
    c.d = get_int("d");
    c.steps = get_int("steps");
    c.learning_rate = get_double("learning_rate");
    c.adam_beta1 = get_double("adam_beta1");
    c.adam_beta2 = get_double("adam_beta2");
    c.adam_epsilon = get_double("adam_epsilon");
    c.target_momentum = get_double("target_momentum");
    c.z_pool = get_int("z_pool");
    c.z_batch = get_int("z_batch");
    c.ortho_weight = get_double("ortho_weight");
    c.init_scale = get_double("init_scale");
    c.mode = parse_loss_mode(get("mode"));
    c.w_head = parse_w_head(get("w_head"));
    c.minibatch = get_int("minibatch");
    const int n_states = get_int("n_states");
    const int n_actions = get_int("n_actions");
    require(n_states > 0 && n_actions > 0, "PSMM1: empty state or action space");
    const double gamma = get_double("gamma");
    const std::uint64_t rng_seed = std::stoull(get("rng_seed"));

    const Eigen::Index pairs = static_cast<Eigen::Index>(n_states) * n_actions;
    const Eigen::Index rows = pairs * n_states;
    Vector rho_pair = read_vector(in, pairs);
    Vector rho_state = read_vector(in, n_states);
    if (io::read_u64(in) != static_cast<std::uint64_t>(c.z_pool)) throw ValidationError("PSMM1: seed pool size mismatch");
    std::vector<LatentSeed> seeds(static_cast<std::size_t>(c.z_pool));
    for (auto& seed : seeds) seed.z = io::read_u64(in);
    PsmModel model(c, n_states, n_actions, gamma, std::move(rho_pair), std::move(rho_state), std::move(seeds), rng_seed);
    const Eigen::Index w_rows = c.w_head == WHeadKind::Tabular ? c.z_pool : c.d;
    const Eigen::Index w_cols = c.w_head == WHeadKind::Tabular ? c.d : kSeedEmbeddingDim + 1;
    for (PsmTables* t : {&model.online, &model.target}) {
        t->phi = read_matrix(in, rows, c.d);
        t->bias = read_vector(in, rows);
        t->w = read_matrix(in, w_rows, w_cols);
    }
    model.loss_curve = read_curve(in);
    model.ortho_curve = read_curve(in);
    return model;
}

}  // namespace psm
