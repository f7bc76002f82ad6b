#include "psm/infer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace psm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double violation_sum(const Vector& values) { return (-values.array()).max(0.0).sum(); }

InferenceResult from_lp(const LpResult& lp, const char* method, Clock::time_point start) {
    InferenceResult out;
    out.w = lp.w;
    out.report.method = method;
    out.report.status = to_string(lp.status);
    out.report.objective = lp.objective;
    out.report.max_violation = lp.max_violation;
    out.report.iterations = lp.iterations;
    out.report.converged = lp.status == LpStatus::Optimal;
    out.report.wall_seconds = seconds_since(start);
    return out;
}

}  // namespace

std::string InferenceReport::to_text(bool with_timing) const {
    std::ostringstream out;
    out << "method = " << method << '\n'
        << "status = " << status << '\n'
        << "objective = " << format_double(objective) << '\n'
        << "max_violation = " << format_double(max_violation) << '\n'
        << "gap_proxy = " << format_double(gap_proxy) << '\n'
        << "relaxation = " << format_double(relaxation) << '\n'
        << "iterations = " << iterations << '\n'
        << "converged = " << (converged ? "true" : "false") << '\n';
    if (with_timing) out << "wall_seconds = " << format_double(wall_seconds) << '\n';
    return out.str();
}

InferenceResult infer_w_exact_lp(const AffineBasis& basis, const RewardFunction& reward, const LpOptions& options) {
    if (reward.values.size() != basis.ambient_dim()) throw ValidationError("infer_w_exact_lp: reward size mismatch");
    const auto start = Clock::now();
    const Vector c = basis.basis.transpose() * reward.values;
    InferenceResult out;
    if (reward.values.isZero(0.0)) {
        const ProjectionResult proj = min_norm_feasible(basis.basis, basis.bias);
        if (!proj.converged) throw NumericalError("infer_w_exact_lp: no feasible point found");
        out.w = proj.w;
        out.report.method = "min_norm_feasible";
        out.report.status = "optimal";
        out.report.max_violation = proj.max_violation;
        out.report.iterations = proj.sweeps;
        out.report.converged = true;
    } else if (basis.dim() <= 3) {
        const auto vertices = feasible_region_vertices(basis);
        if (vertices.empty()) throw NumericalError("infer_w_exact_lp: infeasible program");
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& v : vertices) {
            const double value = c.dot(v);
            if (value > best + 1e-12) {
                best = value;
                out.w = v;
            }
        }
        out.report.method = "vertex_enumeration";
        out.report.status = "optimal";
        out.report.iterations = static_cast<int>(vertices.size());
        out.report.max_violation = std::max(0.0, -basis.reconstruct(out.w).minCoeff());
        out.report.converged = true;
    } else {
        const LpResult lp = solve_inequality_lp(basis.basis, basis.bias, c, options);
        if (lp.status == LpStatus::Infeasible || lp.status == LpStatus::Unbounded) {
            throw NumericalError(std::string("infer_w_exact_lp: program is ") + to_string(lp.status));
        }
        out = from_lp(lp, "interior_point", start);
    }
    out.report.objective = reward.values.dot(basis.reconstruct(out.w));
    out.report.wall_seconds = seconds_since(start);
    return out;
}

InferenceResult infer_w_dual(const Matrix& g, const Vector& h, const Vector& c, const DualConfig& config) {
    if (g.rows() != h.size() || g.cols() != c.size()) throw ValidationError("infer_w_dual: dimension mismatch");
    if (config.max_iterations <= 0 || config.check_every <= 0 || !(config.w_step > 0.0) ||
        !(config.lambda_step > 0.0)) {
        throw ValidationError("infer_w_dual: budgets and step sizes must be positive");
    }
    const auto start = Clock::now();
    const double grad_scale = config.stationarity_tol * (1.0 + c.norm());
    Vector w = Vector::Zero(g.cols());
    Vector lambda = Vector::Zero(g.rows());
    Vector best_w;
    double best_objective = -std::numeric_limits<double>::infinity();
    Vector window_grad = Vector::Zero(g.cols());
    Vector values = g * w + h;
    InferenceResult out;
    out.report.method = "lagrangian_descent_ascent";
    int it = 0;
    for (; it < config.max_iterations; ++it) {
        const double violation = violation_sum(values);
        if (violation < config.tol) {
            const double objective = c.dot(w);
            if (objective > best_objective) {
                best_objective = objective;
                best_w = w;
            }
        }
        // Active set includes the kink g_i = 0.
        const Vector active_lambda = (values.array() <= 0.0).select(lambda, 0.0);
        const Vector grad_w = -c - g.transpose() * active_lambda;
        window_grad += grad_w;
        if ((it + 1) % config.check_every == 0) {
            const double mean_grad = window_grad.norm() / config.check_every;
            window_grad.setZero();
            if (violation < config.tol && mean_grad < grad_scale) {
                out.report.converged = true;
                ++it;
                break;
            }
        }
        w -= config.w_step * grad_w;
        lambda = (lambda - config.lambda_step * values.cwiseMin(0.0)).cwiseMax(0.0);
        values.noalias() = g * w + h;
    }
    out.report.iterations = it;
    out.w = best_w.size() ? best_w : w;
    const Vector final_values = g * out.w + h;
    out.report.status = out.report.converged ? "converged" : (best_w.size() ? "budget_exhausted" : "no_feasible_iterate");
    out.report.objective = c.dot(out.w);
    out.report.max_violation = std::max(0.0, -final_values.minCoeff());
    out.report.gap_proxy = std::abs(lambda.dot(final_values));
    out.report.wall_seconds = seconds_since(start);
    return out;
}

InferenceResult infer_w_dual(const AffineBasis& basis, const RewardFunction& reward, const DualConfig& config) {
    if (reward.values.size() != basis.ambient_dim()) throw ValidationError("infer_w_dual: reward size mismatch");
    InferenceResult out = infer_w_dual(basis.basis, basis.bias, basis.basis.transpose() * reward.values, config);
    out.report.objective = reward.values.dot(basis.reconstruct(out.w));
    return out;
}

Matrix infer_sm_exact_lp(const SuccessorMeasureBasis& basis, const RewardFunction& reward, const LpOptions& options) {
    const Eigen::Index pairs = basis.biases.cols();
    Matrix w(basis.basis.cols(), pairs);
    for (Eigen::Index j = 0; j < pairs; ++j) {
        // Shifting the bias turns M >= 0 into M >= (1-gamma) e_j, which fixes the first action.
        AffineBasis source = basis.for_source(j);
        source.bias[j] -= 1.0 - basis.gamma;
        w.col(j) = infer_w_exact_lp(source, reward, options).w;
    }
    return w;
}

QTable q_star(const SuccessorMeasureBasis& basis, const Matrix& w, const RewardFunction& reward, int n_actions) {
    const Eigen::Index pairs = basis.biases.cols();
    if (w.cols() != pairs || w.rows() != basis.basis.cols() || reward.values.size() != basis.basis.rows() ||
        n_actions <= 0 || pairs % n_actions != 0) {
        throw ValidationError("q_star: dimension mismatch");
    }
    const Matrix measures = basis.basis * w + basis.biases;  // column j = M(j, .)
    const Vector q = measures.transpose() * reward.values;
    return q.reshaped(n_actions, pairs / n_actions).transpose();
}

std::string to_string(InferenceMethod method) { return method == InferenceMethod::Lp ? "lp" : "dual"; }

InferenceMethod parse_inference_method(const std::string& text) {
    if (text == "lp") return InferenceMethod::Lp;
    if (text == "dual") return InferenceMethod::Dual;
    throw ValidationError("unknown inference method '" + text + "' (expected lp or dual)");
}

ModelLp build_model_lp(const PsmModel& model, const Vector& state_reward, bool mass_bound) {
    const int n_states = model.n_states();
    if (state_reward.size() != n_states) throw ValidationError("build_model_lp: reward size mismatch");
    const Matrix& phi = model.online.phi;
    const Vector& bias = model.online.bias;
    const Eigen::Index pairs = static_cast<Eigen::Index>(n_states) * model.n_actions();
    const Vector& rho_state = model.rho_state();
    const Vector reward_weight = rho_state.cwiseProduct(state_reward);

    ModelLp out;
    out.c = Vector::Zero(phi.cols());
    const Eigen::Index extra = mass_bound ? pairs : 0;
    out.g.resize(phi.rows() + extra, phi.cols());
    out.h.resize(phi.rows() + extra);
    out.g.topRows(phi.rows()) = phi;
    out.h.head(phi.rows()) = bias;
    for (Eigen::Index p = 0; p < pairs; ++p) {
        const auto block = phi.middleRows(p * n_states, n_states);
        out.c += model.rho_pair()[p] * (block.transpose() * reward_weight);
        if (mass_bound) {
            out.g.row(phi.rows() + p) = -(block.transpose() * rho_state).transpose();
            out.h[phi.rows() + p] = 1.0 - rho_state.dot(bias.segment(p * n_states, n_states));
        }
    }
    return out;
}

double feasibility_gap(const Matrix& g, const Vector& h, const LpOptions& options) {
    // max -t  s.t.  G w + h + t >= 0,  t >= 0
    Matrix g1(g.rows() + 1, g.cols() + 1);
    g1.topLeftCorner(g.rows(), g.cols()) = g;
    g1.topRightCorner(g.rows(), 1).setOnes();
    g1.bottomRows(1).setZero();
    g1(g.rows(), g.cols()) = 1.0;
    Vector h1(h.size() + 1);
    h1 << h, 0.0;
    Vector c1 = Vector::Zero(g.cols() + 1);
    c1[g.cols()] = -1.0;
    const LpResult result = solve_inequality_lp(g1, h1, c1, options);
    if (result.status == LpStatus::Infeasible) throw NumericalError("feasibility_gap: phase-one program failed");
    return std::max(0.0, result.w[g.cols()]);
}

InferenceResult infer_w_model(const PsmModel& model, const RewardFunction& reward, const ModelInferenceOptions& options) {
    const Vector r = reward.state_values(model.n_actions());
    const auto start = Clock::now();
    ModelLp lp = build_model_lp(model, r, options.mass_bound);
    double relaxation = 0.0;
    if (options.relax_infeasible) {
        relaxation = feasibility_gap(lp.g, lp.h, options.lp);
        if (relaxation > 0.0) lp.h.array() += relaxation * std::max(options.relax_scale, 1.0 + 1e-6) + 1e-12;
    }
    InferenceResult out;
    if (r.isZero(0.0)) {
        const ProjectionResult proj = min_norm_feasible(lp.g, lp.h, 1e-12, 2000);
        out.w = proj.w;
        out.report.method = "min_norm_feasible";
        out.report.status = proj.converged ? "optimal" : "sweep_limit";
        out.report.max_violation = proj.max_violation;
        out.report.iterations = proj.sweeps;
        out.report.converged = proj.converged;
    } else if (options.method == InferenceMethod::Lp) {
        const LpResult result = solve_inequality_lp(lp.g, lp.h, lp.c, options.lp);
        out = from_lp(result, "interior_point", start);
    } else {
        out = infer_w_dual(lp.g, lp.h, lp.c, options.dual);
    }
    out.report.relaxation = relaxation;
    out.report.objective = lp.c.dot(out.w);
    out.report.wall_seconds = seconds_since(start);
    return out;
}

QTable q_star(const PsmModel& model, const Vector& w, const RewardFunction& reward) {
    const Vector r = reward.state_values(model.n_actions());
    const Matrix measure = model.state_measure(w);  // pairs x |S|
    const Vector q = measure * r;
    return q.reshaped(model.n_actions(), model.n_states()).transpose();
}

std::vector<int> greedy_policy(const QTable& q) { return greedy_actions(q); }

Matrix SfDecomposition::phi_psi_at(int pair) const {
    return phi_psi.middleRows(static_cast<Eigen::Index>(pair) * d, d).transpose();
}

Matrix SfDecomposition::successor_features(const Vector& w) const {
    if (w.size() != d) throw ValidationError("successor_features: w has the wrong dimension");
    Matrix out(n_pairs, rank);
    for (int p = 0; p < n_pairs; ++p) out.row(p) = (phi_psi_at(p) * w).transpose();
    return out;
}

Matrix SfDecomposition::dual_features(const Vector& rho_state) const {
    if (rho_state.size() != varphi.rows()) throw ValidationError("dual_features: rho size mismatch");
    const Matrix gram = varphi.transpose() * rho_state.asDiagonal() * varphi;
    return varphi * gram.inverse().transpose();
}

SfDecomposition sf_decompose(const Matrix& basis, int n_states, int rank) {
    if (n_states <= 0 || basis.rows() % n_states != 0) throw ValidationError("sf_decompose: rows are not pairs x states");
    const auto pairs = static_cast<int>(basis.rows() / n_states);
    const auto d = static_cast<int>(basis.cols());
    // unfolded[(p*d + i), s+] = basis(p*|S| + s+, i)
    Matrix unfolded(static_cast<Eigen::Index>(pairs) * d, n_states);
    for (int p = 0; p < pairs; ++p) {
        unfolded.middleRows(static_cast<Eigen::Index>(p) * d, d) =
            basis.middleRows(static_cast<Eigen::Index>(p) * n_states, n_states).transpose();
    }
    const auto capacity = static_cast<int>(std::min<Eigen::Index>(unfolded.rows(), unfolded.cols()));
    if (rank < 0 || rank > capacity) {
        throw ValidationError("sf_decompose: rank " + std::to_string(rank) + " exceeds capacity " + std::to_string(capacity));
    }
    Eigen::BDCSVD<Matrix> svd(unfolded, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();
    if (rank == 0) {
        while (rank < capacity && sigma[rank] > 1e-12 * sigma[0] && sigma[rank] > 0.0) ++rank;
    }
    SfDecomposition out;
    out.n_pairs = pairs;
    out.d = d;
    out.rank = rank;
    out.phi_psi = svd.matrixU().leftCols(rank) * sigma.head(rank).asDiagonal();
    out.varphi = svd.matrixV().leftCols(rank);
    out.reconstruction_error = (unfolded - out.phi_psi * out.varphi.transpose()).cwiseAbs().maxCoeff();
    return out;
}

SfDecomposition sf_decompose(const PsmModel& model, int rank) {
    return sf_decompose(fold_bias(model.affine_basis()).basis, model.n_states(), rank);
}

Matrix successor_features(const Matrix& state_measure, const Matrix& features) {
    if (state_measure.cols() != features.rows()) throw ValidationError("successor_features: feature rows must match states");
    return state_measure * features;
}

Matrix successor_features(const SuccessorMeasure& m, const Matrix& features) {
    return successor_features(m.state_marginal(), features);
}

}  // namespace psm
