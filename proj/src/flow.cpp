#include "psm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "psm/binary_io.hpp"

namespace psm {

namespace {

constexpr double kNullThreshold = 1e-10;

void check_distribution(const Vector& mu, int n_states) {
    if (mu.size() != n_states) throw ValidationError("initial distribution has wrong length");
    if (!mu.allFinite() || mu.minCoeff() < 0.0 || std::abs(mu.sum() - 1.0) > 1e-12) {
        throw ValidationError("initial distribution must be nonnegative and sum to 1");
    }
}

FlowOperator make_operator(const TabularMdp& mdp, Vector rhs) {
    FlowOperator op{flow_matrix(mdp), std::move(rhs), mdp.gamma(), mdp.n_states(),
                    mdp.n_actions()};
    const Vector column_sums = op.matrix.colwise().sum().transpose();
    const double expected = 1.0 - mdp.gamma();
    if ((column_sums.array() - expected).abs().maxCoeff() > 1e-10) {
        throw ValidationError("flow operator: column sums differ from 1-gamma (is P stochastic?)");
    }
    return op;
}

// Recursively visits every k-subset of [0, n).
void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> idx(k);
    std::function<void(int, int)> rec = [&](int pos, int start) {
        if (pos == k) {
            visit(idx);
            return;
        }
        for (int i = start; i <= n - (k - pos); ++i) {
            idx[pos] = i;
            rec(pos + 1, i + 1);
        }
    };
    rec(0, 0);
}

}  // namespace

Matrix flow_matrix(const TabularMdp& mdp) {
    const int n_states = mdp.n_states();
    const int n_actions = mdp.n_actions();
    Matrix a = -mdp.gamma() * mdp.transition().transpose();
    for (int s = 0; s < n_states; ++s) {
        for (int act = 0; act < n_actions; ++act) a(s, pair_index(s, act, n_actions)) += 1.0;
    }
    return a;
}

FlowOperator build_flow_operator(const TabularMdp& mdp, const Vector& mu) {
    check_distribution(mu, mdp.n_states());
    return make_operator(mdp, (1.0 - mdp.gamma()) * mu);
}

FlowOperator build_flow_operator(const TabularMdp& mdp) {
    if (!mdp.initial_dist()) throw ValidationError("build_flow_operator: MDP has no initial distribution");
    return build_flow_operator(mdp, *mdp.initial_dist());
}

FlowOperator build_sm_flow_operator(const TabularMdp& mdp, StateIndex s, ActionIndex a) {
    if (s < 0 || s >= mdp.n_states() || a < 0 || a >= mdp.n_actions()) {
        throw ValidationError("build_sm_flow_operator: source pair out of range");
    }
    Vector rhs = Vector::Zero(mdp.n_states());
    rhs[s] = 1.0 - mdp.gamma();
    return make_operator(mdp, std::move(rhs));
}

AffineBasis extract_affine_basis(const FlowOperator& op) {
    const Eigen::Index rows = op.matrix.rows();
    const Eigen::Index cols = op.matrix.cols();
    Eigen::BDCSVD<Matrix> svd(op.matrix, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const Vector& sigma = svd.singularValues();
    const double cutoff = kNullThreshold * (sigma.size() > 0 ? sigma[0] : 0.0);
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > cutoff) ++rank;
    if (rank < rows) {
        throw NumericalError("extract_affine_basis: operator has rank " + std::to_string(rank) +
                             " < " + std::to_string(rows));
    }
    const Matrix& v = svd.matrixV();
    AffineBasis out;
    out.basis = v.rightCols(cols - rank);
    const Vector projected = svd.matrixU().leftCols(rank).transpose() * op.rhs;
    out.bias = v.leftCols(rank) * (projected.array() / sigma.head(rank).array()).matrix();
    return out;
}

AffineBasis SuccessorMeasureBasis::whole_tensor() const {
    const Eigen::Index pairs = biases.cols();
    const Eigen::Index target = basis.rows();
    const Eigen::Index d = basis.cols();
    AffineBasis out{Matrix::Zero(pairs * target, pairs * d), Vector(pairs * target)};
    for (Eigen::Index src = 0; src < pairs; ++src) {
        out.basis.block(src * target, src * d, target, d) = basis;
        out.bias.segment(src * target, target) = biases.col(src);
    }
    return out;
}

SuccessorMeasureBasis extract_successor_measure_basis(const TabularMdp& mdp) {
    const int n_actions = mdp.n_actions();
    SuccessorMeasureBasis out;
    out.gamma = mdp.gamma();
    out.biases.resize(mdp.n_pairs(), mdp.n_pairs());
    for (int s = 0; s < mdp.n_states(); ++s) {
        for (int a = 0; a < n_actions; ++a) {
            AffineBasis row = extract_affine_basis(build_sm_flow_operator(mdp, s, a));
            if (s == 0 && a == 0) out.basis = std::move(row.basis);
            out.biases.col(pair_index(s, a, n_actions)) = row.bias;
        }
    }
    return out;
}

AffineProjector::AffineProjector(const AffineBasis& basis, double rel_threshold)
    : basis_(basis.basis), bias_(basis.bias) {
    if (basis_.cols() == 0) {
        span_.resize(basis_.rows(), 0);
        return;
    }
    Eigen::BDCSVD<Matrix> svd(basis_, Eigen::ComputeThinU);
    const Vector& sigma = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > rel_threshold * sigma[0] && sigma[rank] > 0.0) ++rank;
    span_ = svd.matrixU().leftCols(rank);
    cod_.compute(basis_);
}

double AffineProjector::residual(const Vector& x) const {
    if (x.size() != bias_.size()) throw ValidationError("membership_residual: dimension mismatch");
    const Vector diff = x - bias_;
    return (diff - span_ * (span_.transpose() * diff)).norm();
}

Vector AffineProjector::coordinates(const Vector& x) const {
    if (basis_.cols() == 0) return Vector();
    return cod_.solve(x - bias_);
}

double membership_residual(const AffineBasis& basis, const Vector& x) {
    return AffineProjector(basis).residual(x);
}

double affine_set_distance(const AffineBasis& lhs, const AffineBasis& rhs) {
    if (lhs.ambient_dim() != rhs.ambient_dim()) return std::numeric_limits<double>::infinity();
    const AffineProjector on_lhs(lhs);
    const AffineProjector on_rhs(rhs);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < lhs.basis.cols(); ++i) {
        // Directions are compared as linear spans, so shift by the other bias.
        worst = std::max(worst, on_rhs.residual(rhs.bias + lhs.basis.col(i)));
    }
    for (Eigen::Index i = 0; i < rhs.basis.cols(); ++i) {
        worst = std::max(worst, on_lhs.residual(lhs.bias + rhs.basis.col(i)));
    }
    worst = std::max(worst, on_rhs.residual(lhs.bias));
    worst = std::max(worst, on_lhs.residual(rhs.bias));
    return worst;
}

bool same_affine_set(const AffineBasis& lhs, const AffineBasis& rhs, double tol) {
    return affine_set_distance(lhs, rhs) < tol;
}

AffineBasis affine_hull(const Matrix& points, double rel_threshold) {
    if (points.cols() == 0) throw ValidationError("affine_hull: no points");
    const Vector anchor = points.col(0);
    const Matrix diffs = points.rightCols(points.cols() - 1).colwise() - anchor;
    AffineBasis out;
    if (diffs.cols() == 0 || diffs.norm() == 0.0) {
        out.basis.resize(points.rows(), 0);
        out.bias = anchor;
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(diffs, Eigen::ComputeThinU);
    const Vector& sigma = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > rel_threshold * sigma[0]) ++rank;
    out.basis = svd.matrixU().leftCols(rank);
    out.bias = anchor - out.basis * (out.basis.transpose() * anchor);
    return out;
}

AffineBasis map_affine(const AffineBasis& basis, const Matrix& linear_map) {
    if (linear_map.cols() != basis.ambient_dim()) throw ValidationError("map_affine: dimension mismatch");
    return {linear_map * basis.basis, linear_map * basis.bias};
}

std::vector<Vector> feasible_region_vertices(const AffineBasis& basis, double tol) {
    const int d = basis.dim();
    const Eigen::Index n = basis.basis.rows();
    if (d > 3) throw ValidationError("feasible_region_vertices: only dimensions <= 3 are enumerated");
    if (d == 0) {
        if (basis.bias.minCoeff() >= -tol) return {Vector()};
        return {};
    }
    const Matrix& phi = basis.basis;
    Eigen::FullPivLU<Matrix> lu(phi);
    if (lu.rank() < d) throw NumericalError("feasible_region_vertices: region contains a line (unbounded)");

    // A pointed recession cone {v : phi v >= 0} is trivial iff it has no extreme
    // ray; extreme rays lie in the null space of d-1 independent rows.
    for_each_subset(static_cast<int>(n), d - 1, [&](const std::vector<int>& rows) {
        Matrix active(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t i = 0; i < rows.size(); ++i) active.row(static_cast<Eigen::Index>(i)) = phi.row(rows[i]);
        Vector direction;
        if (rows.empty()) {
            direction = Vector::Ones(1);
        } else {
            Eigen::FullPivLU<Matrix> sub(active);
            if (sub.rank() < d - 1) return;
            direction = sub.kernel().col(0).normalized();
        }
        for (double sign : {1.0, -1.0}) {
            const Vector ray = sign * direction;
            if ((phi * ray).minCoeff() >= -1e-12) {
                throw NumericalError("feasible_region_vertices: region is unbounded");
            }
        }
    });

    std::vector<Vector> vertices;
    for_each_subset(static_cast<int>(n), d, [&](const std::vector<int>& rows) {
        Matrix active(d, d);
        Vector rhs(d);
        for (int i = 0; i < d; ++i) {
            active.row(i) = phi.row(rows[i]);
            rhs[i] = -basis.bias[rows[i]];
        }
        Eigen::FullPivLU<Matrix> sub(active);
        if (sub.rank() < d) return;
        const Vector w = sub.solve(rhs);
        if ((phi * w + basis.bias).minCoeff() < -tol) return;
        for (const auto& v : vertices) {
            if ((v - w).norm() < 1e-9) return;
        }
        vertices.push_back(w);
    });
    return vertices;
}

void write_affine_basis(std::ostream& out, const AffineBasis& basis) {
    io::write_magic(out, "PSMB1");
    io::write_u64(out, static_cast<std::uint64_t>(basis.basis.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(basis.basis.cols()));
    for (Eigen::Index i = 0; i < basis.basis.rows(); ++i) {
        for (Eigen::Index j = 0; j < basis.basis.cols(); ++j) io::write_f64(out, basis.basis(i, j));
    }
    for (Eigen::Index i = 0; i < basis.bias.size(); ++i) io::write_f64(out, basis.bias[i]);
}

AffineBasis read_affine_basis(std::istream& in) {
    io::expect_magic(in, "PSMB1");
    const auto rows = static_cast<Eigen::Index>(io::read_u64(in));
    const auto cols = static_cast<Eigen::Index>(io::read_u64(in));
    if (rows < 0 || cols < 0 || rows > (1LL << 32) || cols > (1LL << 32)) {
        throw ValidationError("PSMB1: implausible dimensions");
    }
    AffineBasis basis{Matrix(rows, cols), Vector(rows)};
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) basis.basis(i, j) = io::read_f64(in);
    }
    for (Eigen::Index i = 0; i < rows; ++i) basis.bias[i] = io::read_f64(in);
    return basis;
}

}  // namespace psm
