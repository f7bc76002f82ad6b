#include "psm/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace psm {

const char* to_string(LpStatus status) {
    switch (status) {
        case LpStatus::Optimal: return "optimal";
        case LpStatus::Infeasible: return "infeasible";
        case LpStatus::Unbounded: return "unbounded";
        case LpStatus::IterationLimit: return "iteration_limit";
    }
    return "unknown";
}

namespace {

// Largest alpha in (0, 1] keeping v + alpha * dv >= 0.
double max_step(const Vector& v, const Vector& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
    }
    return alpha;
}

class NormalSolver {
public:
    // Factors A diag(scale) A^T with A = G^T.
    void factor(const Matrix& g, const Vector& scale) {
        Matrix weighted = scale.cwiseSqrt().asDiagonal() * g;
        Matrix normal = Matrix::Zero(g.cols(), g.cols());
        normal.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
        normal = normal.selfadjointView<Eigen::Lower>();
        const double ridge = 1e-14 * std::max(1.0, normal.diagonal().maxCoeff());
        normal.diagonal().array() += ridge;
        ldlt_.compute(normal);
    }
    Vector solve(const Vector& rhs) const { return ldlt_.solve(rhs); }

private:
    Eigen::LDLT<Matrix> ldlt_;
};

}  // namespace

LpResult solve_inequality_lp(const Matrix& g, const Vector& h, const Vector& c, const LpOptions& options) {
    if (g.rows() != h.size() || g.cols() != c.size()) throw ValidationError("solve_inequality_lp: dimension mismatch");
    const Eigen::Index m = g.rows();
    const Eigen::Index d = g.cols();
    LpResult result;
    if (d == 0) {
        result.w = Vector(0);
        result.max_violation = std::max(0.0, -h.minCoeff());
        result.status = result.max_violation > options.tolerance ? LpStatus::Infeasible : LpStatus::Optimal;
        return result;
    }
    if (m == 0) {
        result.w = Vector::Zero(d);
        result.status = c.isZero(0.0) ? LpStatus::Optimal : LpStatus::Unbounded;
        return result;
    }

    // Standard form: min h^T x, A x = b, x >= 0 with A = G^T, b = -c; dual
    // variables y give w = -y and slacks s = h - G y = G w + h.
    const Vector b = -c;
    NormalSolver normal;
    normal.factor(g, Vector::Ones(m));
    Vector y = normal.solve(g.transpose() * h);
    Vector s = h - g * y;
    Vector x = g * normal.solve(b);
    const double shift_x = std::max(-1.5 * x.minCoeff(), 0.0);
    const double shift_s = std::max(-1.5 * s.minCoeff(), 0.0);
    x.array() += shift_x;
    s.array() += shift_s;
    const double xs = x.dot(s);
    x.array() += 0.5 * xs / std::max(s.sum(), 1e-300);
    s.array() += 0.5 * xs / std::max(x.sum(), 1e-300);
    x = x.cwiseMax(1e-8);
    s = s.cwiseMax(1e-8);

    const double b_norm = 1.0 + b.norm();
    const double h_norm = 1.0 + h.norm();
    double best_primal_res = std::numeric_limits<double>::infinity();
    double best_dual_res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iterations; ++it) {
        result.iterations = it;
        const Vector rb = g.transpose() * x - b;
        const Vector rc = g * y + s - h;
        const double mu = x.dot(s) / static_cast<double>(m);
        const double p_obj = h.dot(x);
        const double d_obj = b.dot(y);
        const double primal_res = rb.norm() / b_norm;
        const double dual_res = rc.norm() / h_norm;
        const double gap = std::abs(p_obj - d_obj) / (1.0 + std::abs(p_obj));
        best_primal_res = std::min(best_primal_res, primal_res);
        best_dual_res = std::min(best_dual_res, dual_res);
        if (primal_res < options.tolerance && dual_res < options.tolerance && gap < options.tolerance) {
            result.status = LpStatus::Optimal;
            break;
        }
        // Diverging iterates: multipliers blow up when the w-problem is
        // infeasible, w blows up when it is unbounded.
        if (x.norm() > 1e12 * (1.0 + b.norm())) {
            result.status = LpStatus::Infeasible;
            break;
        }
        if (y.norm() > 1e12 * (1.0 + h.norm())) {
            result.status = LpStatus::Unbounded;
            break;
        }

        const Vector scale = x.cwiseQuotient(s);
        normal.factor(g, scale);
        auto direction = [&](const Vector& r_xs, Vector& dx, Vector& dy, Vector& ds) {
            const Vector rhs = -rb + g.transpose() * (r_xs.cwiseQuotient(s) - scale.cwiseProduct(rc));
            dy = normal.solve(rhs);
            ds = -rc - g * dy;
            dx = -(r_xs + x.cwiseProduct(ds)).cwiseQuotient(s);
        };
        Vector dx_aff, dy_aff, ds_aff;
        direction(x.cwiseProduct(s), dx_aff, dy_aff, ds_aff);
        const double ap_aff = max_step(x, dx_aff);
        const double ad_aff = max_step(s, ds_aff);
        const double mu_aff = (x + ap_aff * dx_aff).dot(s + ad_aff * ds_aff) / static_cast<double>(m);
        const double sigma = std::pow(mu_aff / mu, 3.0);

        Vector r_xs = x.cwiseProduct(s) + dx_aff.cwiseProduct(ds_aff);
        r_xs.array() -= sigma * mu;
        Vector dx, dy, ds;
        direction(r_xs, dx, dy, ds);
        const double eta = std::clamp(1.0 - mu, 0.9, 1.0 - 1e-6);
        const double ap = std::min(1.0, eta * max_step(x, dx));
        const double ad = std::min(1.0, eta * max_step(s, ds));
        Vector x_next = x + ap * dx;
        Vector y_next = y + ad * dy;
        Vector s_next = s + ad * ds;
        // Numerical breakdown: keep the last finite iterate.
        if (!x_next.allFinite() || !y_next.allFinite() || !s_next.allFinite()) break;
        x = std::move(x_next);
        y = std::move(y_next);
        s = std::move(s_next);
        result.iterations = it + 1;
    }
    if (result.status != LpStatus::Optimal && result.status == LpStatus::IterationLimit) {
        if (best_primal_res > 1e-6 && best_dual_res < 1e-6) result.status = LpStatus::Unbounded;
        if (best_dual_res > 1e-6 && best_primal_res < 1e-6) result.status = LpStatus::Infeasible;
    }
    result.w = -y;
    result.multipliers = x;
    result.objective = c.dot(result.w);
    result.max_violation = std::max(0.0, -(g * result.w + h).minCoeff());
    return result;
}

ProjectionResult min_norm_feasible(const Matrix& g, const Vector& h, double tol, int max_sweeps) {
    if (g.rows() != h.size()) throw ValidationError("min_norm_feasible: dimension mismatch");
    const Eigen::Index m = g.rows();
    ProjectionResult out;
    out.w = Vector::Zero(g.cols());
    Vector lambda = Vector::Zero(m);
    const Vector row_norms = g.rowwise().squaredNorm();
    // Dual coordinate ascent: w = G^T lambda keeps w the projection of 0.
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (row_norms[i] == 0.0) continue;
            const double value = g.row(i).dot(out.w) + h[i];
            const double updated = std::max(0.0, lambda[i] - value / row_norms[i]);
            const double delta = updated - lambda[i];
            if (delta != 0.0) {
                out.w += delta * g.row(i).transpose();
                lambda[i] = updated;
                change = std::max(change, std::abs(delta) * std::sqrt(row_norms[i]));
            }
        }
        out.sweeps = sweep + 1;
        out.max_violation = std::max(0.0, -(g * out.w + h).minCoeff());
        if (change < tol && out.max_violation < std::sqrt(tol)) {
            out.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace psm
