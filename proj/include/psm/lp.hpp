#pragma once

#include "psm/types.hpp"

namespace psm {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(LpStatus status);

struct LpOptions {
    double tolerance = 1e-10;  // relative residual and gap
    int max_iterations = 200;
};

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    Vector w;
    Vector multipliers;  // lambda >= 0, one per constraint row
    double objective = 0.0;
    double max_violation = 0.0;  // max(0, -min(G w + h))
    int iterations = 0;
};

/// max c^T w subject to G w + h >= 0, solved through its standard-form dual
/// min h^T lambda s.t. G^T lambda = -c, lambda >= 0 with a Mehrotra
/// predictor-corrector interior point method. Each iteration factors a
/// d x d normal matrix.
LpResult solve_inequality_lp(const Matrix& g, const Vector& h, const Vector& c, const LpOptions& options = {});

struct ProjectionResult {
    Vector w;
    double max_violation = 0.0;
    int sweeps = 0;
    bool converged = false;
};

/// Minimum-norm w with G w + h >= 0 (Hildreth's row-action method).
ProjectionResult min_norm_feasible(const Matrix& g, const Vector& h, double tol = 1e-12, int max_sweeps = 100000);

}  // namespace psm
