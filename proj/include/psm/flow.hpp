#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "psm/mdp.hpp"
#include "psm/types.hpp"

namespace psm {

/// Linear Bellman-flow constraint A x = rhs over (s,a)-indexed vectors, with
/// A = S_sum - gamma * P^T (|S| x |S||A|).
struct FlowOperator {
    Matrix matrix;
    Vector rhs;
    double gamma = 0.0;
    int n_states = 0;
    int n_actions = 0;
};

/// Affine set {basis * w + bias}. Columns of `basis` are the directions phi_i.
struct AffineBasis {
    Matrix basis;
    Vector bias;

    int dim() const { return static_cast<int>(basis.cols()); }
    Eigen::Index ambient_dim() const { return bias.size(); }
    Vector reconstruct(const Vector& w) const { return basis * w + bias; }
};

/// Flow matrix S_sum - gamma P^T, shared by visitations and successor measures.
Matrix flow_matrix(const TabularMdp& mdp);

/// Constraint for state-action visitations started from `mu`.
FlowOperator build_flow_operator(const TabularMdp& mdp, const Vector& mu);
/// Same, using the MDP's own initial distribution.
FlowOperator build_flow_operator(const TabularMdp& mdp);

/// Constraint on one row M(source, ., .) of the successor measure.
FlowOperator build_sm_flow_operator(const TabularMdp& mdp, StateIndex s, ActionIndex a);

/// Null space of the operator (SVD, relative threshold 1e-10) plus the
/// minimum-norm particular solution. Throws NumericalError when the operator
/// is rank deficient.
AffineBasis extract_affine_basis(const FlowOperator& op);

/// Basis shared across all sources of the successor measure, plus one bias
/// column per source pair (flattened index).
/// The flow constraint only pins the source state; measures that start
/// with the source action are those with M(j, j) >= 1 - gamma on top of the
/// affine set.
struct SuccessorMeasureBasis {
    Matrix basis;   // (|S||A|) x d
    Matrix biases;  // (|S||A|) x (|S||A|), column j is the bias of source j
    double gamma = 0.0;

    AffineBasis for_source(Eigen::Index source) const { return {basis, biases.col(source)}; }
    /// Basis of the whole tensor, flattened row-major (source, target): block
    /// diagonal over sources, d_total = |S||A| * d.
    AffineBasis whole_tensor() const;
};

SuccessorMeasureBasis extract_successor_measure_basis(const TabularMdp& mdp);

/// Projects points onto an affine set. Columns of the basis need not be
/// independent.
class AffineProjector {
public:
    explicit AffineProjector(const AffineBasis& basis, double rel_threshold = 1e-12);

    /// ||(x - b) - P_span (x - b)||_2
    double residual(const Vector& x) const;
    /// Least-squares coordinates w minimizing ||basis w + b - x||.
    Vector coordinates(const Vector& x) const;
    int rank() const { return static_cast<int>(span_.cols()); }

private:
    Matrix basis_;
    Vector bias_;
    Matrix span_;  // orthonormal columns
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod_;
};

double membership_residual(const AffineBasis& basis, const Vector& x);

/// Largest mutual projection residual between two affine sets: every column
/// and the bias difference of each side, projected on the other.
double affine_set_distance(const AffineBasis& lhs, const AffineBasis& rhs);

/// Two bases describe the same affine set when affine_set_distance < tol.
bool same_affine_set(const AffineBasis& lhs, const AffineBasis& rhs, double tol = 1e-8);

/// Affine hull of the given points (one per column); bias is the
/// minimum-norm point of the hull.
AffineBasis affine_hull(const Matrix& points, double rel_threshold = 1e-10);

/// Image of an affine set under a linear map.
AffineBasis map_affine(const AffineBasis& basis, const Matrix& linear_map);

/// Vertices of {w : basis w + bias >= 0} for dim <= 3, found by intersecting
/// every set of `dim` constraints. Throws ValidationError for dim > 3 and
/// NumericalError if the region is unbounded. Infeasible regions give an
/// empty list.
std::vector<Vector> feasible_region_vertices(const AffineBasis& basis, double tol = 1e-9);

// PSMB1 binary layout: 5-byte magic "PSMB1", uint64 ambient dim, uint64 d,
// then basis row-major and bias, all little-endian doubles.
void write_affine_basis(std::ostream& out, const AffineBasis& basis);
AffineBasis read_affine_basis(std::istream& in);

}  // namespace psm
