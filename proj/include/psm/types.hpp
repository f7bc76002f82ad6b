#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = Eigen::VectorXi;

using StateIndex = int;
using ActionIndex = int;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition or type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: singular systems, rank deficiency, infeasible or
/// unbounded programs.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// (s,a) pairs are flattened state-major everywhere: s * |A| + a.
inline constexpr Eigen::Index pair_index(StateIndex s, ActionIndex a, int n_actions) {
    return static_cast<Eigen::Index>(s) * n_actions + a;
}

}  // namespace psm
