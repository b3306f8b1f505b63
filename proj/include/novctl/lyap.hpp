#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace novctl {

class NotPositiveDefinite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A0 (diagonal -c_i, ones on the superdiagonal) and the solution P of
/// A0^T P + P A0 = -I.
struct LyapunovPair {
    Eigen::MatrixXd A0;
    Eigen::MatrixXd P;

    double residual() const;  // ||A0^T P + P A0 + I||_F
};

Eigen::MatrixXd bidiagonal_a0(const Eigen::VectorXd& c);

/// Structured solve: P_ij = (delta_ij + P_{i-1,j} + P_{i,j-1}) / (c_i + c_j),
/// filled along anti-diagonals. Throws NotPositiveDefinite if Cholesky fails.
LyapunovPair solve_P(const Eigen::VectorXd& c);

/// General A: Kronecker-vectorized dense solve of A^T P + P A = -I.
Eigen::MatrixXd solve_lyapunov_dense(const Eigen::MatrixXd& A);

}  // namespace novctl
