#include "novctl/lyap.hpp"

#include <cmath>
#include <string>

namespace novctl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd bidiagonal_a0(const VectorXd& c) {
    const Index n = c.size();
    MatrixXd A0 = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        A0(i, i) = -c(i);
        if (i + 1 < n) A0(i, i + 1) = 1.0;
    }
    return A0;
}

double LyapunovPair::residual() const {
    const MatrixXd R = A0.transpose() * P + P * A0 + MatrixXd::Identity(P.rows(), P.cols());
    return R.norm();
}

MatrixXd solve_lyapunov_dense(const MatrixXd& A) {
    const Index n = A.rows();
    // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P), column-major vec.
    MatrixXd K = MatrixXd::Zero(n * n, n * n);
    const MatrixXd At = A.transpose();
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            // I (x) A^T: block (j, j) is A^T
            K.block(j * n, j * n, n, n) += (i == j ? 1.0 : 0.0) * At;
            // A^T (x) I: block (i, j) is A^T(i, j) * I
            K.block(i * n, j * n, n, n) += At(i, j) * MatrixXd::Identity(n, n);
        }
    }
    VectorXd rhs = -Eigen::Map<const VectorXd>(MatrixXd::Identity(n, n).eval().data(), n * n);
    VectorXd vecP = K.fullPivLu().solve(rhs);
    MatrixXd P = Eigen::Map<MatrixXd>(vecP.data(), n, n);
    return 0.5 * (P + P.transpose());
}

LyapunovPair solve_P(const VectorXd& c) {
    const Index n = c.size();
    for (Index i = 0; i < n; ++i) {
        if (!(c(i) > 0.0)) {
            throw NotPositiveDefinite("c_" + std::to_string(i + 1) + " must be positive for a Hurwitz A0");
        }
    }
    LyapunovPair out;
    out.A0 = bidiagonal_a0(c);
    out.P = MatrixXd::Zero(n, n);
    MatrixXd& P = out.P;
    for (Index d = 0; d <= 2 * (n - 1); ++d) {
        for (Index i = std::max<Index>(0, d - (n - 1)); i <= std::min(d, n - 1); ++i) {
            const Index j = d - i;
            if (j < i) continue;
            double v = (i == j) ? 1.0 : 0.0;
            if (i > 0) v += P(i - 1, j);
            if (j > 0) v += P(i, j - 1);
            P(i, j) = v / (c(i) + c(j));
            P(j, i) = P(i, j);
        }
    }
    if (!P.allFinite() || out.residual() > 1e-8 * std::max(1.0, P.norm())) {
        P = solve_lyapunov_dense(out.A0);
    }
    Eigen::LLT<MatrixXd> llt(P);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Lyapunov solution is not positive definite");
    return out;
}

}  // namespace novctl
