#include <doctest.h>

#include "gen.hpp"
#include "novctl/lyap.hpp"

using namespace novctl;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using novctl::testing::uniform;
using novctl::testing::uniform_int;

namespace {

// Independent oracle: unknowns are the n(n+1)/2 upper-triangle entries.
MatrixXd symmetric_oracle(const MatrixXd& A) {
    const auto n = A.rows();
    std::vector<std::pair<int, int>> idx;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) idx.emplace_back(i, j);
    auto col = [&](int i, int j) {
        if (i > j) std::swap(i, j);
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (idx[k] == std::make_pair(i, j)) return static_cast<int>(k);
        return -1;
    };
    const auto m = static_cast<int>(idx.size());
    MatrixXd K = MatrixXd::Zero(m, m);
    VectorXd rhs(m);
    for (int e = 0; e < m; ++e) {
        const auto [i, j] = idx[static_cast<std::size_t>(e)];
        // (A^T P + P A)_ij = sum_k A_ki P_kj + P_ik A_kj
        for (int k = 0; k < n; ++k) {
            K(e, col(k, j)) += A(k, i);
            K(e, col(i, k)) += A(k, j);
        }
        rhs(e) = i == j ? -1.0 : 0.0;
    }
    const VectorXd sol = K.fullPivLu().solve(rhs);
    MatrixXd P(n, n);
    for (int e = 0; e < m; ++e) {
        const auto [i, j] = idx[static_cast<std::size_t>(e)];
        P(i, j) = P(j, i) = sol(e);
    }
    return P;
}

}  // namespace

TEST_SUITE("lyapunov") {

TEST_CASE("EX1 gains: hand-computed P") {
    VectorXd c(2);
    c << 2.5, 2.5;
    const LyapunovPair lp = solve_P(c);
    // P11 = 1/5, P12 = P11/5, P22 = (1 + 2 P12)/5
    CHECK(lp.P(0, 0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(lp.P(0, 1) == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(lp.P(1, 0) == lp.P(0, 1));
    CHECK(lp.P(1, 1) == doctest::Approx(0.216).epsilon(1e-15));
    CHECK(lp.residual() < 1e-14);
    CHECK(lp.A0(0, 1) == 1.0);
    CHECK(lp.A0(1, 0) == 0.0);
}

TEST_CASE("unit gains: hand-computed P") {
    const LyapunovPair lp = solve_P(VectorXd::Ones(2));
    CHECK(lp.P(0, 0) == 0.5);
    CHECK(lp.P(0, 1) == 0.25);
    CHECK(lp.P(1, 1) == 0.75);
}

TEST_CASE("n = 1") {
    const LyapunovPair lp = solve_P(VectorXd::Constant(1, 4.0));
    CHECK(lp.P(0, 0) == doctest::Approx(0.125));
}

TEST_CASE("property: residual and agreement with an independent solve") {
    for (int trial = 0; trial < 200; ++trial) {
        const int n = uniform_int(1, 6);
        VectorXd c(n);
        for (int i = 0; i < n; ++i) c(i) = uniform(0.1, 50.0);
        const LyapunovPair lp = solve_P(c);
        INFO("n = ", n, " c = ", c.transpose());
        CHECK(lp.residual() <= 1e-10 * std::max(1.0, lp.P.norm()));
        CHECK((lp.P - lp.P.transpose()).norm() == 0.0);
        const MatrixXd oracle = symmetric_oracle(lp.A0);
        CHECK((lp.P - oracle).norm() <= 1e-8 * std::max(1.0, oracle.norm()));
        CHECK(Eigen::LLT<MatrixXd>(lp.P).info() == Eigen::Success);
    }
}

TEST_CASE("dense solver agrees on a generic Hurwitz matrix") {
    MatrixXd A(3, 3);
    A << -3, 1, 0.5, -0.2, -2, 1, 0.1, 0, -4;
    const MatrixXd P = solve_lyapunov_dense(A);
    const MatrixXd R = A.transpose() * P + P * A + MatrixXd::Identity(3, 3);
    CHECK(R.norm() < 1e-12);
    CHECK((P - symmetric_oracle(A)).norm() < 1e-12);
}

TEST_CASE("non-Hurwitz gains are rejected") {
    VectorXd c(2);
    c << 1.0, 0.0;
    CHECK_THROWS_AS(solve_P(c), NotPositiveDefinite);
    c << -1.0, 2.0;
    CHECK_THROWS_AS(solve_P(c), NotPositiveDefinite);
}

}  // TEST_SUITE
