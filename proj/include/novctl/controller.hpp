#pragma once

// Nonovershooting backstepping override controller.
//
// Coordinates h_1 = x_1 - r, h_i = x_i - alpha_{i-1} - r^(i-1), with
//
//   alpha_i = -s_i h_i - w_i^T thetahat
//             + sum_{k<i} (d alpha_{i-1}/d x_k x_{k+1} + d alpha_{i-1}/d r^(k-1) r^(k))
//   s_i     = c_i + kappa_i |w_i|^2 + g_i |d alpha_{i-1}/d thetahat|^2
//   w_i     = phi_i - sum_{j<i} d alpha_{i-1}/d x_j phi_j
//   ubar    = alpha_n + r^(n)
//
// built symbolically once per scenario. Reference derivatives r^(k) are
// independent symbols so their partials are exact.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "novctl/errors.hpp"
#include "novctl/expr.hpp"
#include "novctl/scenario.hpp"

namespace novctl {

class CompileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateDenominator : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMode : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A = upper bidiagonal (-s_i, ones above), W = [w_1 .. w_n], Q = [0, -(d alpha_1/d thetahat)^T, ...].
struct ErrorSystemMatrices {
    MatrixXd A;  // n x n
    MatrixXd W;  // p x n
    MatrixXd Q;  // p x n
};

/// Everything the simulator needs from one controller evaluation.
struct ControllerValues {
    VectorXd h;
    VectorXd s;
    MatrixXd W;       // p x n
    MatrixXd dalpha_dtheta;  // p x n, column i = (d alpha_{i-1}/d thetahat)^T
    double ubar = 0.0;

    ErrorSystemMatrices matrices() const;
};

/// Caller-owned buffers for ControllerGraph::evaluate.
struct ControllerWorkspace {
    std::vector<double> env;
    std::vector<double> scratch;
    std::vector<double> out;
};

class ControllerGraph {
public:
    int n = 0;
    int p = 0;
    SymbolLayout symbols;
    Reference reference;

    // Index i is the backstepping level; h/s/w use 1..n with slot 0 unused.
    std::vector<expr::Expr> alpha;                        // 0..n
    std::vector<expr::Expr> h;                            // 1..n
    std::vector<expr::Expr> s;                            // 1..n
    std::vector<std::vector<expr::Expr>> w;               // [i][j], j = 0..p-1
    std::vector<std::vector<expr::Expr>> dalpha_dx;       // [i][k], k = 0..n-1 for x_{k+1}
    std::vector<std::vector<expr::Expr>> dalpha_dtheta;   // [i][j]
    std::vector<std::vector<expr::Expr>> dalpha_dr;       // [i][k], k = 0..n for r^(k)
    expr::Expr ubar;
    std::size_t node_count = 0;

    /// Evaluate at (x, thetahat, t). Thread-safe given distinct workspaces.
    void evaluate(const VectorXd& x, const VectorXd& thetahat, double t,
                  ControllerWorkspace& ws, ControllerValues& out) const;

    /// Environment vector with x, thetahat, and all time slots filled.
    std::vector<double> environment(const VectorXd& x, const VectorXd& thetahat, double t) const;

private:
    friend ControllerGraph compile(const Scenario& scenario);
    expr::Program program_;
};

ControllerGraph compile(const Scenario& scenario);

VectorXd eval_h(const ControllerGraph& graph, const VectorXd& x, const VectorXd& thetahat, double t);
double eval_ubar(const ControllerGraph& graph, const VectorXd& x, const VectorXd& thetahat, double t);
ErrorSystemMatrices eval_AWQ(const ControllerGraph& graph, const VectorXd& x,
                             const VectorXd& thetahat, double t);

struct CiFloorReport {
    VectorXd floor;            // underline c_i; entry n is 0 (only c_n > 0 is required)
    VectorXd h0;               // h_i(0) under the configured gains
    std::vector<bool> degenerate;  // |h_i(0)| < 1e-9
    std::vector<bool> pass;
    bool ok = true;
    std::vector<int> violations;  // 1-based levels failing c_i >= max(floor_i, 0)
};

inline constexpr double kDegenerateH = 1e-9;

/// Initial-condition gain floor. Requires h_1(0) >= 0.
CiFloorReport ci_floor(const Scenario& scenario, const ControllerGraph& graph);
CiFloorReport ci_floor(const Scenario& scenario);

enum class BoundMode { Linf, L2, HPassive, XPassive, HSwapping, XSwapping };

BoundMode bound_mode_from_string(const std::string& s);
std::string to_string(BoundMode m);
BoundMode bound_mode_for(Scheme s);

struct BoundGains {
    int n = 1;
    double c_min = 1.0;
    double kappa_min = 1.0;
    double g_min = 1.0;  // +inf for n == 1
    double sigma = 1.0;
    double gamma = 1.0;
    double nu = 0.0;

    static BoundGains from(const GainConfig& gains);
};

struct BoundInputs {
    double theta_err_sup = 0.0;  // ||theta tilde||_inf (Linf, L2)
    double thetadot_norm = 0.0;  // ||thetahat'||_inf (Linf) or ||thetahat'||_2 (L2)
    double theta_err0 = 0.0;     // |theta tilde(0)| (identifier modes)
};

/// (c^n - 1) / (c^(n-1) (c - 1)), replaced by its limit n near c = 1.
double geometric_factor(double c_min, int n);

double violation_bound(const BoundGains& gains, BoundMode mode, const BoundInputs& in);

/// Upper transient envelope e^{-c t} sum_i t^{i-1}/(i-1)! h_i(0) + h1*.
double transient_envelope(double c_min, const VectorXd& h0, double t, double h1_star);

}  // namespace novctl
