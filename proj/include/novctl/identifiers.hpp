#pragma once

// Parameter identifiers. All four share the same shape: an auxiliary state
// (observer or filters) plus thetahat, a prediction error eps, an update law
// for thetahat, and the auxiliary state's right-hand side.
//
//   h-passive   eps = h - hhat
//   h-swapping  eps = h + Omega0 - Omega^T thetahat
//   x-passive   eps = x - xhat
//   x-swapping  eps = x + Omega0 - Omega^T thetahat

#include <optional>
#include <variant>

#include <Eigen/Dense>

#include "novctl/scenario.hpp"

namespace novctl {

struct HPassiveState {
    VectorXd hhat;
};
struct HSwappingState {
    MatrixXd Omega;  // p x n
    VectorXd Omega0;
};
struct XPassiveState {
    VectorXd xhat;
};
struct XSwappingState {
    MatrixXd Omega;  // p x n
    VectorXd Omega0;
};

struct IdentifierState {
    std::variant<HPassiveState, HSwappingState, XPassiveState, XSwappingState> aux;
    VectorXd thetahat;

    Scheme scheme() const;
    /// Number of doubles in the flat layout (thetahat first, then aux).
    static std::size_t flat_size(Scheme s, int n, int p);
    void pack(std::span<double> out) const;
    static IdentifierState unpack(Scheme s, int n, int p, std::span<const double> in);
};

/// Zero-initial-error initialization: hhat = h, Omega = 0 with Omega0 = -h or -x, xhat = x.
IdentifierState initial_state(Scheme s, const VectorXd& h0, const VectorXd& x0, const VectorXd& thetahat0);

/// f = (x2, ..., xn, u) and F (p x n) with column i = phi_i(x).
struct PlantSplit {
    VectorXd f;
    MatrixXd F;
};

VectorXd epsilon(const IdentifierState& state, const VectorXd& h, const VectorXd& x);

/// When the override is inactive (ubar < u0).
struct Gate {
    double ubar;
    double u0;
    bool open() const { return ubar >= u0; }
};

struct UpdateGains {
    double gamma = 1.0;
    double nu = 0.0;
};

/// thetahat' for the scheme. `regressor` is W (h-passive), F (x-passive), or
/// unused for swapping schemes (Omega is taken from the state).
VectorXd theta_dot(const IdentifierState& state, const VectorXd& eps, const MatrixXd& regressor,
                   const MatrixXd& P, const UpdateGains& gains, std::optional<Gate> gate = std::nullopt);

struct DerivInputs {
    // Error-system quantities (h-schemes)
    MatrixXd A;
    MatrixXd W;
    MatrixXd Q;
    VectorXd h;
    // Plant quantities (x-schemes)
    MatrixXd A0;
    PlantSplit plant;
    VectorXd x;
    // Shared
    MatrixXd P;
    double sigma = 1.0;
    VectorXd thetadot;
};

/// Time derivative of the auxiliary state; `thetahat` of the result holds thetahat'.
IdentifierState state_deriv(const IdentifierState& state, const DerivInputs& in);

/// Scheme-appropriate Lyapunov value. For swapping schemes the unobservable
/// residual is replaced by eps - Omega^T theta_tilde.
double lyapunov_value(const IdentifierState& state, const VectorXd& eps, const VectorXd& theta_true,
                      const MatrixXd& P, double gamma);

/// eps - Omega^T (theta - thetahat) for swapping schemes; zero vector otherwise.
VectorXd swapping_residual(const IdentifierState& state, const VectorXd& eps, const VectorXd& theta_true);

}  // namespace novctl
