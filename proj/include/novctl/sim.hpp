#pragma once

// Fixed-step RK4 integration of plant + identifier + estimate.
//
// Flat state layout: x (n), thetahat (p), identifier auxiliary state.
// Within each stage: h, A/W/Q, ubar, u0, override, gate, eps, thetahat',
// then all derivatives.
//
// The override mode (ubar >= u0) switches the vector field. With
// scenario.events set, a step holds the mode fixed, and if the mode at the
// end of the step differs, the crossing is bisected and the step restarted
// there. Without it the mode is re-evaluated at every stage.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "novctl/controller.hpp"
#include "novctl/errors.hpp"
#include "novctl/filter.hpp"
#include "novctl/identifiers.hpp"
#include "novctl/lyap.hpp"
#include "novctl/scenario.hpp"

namespace novctl {

struct Sample {
    double t = 0.0;
    VectorXd x;
    VectorXd thetahat;
    VectorXd thetadot;
    VectorXd h;
    double theta_err_norm = 0.0;
    double u0 = 0.0;
    double ubar = 0.0;
    double u = 0.0;
    bool active = false;
    double eps_norm = 0.0;
    double V = 0.0;
    double swap_residual_norm = 0.0;  // |eps - Omega^T theta_tilde|, swapping schemes only
};

struct Trace {
    std::string fingerprint;
    int n = 0;
    int p = 0;
    double dt = 0.0;
    int stride = 1;
    std::vector<Sample> samples;
};

struct Metrics {
    double min_h1 = 0.0;
    double t_min_h1 = 0.0;
    double violation = 0.0;
    double h1_star = 0.0;
    bool bound_respected = false;
    bool envelope_respected = false;
    double theta_err0 = 0.0;
    double theta_err_final = 0.0;
    double theta_err_sup = 0.0;
    double thetadot_sup = 0.0;
    double thetadot_l2 = 0.0;
    double h1_final = 0.0;
    bool settled = false;
    double max_V_increase = 0.0;  // max_k V_{k+1} - V_k over integration steps
    double swap_residual_sup = 0.0;
    double active_fraction = 0.0;
    std::size_t switches = 0;  // mode changes between grid points
    std::size_t steps = 0;
};

struct RunFailure {
    std::string component;
    double t = 0.0;
    std::string message;
};

struct RunResult {
    Trace trace;
    Metrics metrics;
    std::optional<RunFailure> failure;
    bool ok() const { return !failure.has_value(); }
};

/// Everything computed at one (t, state) point.
struct StageEval {
    VectorXd deriv;
    ControllerValues ctrl;
    double u0 = 0.0;
    OverrideResult control{0.0, false};
    VectorXd eps;
    VectorXd thetadot;
    double V = 0.0;
    double swap_residual_norm = 0.0;
};

class BoundViolated : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One simulator per thread: evaluation reuses internal scratch buffers.
class Simulator {
public:
    explicit Simulator(Scenario scenario);

    const Scenario& scenario() const { return scenario_; }
    const ControllerGraph& graph() const { return graph_; }
    const NominalController& nominal() const { return nominal_; }
    const LyapunovPair& lyapunov() const { return lyap_; }

    std::size_t state_size() const;
    VectorXd initial_state() const;
    VectorXd x_of(const VectorXd& y) const { return y.head(scenario_.n()); }
    IdentifierState identifier_of(const VectorXd& y) const;

    /// `held` forces the override mode instead of comparing ubar and u0.
    StageEval evaluate(double t, const VectorXd& y, std::optional<bool> held = std::nullopt) const;
    bool mode(double t, const VectorXd& y) const;
    /// One classical RK4 step, with the mode held if given.
    VectorXd rk4(double t, const VectorXd& y, double dt, std::optional<bool> held = std::nullopt) const;
    /// Grid step per the scenario's switching policy.
    VectorXd step(double t, const VectorXd& y, double dt) const;
    RunResult run() const;

private:
    Scenario scenario_;
    ControllerGraph graph_;
    NominalController nominal_;
    LyapunovPair lyap_;
    mutable ControllerWorkspace ws_;
    mutable ControllerWorkspace nominal_ws_;
};

RunResult run(const Scenario& scenario);

/// Largest 1-2-5 step not above min(dt, 1/rho), rho a stiffness estimate at
/// t = 0 (max s_i plus the observer injection gain).
double stable_dt(const Simulator& sim, double dt);

/// Vertex of the parabola through three equally spaced samples, clamped to them.
double refine_minimum(double left, double mid, double right);

struct BoundReport {
    double min_h1 = 0.0;
    double h1_star = 0.0;
    bool bound_respected = false;
    bool envelope_respected = false;
};

/// Throws BoundViolated when min_h1 < -h1_star - 1e-6.
BoundReport compare_bound(const Metrics& metrics);

inline constexpr double kBoundTol = 1e-6;
inline constexpr double kSettleTol = 0.02;

}  // namespace novctl
