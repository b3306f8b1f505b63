#include "novctl/sim.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace novctl {

Simulator::Simulator(Scenario scenario)
    : scenario_(std::move(scenario)),
      graph_(compile(scenario_)),
      nominal_(compile_nominal(scenario_)),
      lyap_(solve_P(scenario_.gains.c)) {}

std::size_t Simulator::state_size() const {
    return static_cast<std::size_t>(scenario_.n()) +
           IdentifierState::flat_size(scenario_.identifier, scenario_.n(), scenario_.p());
}

IdentifierState Simulator::identifier_of(const VectorXd& y) const {
    const int n = scenario_.n();
    return IdentifierState::unpack(scenario_.identifier, n, scenario_.p(),
                                   std::span<const double>(y.data() + n, state_size() - static_cast<std::size_t>(n)));
}

VectorXd Simulator::initial_state() const {
    const int n = scenario_.n();
    const VectorXd h0 = eval_h(graph_, scenario_.x0, scenario_.thetahat0, 0.0);
    const IdentifierState id = novctl::initial_state(scenario_.identifier, h0, scenario_.x0, scenario_.thetahat0);
    VectorXd y(static_cast<Eigen::Index>(state_size()));
    y.head(n) = scenario_.x0;
    id.pack(std::span<double>(y.data() + n, state_size() - static_cast<std::size_t>(n)));
    return y;
}

StageEval Simulator::evaluate(double t, const VectorXd& y, std::optional<bool> held) const {
    const int n = scenario_.n();
    const int p = scenario_.p();
    const VectorXd x = y.head(n);
    const IdentifierState id = identifier_of(y);
    const VectorXd& theta = scenario_.plant.theta_true;

    StageEval ev;
    graph_.evaluate(x, id.thetahat, t, ws_, ev.ctrl);
    ev.u0 = nominal_.nominal_u(x, t, nominal_ws_);
    ev.control = scenario_.filter_on ? override_control(ev.u0, ev.ctrl.ubar)
                                     : OverrideResult{ev.ctrl.ubar, ev.ctrl.ubar >= ev.u0};
    if (held) {
        ev.control.active = *held;
        if (scenario_.filter_on) ev.control.u = *held ? ev.ctrl.ubar : ev.u0;
    }
    const double u = ev.control.u;

    // Plant split f + F^T theta; F depends on x only.
    PlantSplit plant;
    plant.f.resize(n);
    for (int i = 0; i + 1 < n; ++i) plant.f(i) = x(i + 1);
    plant.f(n - 1) = u;
    plant.F.resize(p, n);
    {
        std::vector<double> env(scenario_.symbols.size(), 0.0);
        for (int i = 1; i <= n; ++i) env[static_cast<std::size_t>(scenario_.symbols.x(i))] = x(i - 1);
        try {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < p; ++j) {
                    plant.F(j, i) = expr::eval(scenario_.plant.phi[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], env);
                }
            }
        } catch (const std::runtime_error& e) {
            throw NonFinite("plant", t, e.what());
        }
    }

    ev.eps = epsilon(id, ev.ctrl.h, x);
    const bool h_scheme = id.scheme() == Scheme::HPassive || id.scheme() == Scheme::HSwapping;
    const MatrixXd& regressor = h_scheme ? ev.ctrl.W : plant.F;
    std::optional<Gate> gate;
    if (scenario_.gated && !ev.control.active) gate = Gate{-1.0, 0.0};  // closed
    ev.thetadot = theta_dot(id, ev.eps, regressor, lyap_.P,
                            UpdateGains{scenario_.gains.gamma, scenario_.gains.nu}, gate);

    const ErrorSystemMatrices m = ev.ctrl.matrices();
    DerivInputs in;
    in.A = m.A;
    in.W = m.W;
    in.Q = m.Q;
    in.h = ev.ctrl.h;
    in.A0 = lyap_.A0;
    in.plant = plant;
    in.x = x;
    in.P = lyap_.P;
    in.sigma = scenario_.gains.sigma;
    in.thetadot = ev.thetadot;
    const IdentifierState d = state_deriv(id, in);

    ev.deriv.resize(y.size());
    ev.deriv.head(n) = plant.f + plant.F.transpose() * theta;
    d.pack(std::span<double>(ev.deriv.data() + n, state_size() - static_cast<std::size_t>(n)));

    ev.V = lyapunov_value(id, ev.eps, theta, lyap_.P, scenario_.gains.gamma);
    ev.swap_residual_norm = swapping_residual(id, ev.eps, theta).norm();
    if (!ev.deriv.allFinite()) throw NonFinite("derivative", t);
    return ev;
}

bool Simulator::mode(double t, const VectorXd& y) const {
    const VectorXd x = y.head(scenario_.n());
    ControllerValues cv;
    graph_.evaluate(x, y.segment(scenario_.n(), scenario_.p()), t, ws_, cv);
    return cv.ubar >= nominal_.nominal_u(x, t, nominal_ws_);
}

VectorXd Simulator::rk4(double t, const VectorXd& y, double dt, std::optional<bool> held) const {
    const VectorXd k1 = evaluate(t, y, held).deriv;
    const VectorXd k2 = evaluate(t + 0.5 * dt, y + 0.5 * dt * k1, held).deriv;
    const VectorXd k3 = evaluate(t + 0.5 * dt, y + 0.5 * dt * k2, held).deriv;
    const VectorXd k4 = evaluate(t + dt, y + dt * k3, held).deriv;
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorXd Simulator::step(double t, const VectorXd& y, double dt) const {
    const bool switching = scenario_.filter_on || scenario_.gated;
    if (!scenario_.events || !switching) return rk4(t, y, dt);

    const bool m0 = mode(t, y);
    VectorXd y1 = rk4(t, y, dt, m0);
    if (mode(t + dt, y1) == m0) return y1;

    // Bisect the first crossing; hi always lies past it.
    double lo = 0.0;
    double hi = dt;
    VectorXd y_hi = y1;
    for (int it = 0; it < 60 && hi - lo > 1e-15 * std::max(1.0, t); ++it) {
        const double mid = 0.5 * (lo + hi);
        VectorXd ym = rk4(t, y, mid, m0);
        if (mode(t + mid, ym) == m0) {
            lo = mid;
        } else {
            hi = mid;
            y_hi = std::move(ym);
        }
    }
    if (hi >= dt) return y1;
    // The remainder runs in the new mode; a second flip inside it is not chased.
    return rk4(t + hi, y_hi, dt - hi, !m0);
}

namespace {

std::string diverged_component(const VectorXd& y, int n, int p) {
    if (!y.head(n).allFinite()) return "x";
    if (!y.segment(n, p).allFinite()) return "thetahat";
    return "identifier";
}

}  // namespace

RunResult Simulator::run() const {
    const Scenario& sc = scenario_;
    const int n = sc.n();
    const int p = sc.p();
    const VectorXd& theta = sc.plant.theta_true;

    RunResult res;
    res.trace.fingerprint = sc.fingerprint();
    res.trace.n = n;
    res.trace.p = p;
    res.trace.dt = sc.dt;
    res.trace.stride = sc.stride;

    Metrics& m = res.metrics;
    m.theta_err0 = (theta - sc.thetahat0).norm();
    try {
        m.h1_star = violation_bound(BoundGains::from(sc.gains), bound_mode_for(sc.identifier),
                                    BoundInputs{0.0, 0.0, m.theta_err0});
    } catch (const std::domain_error&) {
        m.h1_star = std::numeric_limits<double>::infinity();
    }

    const auto steps = static_cast<std::size_t>(std::llround(sc.t_end / sc.dt));
    VectorXd y;
    VectorXd h0;
    bool first = true;
    double prev_V = 0.0;
    std::size_t active_count = 0;
    bool prev_active = false;
    double h1_prev2 = 0.0, h1_prev = 0.0;  // h1 at grid points k-2, k-1
    std::size_t k_min = 0;
    double l2_acc = 0.0;
    double prev_thetadot_sq = 0.0;
    m.min_h1 = std::numeric_limits<double>::infinity();
    m.max_V_increase = -std::numeric_limits<double>::infinity();
    m.envelope_respected = true;

    std::size_t k = 0;
    double t = 0.0;
    try {
        y = initial_state();
        for (k = 0;; ++k) {
            t = static_cast<double>(k) * sc.dt;
            const StageEval ev = evaluate(t, y);
            const double h1 = ev.ctrl.h(0);
            if (first) h0 = ev.ctrl.h;
            if (h1 < m.min_h1) {
                m.min_h1 = h1;
                m.t_min_h1 = t;
                k_min = k;
            }
            // Interior grid minimum: refine once its right neighbour is known.
            if (k >= 2 && k_min == k - 1) {
                m.min_h1 = std::min(m.min_h1, refine_minimum(h1_prev2, h1_prev, h1));
            }
            h1_prev2 = h1_prev;
            h1_prev = h1;
            if (h1 > transient_envelope(sc.gains.c_min(), h0, t, m.h1_star) + kBoundTol) m.envelope_respected = false;
            const VectorXd thetahat = y.segment(n, p);
            const double terr = (theta - thetahat).norm();
            m.theta_err_sup = std::max(m.theta_err_sup, terr);
            const double td = ev.thetadot.norm();
            m.thetadot_sup = std::max(m.thetadot_sup, td);
            if (!first) {
                l2_acc += 0.5 * sc.dt * (prev_thetadot_sq + td * td);
                m.max_V_increase = std::max(m.max_V_increase, ev.V - prev_V);
            }
            prev_thetadot_sq = td * td;
            prev_V = ev.V;
            m.swap_residual_sup = std::max(m.swap_residual_sup, ev.swap_residual_norm);
            if (ev.control.active) ++active_count;
            if (!first && ev.control.active != prev_active) ++m.switches;
            prev_active = ev.control.active;

            if (k % static_cast<std::size_t>(sc.stride) == 0 || k == steps) {
                Sample s;
                s.t = t;
                s.x = y.head(n);
                s.thetahat = thetahat;
                s.thetadot = ev.thetadot;
                s.h = ev.ctrl.h;
                s.theta_err_norm = terr;
                s.u0 = ev.u0;
                s.ubar = ev.ctrl.ubar;
                s.u = ev.control.u;
                s.active = ev.control.active;
                s.eps_norm = ev.eps.norm();
                s.V = ev.V;
                s.swap_residual_norm = ev.swap_residual_norm;
                res.trace.samples.push_back(std::move(s));
            }
            first = false;
            if (k == steps) {
                m.h1_final = h1;
                m.theta_err_final = terr;
                break;
            }
            VectorXd next = step(t, y, sc.dt);
            if (!next.allFinite()) {
                throw NonFinite(diverged_component(next, n, p), t + sc.dt, "integration step overflowed");
            }
            y = std::move(next);
        }
    } catch (const NonFinite& e) {
        res.failure = RunFailure{e.component(), e.time(), e.what()};
    }

    m.steps = k;
    if (m.max_V_increase == -std::numeric_limits<double>::infinity()) m.max_V_increase = 0.0;
    m.thetadot_l2 = std::sqrt(l2_acc);
    m.violation = std::max(0.0, -m.min_h1);
    m.bound_respected = m.min_h1 >= -m.h1_star - kBoundTol;
    m.active_fraction = static_cast<double>(active_count) / static_cast<double>(k + 1);
    const double theta_norm = theta.norm();
    const double rel = theta_norm > 0.0 ? m.theta_err_final / theta_norm : m.theta_err_final;
    m.settled = res.ok() && std::abs(m.h1_final) <= kSettleTol && rel <= kSettleTol;
    return res;
}

RunResult run(const Scenario& scenario) { return Simulator(scenario).run(); }

double refine_minimum(double left, double mid, double right) {
    const double curv = left - 2.0 * mid + right;
    if (!(curv > 0.0)) return std::min({left, mid, right});
    const double offset = 0.5 * (left - right) / curv;  // in grid units, within [-0.5, 0.5] at a discrete minimum
    const double v = mid - 0.25 * (left - right) * offset;
    return std::min({v, left, mid, right});
}

double stable_dt(const Simulator& sim, double dt) {
    const Scenario& sc = sim.scenario();
    const StageEval ev = sim.evaluate(0.0, sim.initial_state());
    const double P_norm = sim.lyapunov().P.norm();
    const bool h_scheme = sc.identifier == Scheme::HPassive || sc.identifier == Scheme::HSwapping;
    double rho = ev.ctrl.s.maxCoeff();
    if (h_scheme) {
        rho += sc.gains.sigma * ev.ctrl.W.squaredNorm() * P_norm;
    } else {
        MatrixXd F(sc.p(), sc.n());
        std::vector<double> env(sc.symbols.size(), 0.0);
        for (int i = 1; i <= sc.n(); ++i) env[static_cast<std::size_t>(sc.symbols.x(i))] = sc.x0(i - 1);
        for (int i = 0; i < sc.n(); ++i)
            for (int j = 0; j < sc.p(); ++j)
                F(j, i) = expr::eval(sc.plant.phi[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], env);
        rho = std::max(rho, sc.gains.c.maxCoeff() + sc.gains.sigma * F.squaredNorm() * P_norm);
    }
    const double limit = std::min(dt, 1.0 / rho);
    const double mag = std::pow(10.0, std::floor(std::log10(limit)));
    for (double f : {5.0, 2.0, 1.0}) {
        if (f * mag <= limit) return f * mag;
    }
    return mag;
}

BoundReport compare_bound(const Metrics& metrics) {
    BoundReport r{metrics.min_h1, metrics.h1_star, metrics.bound_respected, metrics.envelope_respected};
    if (!r.bound_respected) {
        throw BoundViolated(fmt::format("min h1 = {} is below -h1* = {}", metrics.min_h1, -metrics.h1_star));
    }
    return r;
}

}  // namespace novctl
