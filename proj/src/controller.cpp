#include "novctl/controller.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace novctl {

using expr::Expr;

ErrorSystemMatrices ControllerValues::matrices() const {
    const auto n = h.size();
    ErrorSystemMatrices m;
    m.A = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m.A(i, i) = -s(i);
        if (i + 1 < n) m.A(i, i + 1) = 1.0;
    }
    m.W = W;
    m.Q = -dalpha_dtheta;
    return m;
}

ControllerGraph compile(const Scenario& scenario) {
    const int n = scenario.n();
    const int p = scenario.p();
    const SymbolLayout& L = scenario.symbols;

    ControllerGraph g;
    g.n = n;
    g.p = p;
    g.symbols = L;
    g.reference = scenario.reference;

    expr::Pool pool;
    auto check_budget = [&](int level) {
        if (pool.size() > scenario.node_budget) {
            throw CompileError(fmt::format("expression graph exceeded {} nodes at level {} of {}",
                                           scenario.node_budget, level, n));
        }
    };

    std::vector<std::vector<Expr>> phi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (const auto& e : scenario.plant.phi[static_cast<std::size_t>(i)]) {
            phi[static_cast<std::size_t>(i)].push_back(pool.import(e));
        }
    }
    auto xv = [&](int i) { return pool.var(L.x(i)); };
    auto rv = [&](int k) { return pool.var(L.r(k)); };
    auto thv = [&](int j) { return pool.var(L.thetahat(j)); };

    const auto N = static_cast<std::size_t>(n);
    g.alpha.assign(N + 1, nullptr);
    g.h.assign(N + 1, nullptr);
    g.s.assign(N + 1, nullptr);
    g.w.assign(N + 1, {});
    g.dalpha_dx.assign(N + 1, {});
    g.dalpha_dtheta.assign(N + 1, {});
    g.dalpha_dr.assign(N + 1, {});

    auto partials = [&](std::size_t i) {
        for (int k = 1; k <= n; ++k) g.dalpha_dx[i].push_back(pool.diff(g.alpha[i], L.x(k)));
        for (int j = 1; j <= p; ++j) g.dalpha_dtheta[i].push_back(pool.diff(g.alpha[i], L.thetahat(j)));
        for (int k = 0; k <= n; ++k) g.dalpha_dr[i].push_back(pool.diff(g.alpha[i], L.r(k)));
    };

    g.alpha[0] = pool.zero();
    partials(0);

    for (int level = 1; level <= n; ++level) {
        const auto i = static_cast<std::size_t>(level);
        const auto& prev_dx = g.dalpha_dx[i - 1];
        const auto& prev_dth = g.dalpha_dtheta[i - 1];
        const auto& prev_dr = g.dalpha_dr[i - 1];

        g.h[i] = level == 1 ? pool.sub(xv(1), rv(0))
                            : pool.sub(pool.sub(xv(level), g.alpha[i - 1]), rv(level - 1));

        for (int j = 0; j < p; ++j) {
            Expr wij = phi[i - 1][static_cast<std::size_t>(j)];
            for (int k = 1; k < level; ++k) {
                wij = pool.sub(wij, pool.mul(prev_dx[static_cast<std::size_t>(k - 1)],
                                             phi[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(j)]));
            }
            g.w[i].push_back(wij);
        }

        Expr w_sq = pool.zero();
        Expr dth_sq = pool.zero();
        for (int j = 0; j < p; ++j) {
            w_sq = pool.add(w_sq, pool.pow(g.w[i][static_cast<std::size_t>(j)], 2));
            dth_sq = pool.add(dth_sq, pool.pow(prev_dth[static_cast<std::size_t>(j)], 2));
        }
        const auto gi = static_cast<Eigen::Index>(level - 1);
        g.s[i] = pool.add(pool.add(pool.constant(scenario.gains.c(gi)),
                                   pool.mul(pool.constant(scenario.gains.kappa(gi)), w_sq)),
                          pool.mul(pool.constant(scenario.gains.g(gi)), dth_sq));

        Expr a = pool.neg(pool.mul(g.s[i], g.h[i]));
        for (int j = 1; j <= p; ++j) {
            a = pool.sub(a, pool.mul(g.w[i][static_cast<std::size_t>(j - 1)], thv(j)));
        }
        for (int k = 1; k < level; ++k) {
            a = pool.add(a, pool.mul(prev_dx[static_cast<std::size_t>(k - 1)], xv(k + 1)));
            a = pool.add(a, pool.mul(prev_dr[static_cast<std::size_t>(k - 1)], rv(k)));
        }
        g.alpha[i] = a;
        partials(i);
        check_budget(level);
    }
    g.ubar = pool.add(g.alpha[N], rv(n));
    check_budget(n);

    // Output order: h (n), s (n), w (n*p, level-major), dalpha_dtheta of alpha_{i-1} (n*p), ubar.
    std::vector<Expr> outputs;
    for (std::size_t i = 1; i <= N; ++i) outputs.push_back(g.h[i]);
    for (std::size_t i = 1; i <= N; ++i) outputs.push_back(g.s[i]);
    for (std::size_t i = 1; i <= N; ++i) {
        for (const auto& e : g.w[i]) outputs.push_back(e);
    }
    for (std::size_t i = 1; i <= N; ++i) {
        for (const auto& e : g.dalpha_dtheta[i - 1]) outputs.push_back(e);
    }
    outputs.push_back(g.ubar);
    g.program_ = expr::Program(outputs);
    g.node_count = expr::dag_size(outputs);
    return g;
}

std::vector<double> ControllerGraph::environment(const VectorXd& x, const VectorXd& thetahat,
                                                 double t) const {
    std::vector<double> env(symbols.size(), 0.0);
    for (int i = 1; i <= n; ++i) env[static_cast<std::size_t>(symbols.x(i))] = x(i - 1);
    for (int j = 1; j <= p; ++j) env[static_cast<std::size_t>(symbols.thetahat(j))] = thetahat(j - 1);
    std::vector<double> scratch;
    fill_time_slots(reference, symbols, t, env, scratch);
    return env;
}

void ControllerGraph::evaluate(const VectorXd& x, const VectorXd& thetahat, double t,
                               ControllerWorkspace& ws, ControllerValues& out) const {
    ws.env.assign(symbols.size(), 0.0);
    for (int i = 1; i <= n; ++i) ws.env[static_cast<std::size_t>(symbols.x(i))] = x(i - 1);
    for (int j = 1; j <= p; ++j) ws.env[static_cast<std::size_t>(symbols.thetahat(j))] = thetahat(j - 1);
    ws.out.resize(program_.num_outputs());
    try {
        fill_time_slots(reference, symbols, t, ws.env, ws.scratch);
        program_.run(ws.env, ws.scratch, ws.out);
    } catch (const expr::DomainError& e) {
        throw NonFinite("controller", t, e.what());
    } catch (const expr::DivisionNearZero& e) {
        throw NonFinite("controller", t, e.what());
    }

    const auto N = static_cast<Eigen::Index>(n);
    const auto P = static_cast<Eigen::Index>(p);
    out.h.resize(N);
    out.s.resize(N);
    out.W.resize(P, N);
    out.dalpha_dtheta.resize(P, N);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < N; ++i) out.h(i) = ws.out[k++];
    for (Eigen::Index i = 0; i < N; ++i) out.s(i) = ws.out[k++];
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < P; ++j) out.W(j, i) = ws.out[k++];
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < P; ++j) out.dalpha_dtheta(j, i) = ws.out[k++];
    }
    out.ubar = ws.out[k];
}

VectorXd eval_h(const ControllerGraph& graph, const VectorXd& x, const VectorXd& thetahat, double t) {
    ControllerWorkspace ws;
    ControllerValues v;
    graph.evaluate(x, thetahat, t, ws, v);
    return v.h;
}

double eval_ubar(const ControllerGraph& graph, const VectorXd& x, const VectorXd& thetahat, double t) {
    ControllerWorkspace ws;
    ControllerValues v;
    graph.evaluate(x, thetahat, t, ws, v);
    return v.ubar;
}

ErrorSystemMatrices eval_AWQ(const ControllerGraph& graph, const VectorXd& x,
                             const VectorXd& thetahat, double t) {
    ControllerWorkspace ws;
    ControllerValues v;
    graph.evaluate(x, thetahat, t, ws, v);
    return v.matrices();
}

// ---------------------------------------------------------------------------
// Gain floor

CiFloorReport ci_floor(const Scenario& scenario, const ControllerGraph& graph) {
    const int n = graph.n;
    const int p = graph.p;
    const std::vector<double> env = graph.environment(scenario.x0, scenario.thetahat0, 0.0);
    auto at = [&](const Expr& e) { return expr::eval(e, env); };
    auto r = [&](int k) { return env[static_cast<std::size_t>(graph.symbols.r(k))]; };

    CiFloorReport rep;
    rep.floor = VectorXd::Zero(n);
    rep.h0 = VectorXd::Zero(n);
    rep.degenerate.assign(static_cast<std::size_t>(n), false);
    rep.pass.assign(static_cast<std::size_t>(n), true);

    if (scenario.x0(0) - r(0) < 0.0) {
        throw ValidationError("h1_nonneg", fmt::format("h1(0) = {} is negative", scenario.x0(0) - r(0)));
    }

    for (int level = 1; level <= n; ++level) {
        const auto i = static_cast<std::size_t>(level);
        const auto li = static_cast<Eigen::Index>(level - 1);
        const double hi = at(graph.h[i]);
        rep.h0(li) = hi;
        rep.degenerate[i - 1] = std::abs(hi) < kDegenerateH;
        if (level == n) {
            // No x_{n+1}: only c_n > 0 is required.
            rep.pass[i - 1] = scenario.gains.c(li) > 0.0;
            continue;
        }
        if (rep.degenerate[i - 1]) {
            rep.floor(li) = 0.0;
        } else {
            double bracket = scenario.x0(level) - r(level);
            for (int j = 0; j < p; ++j) {
                bracket += at(graph.w[i][static_cast<std::size_t>(j)]) * scenario.thetahat0(j);
            }
            for (int j = 1; j < level; ++j) {
                bracket -= at(graph.dalpha_dx[i - 1][static_cast<std::size_t>(j - 1)]) * scenario.x0(j);
                bracket -= at(graph.dalpha_dr[i - 1][static_cast<std::size_t>(j - 1)]) * r(j);
            }
            rep.floor(li) = -bracket / hi;
        }
        rep.pass[i - 1] = scenario.gains.c(li) >= std::max(rep.floor(li), 0.0);
    }
    for (int level = 1; level <= n; ++level) {
        if (!rep.pass[static_cast<std::size_t>(level - 1)]) {
            rep.ok = false;
            rep.violations.push_back(level);
        }
    }
    return rep;
}

CiFloorReport ci_floor(const Scenario& scenario) { return ci_floor(scenario, compile(scenario)); }

// ---------------------------------------------------------------------------
// Violation bounds

BoundMode bound_mode_from_string(const std::string& s) {
    if (s == "linf") return BoundMode::Linf;
    if (s == "l2") return BoundMode::L2;
    if (s == "h-passive") return BoundMode::HPassive;
    if (s == "x-passive") return BoundMode::XPassive;
    if (s == "h-swapping") return BoundMode::HSwapping;
    if (s == "x-swapping") return BoundMode::XSwapping;
    throw InvalidMode("unknown bound mode '" + s + "'");
}

std::string to_string(BoundMode m) {
    switch (m) {
        case BoundMode::Linf: return "linf";
        case BoundMode::L2: return "l2";
        case BoundMode::HPassive: return "h-passive";
        case BoundMode::XPassive: return "x-passive";
        case BoundMode::HSwapping: return "h-swapping";
        case BoundMode::XSwapping: return "x-swapping";
    }
    throw InvalidMode("invalid bound mode");
}

BoundMode bound_mode_for(Scheme s) {
    switch (s) {
        case Scheme::HPassive: return BoundMode::HPassive;
        case Scheme::HSwapping: return BoundMode::HSwapping;
        case Scheme::XPassive: return BoundMode::XPassive;
        case Scheme::XSwapping: return BoundMode::XSwapping;
    }
    throw InvalidMode("invalid scheme");
}

BoundGains BoundGains::from(const GainConfig& gains) {
    BoundGains b;
    b.n = static_cast<int>(gains.c.size());
    b.c_min = gains.c_min();
    b.kappa_min = gains.kappa_min();
    b.g_min = gains.g_min();
    b.sigma = gains.sigma;
    b.gamma = gains.gamma;
    b.nu = gains.nu;
    return b;
}

double geometric_factor(double c_min, int n) {
    if (std::abs(c_min - 1.0) < 1e-9) return static_cast<double>(n);
    return (std::pow(c_min, n) - 1.0) / (std::pow(c_min, n - 1) * (c_min - 1.0));
}

double violation_bound(const BoundGains& b, BoundMode mode, const BoundInputs& in) {
    const double factor = geometric_factor(b.c_min, b.n);
    const double cg = b.c_min * b.g_min;  // +inf when n == 1, making the rate term vanish
    const double sqrt_ck = std::sqrt(b.c_min * b.kappa_min);
    switch (mode) {
        case BoundMode::Linf:
            return factor * (in.theta_err_sup / (2.0 * sqrt_ck) + in.thetadot_norm / (2.0 * std::sqrt(cg)));
        case BoundMode::L2:
            return factor * (in.theta_err_sup / (2.0 * sqrt_ck) + in.thetadot_norm / std::sqrt(2.0 * b.g_min));
        case BoundMode::HPassive:
        case BoundMode::XPassive:
            return 0.5 * factor * (1.0 / sqrt_ck + std::sqrt(b.gamma / (b.sigma * b.g_min))) * in.theta_err0;
        case BoundMode::HSwapping:
        case BoundMode::XSwapping:
            if (!(b.nu > 0.0)) throw std::domain_error("swapping bound requires nu > 0");
            return 0.5 * factor * (1.0 / sqrt_ck + b.gamma / (b.nu * std::sqrt(cg))) * in.theta_err0;
    }
    throw InvalidMode("invalid bound mode");
}

double transient_envelope(double c_min, const VectorXd& h0, double t, double h1_star) {
    double sum = 0.0;
    double term = 1.0;  // t^{i-1}/(i-1)!
    for (Eigen::Index i = 0; i < h0.size(); ++i) {
        if (i > 0) term *= t / static_cast<double>(i);
        sum += term * h0(i);
    }
    return std::exp(-c_min * t) * sum + h1_star;
}

}  // namespace novctl
