#include "novctl/filter.hpp"

#include <algorithm>

namespace novctl {

using expr::Expr;

NominalController compile_nominal(const Scenario& scenario) {
    const int n = scenario.n();
    const int p = scenario.p();
    const SymbolLayout& L = scenario.symbols;
    const VectorXd& theta = scenario.plant.theta_true;

    NominalController nc;
    nc.n = n;
    nc.p = p;
    nc.k = scenario.gains.k_nominal;
    nc.symbols = L;
    nc.reference = scenario.reference;

    expr::Pool pool;
    const auto N = static_cast<std::size_t>(n);
    // phi_i^T theta
    std::vector<Expr> drift(N);
    for (std::size_t i = 0; i < N; ++i) {
        Expr d = pool.zero();
        for (int j = 0; j < p; ++j) {
            d = pool.add(d, pool.mul(pool.import(scenario.plant.phi[i][static_cast<std::size_t>(j)]),
                                     pool.constant(theta(j))));
        }
        drift[i] = d;
    }
    auto xv = [&](int i) { return pool.var(L.x(i)); };
    auto yv = [&](int kk) { return pool.var(L.yr(kk)); };

    nc.beta.assign(N + 1, nullptr);
    nc.z.assign(N + 1, nullptr);
    nc.beta[0] = yv(0);
    for (int level = 1; level <= n; ++level) {
        const auto i = static_cast<std::size_t>(level);
        nc.z[i] = pool.sub(xv(level), nc.beta[i - 1]);
        Expr b = pool.neg(pool.mul(pool.constant(nc.k(level - 1)), nc.z[i]));
        if (level > 1) b = pool.sub(b, nc.z[i - 1]);
        b = pool.sub(b, drift[i - 1]);
        for (int kk = 1; kk < level; ++kk) {
            Expr xdot = pool.add(xv(kk + 1), drift[static_cast<std::size_t>(kk - 1)]);
            b = pool.add(b, pool.mul(pool.diff(nc.beta[i - 1], L.x(kk)), xdot));
        }
        for (int kk = 0; kk < level; ++kk) {
            b = pool.add(b, pool.mul(pool.diff(nc.beta[i - 1], L.yr(kk)), yv(kk + 1)));
        }
        nc.beta[i] = b;
    }
    const std::vector<Expr> roots{nc.beta[N]};
    nc.program_ = expr::Program(roots);
    return nc;
}

double NominalController::nominal_u(const VectorXd& x, double t, ControllerWorkspace& ws) const {
    ws.env.assign(symbols.size(), 0.0);
    for (int i = 1; i <= n; ++i) ws.env[static_cast<std::size_t>(symbols.x(i))] = x(i - 1);
    ws.out.resize(1);
    try {
        fill_time_slots(reference, symbols, t, ws.env, ws.scratch);
        program_.run(ws.env, ws.scratch, ws.out);
    } catch (const expr::DomainError& e) {
        throw NonFinite("nominal", t, e.what());
    } catch (const expr::DivisionNearZero& e) {
        throw NonFinite("nominal", t, e.what());
    }
    return ws.out[0];
}

double NominalController::nominal_u(const VectorXd& x, double t) const {
    ControllerWorkspace ws;
    return nominal_u(x, t, ws);
}

OverrideResult override_control(double u0, double ubar) {
    return {std::max(ubar, u0), ubar >= u0};
}

}  // namespace novctl
