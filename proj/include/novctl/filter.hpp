#pragma once

// Nominal tracking controller u0 and the max-override safety filter.
//
// u0 is plain tracking backstepping toward y_r(t) with the true theta:
//   beta_0 = y_r,  z_i = x_i - beta_{i-1}
//   beta_i = -z_{i-1} - k_i z_i - phi_i^T theta
//            + sum_{k<i} d beta_{i-1}/d x_k (x_{k+1} + phi_k^T theta)
//            + sum_{k<i} d beta_{i-1}/d y_r^(k) y_r^(k+1)
//   u0 = beta_n

#include <vector>

#include <Eigen/Dense>

#include "novctl/controller.hpp"
#include "novctl/expr.hpp"
#include "novctl/scenario.hpp"

namespace novctl {

class NominalController {
public:
    int n = 0;
    int p = 0;
    VectorXd k;
    SymbolLayout symbols;
    Reference reference;
    std::vector<expr::Expr> beta;  // 0..n
    std::vector<expr::Expr> z;     // 1..n, slot 0 unused

    double nominal_u(const VectorXd& x, double t, ControllerWorkspace& ws) const;
    double nominal_u(const VectorXd& x, double t) const;

private:
    friend NominalController compile_nominal(const Scenario& scenario);
    expr::Program program_;
};

NominalController compile_nominal(const Scenario& scenario);

struct OverrideResult {
    double u;
    bool active;  // ubar >= u0
};

OverrideResult override_control(double u0, double ubar);

}  // namespace novctl
