#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "novctl/expr.hpp"

namespace novctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Scheme { HPassive, HSwapping, XPassive, XSwapping };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A scenario broke a named invariant.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string invariant, const std::string& detail);
    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

/// Variable slots shared by every expression of a scenario.
///
/// Layout: x1..xn, thetahat1..thetahatp, r0..rn, t, yr0..yrn.
struct SymbolLayout {
    int n = 0;
    int p = 0;
    expr::SymbolTable table;

    SymbolLayout() = default;
    SymbolLayout(int n, int p);

    int x(int i) const { return i - 1; }  // 1-based
    int thetahat(int j) const { return n + j - 1; }  // 1-based
    int r(int k) const { return n + p + k; }  // derivative order k
    int t() const { return n + p + n + 1; }
    int yr(int k) const { return t() + 1 + k; }
    std::size_t size() const { return table.size(); }
};

/// Strict-feedback plant: x_i' = x_{i+1} + phi_i(x1..xi)^T theta, x_n' = u + phi_n(x)^T theta.
struct Plant {
    int n = 0;
    int p = 0;
    std::vector<std::vector<expr::Expr>> phi;  // n rows of p entries
    VectorXd theta_true;
};

struct Reference {
    expr::Expr r_expr;
    std::vector<expr::Expr> derivs;     // r^(0..n); derivs[0] is r_expr
    expr::Expr yr_expr;
    std::vector<expr::Expr> yr_derivs;  // y_r^(0..n)
    expr::Program program;              // outputs r^(0..n) then y_r^(0..n)
};

struct GainConfig {
    VectorXd c;
    VectorXd kappa;
    VectorXd g;  // g(0) is accepted but inert
    double sigma = 1.0;
    double gamma = 1.0;
    double nu = 0.0;
    VectorXd k_nominal;

    double c_min() const { return c.minCoeff(); }
    double kappa_min() const { return kappa.minCoeff(); }
    /// min over i >= 2; +inf when n == 1.
    double g_min() const;
};

/// Raw key/value content of a scenario file, before validation.
struct ScenarioSource {
    std::string name;
    int n = 0;
    int p = 0;
    std::vector<std::vector<std::string>> phi;
    std::vector<double> theta;
    std::string r = "0";
    std::string yr = "0";
    std::vector<double> c, kappa, g, k_nominal;
    double sigma = 1.0;
    double gamma = 1.0;
    double nu = 0.0;
    std::vector<double> x0;
    std::vector<double> thetahat0;
    std::string identifier = "h-passive";
    std::optional<bool> gated;
    bool filter_on = true;
    bool safety_checks = true;
    bool events = true;
    double t_end = 30.0;
    double dt = 1e-3;
    int stride = 1;
    double node_budget = 1e6;
};

struct Scenario {
    ScenarioSource source;
    std::string name;
    SymbolLayout symbols;
    Plant plant;
    Reference reference;
    GainConfig gains;
    VectorXd x0;
    VectorXd thetahat0;
    Scheme identifier = Scheme::HPassive;
    bool gated = false;
    bool filter_on = true;
    bool safety_checks = true;
    bool events = true;  // locate override switches inside a step
    double t_end = 30.0;
    double dt = 1e-3;
    int stride = 1;
    std::size_t node_budget = 1'000'000;

    int n() const { return plant.n; }
    int p() const { return plant.p; }

    /// Canonical text form; the fingerprint hashes this.
    std::string canonical() const;
    std::string fingerprint() const;
};

ScenarioSource parse_scenario_text(const std::string& text);
std::string format_scenario(const ScenarioSource& src);

/// Validate and build. Throws ValidationError / expr::SyntaxError / expr::UnknownSymbol.
Scenario build_scenario(const ScenarioSource& src);

/// Throws std::filesystem::filesystem_error if unreadable, ParseError, ValidationError.
Scenario load_scenario(const std::filesystem::path& path);
ScenarioSource read_scenario_source(const std::filesystem::path& path);

/// r^(k)(t) for 0 <= k <= n.
double eval_reference(const Reference& ref, const SymbolLayout& symbols, double t, int order);
double eval_nominal_target(const Reference& ref, const SymbolLayout& symbols, double t, int order);

/// r^(0..n)(t) and y_r^(0..n)(t) written into an environment vector.
void fill_time_slots(const Reference& ref, const SymbolLayout& symbols, double t,
                     std::span<double> env, std::vector<double>& scratch);

}  // namespace novctl
