#include <cmath>
#include <filesystem>

#include <doctest.h>
#include <fmt/format.h>

#include "fixtures.hpp"
#include "gen.hpp"
#include "novctl/scenario.hpp"

using namespace novctl;
using novctl::testing::ex1;
using novctl::testing::ex1_text;

namespace {

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

std::string invariant_of(const std::string& text) {
    try {
        build_scenario(parse_scenario_text(text));
    } catch (const ValidationError& e) {
        return e.invariant();
    }
    return "";
}

}  // namespace

TEST_SUITE("plantmodel") {

TEST_CASE("load EX1") {
    const Scenario sc = ex1();
    CHECK(sc.n() == 2);
    CHECK(sc.p() == 1);
    CHECK(sc.plant.theta_true(0) == 10.0);
    CHECK(sc.x0(0) == 1.6);
    CHECK(sc.x0(1) == 84.5);
    CHECK(sc.thetahat0(0) == 9.5);
    CHECK(sc.gains.c_min() == 2.5);
    CHECK(sc.gains.kappa_min() == 0.05);
    CHECK(sc.gains.g_min() == 0.3);
    CHECK(sc.identifier == Scheme::HPassive);
    CHECK(sc.gated);  // h-passive with the filter on
    CHECK(sc.filter_on);
    CHECK(sc.dt == 1e-3);
    CHECK(sc.t_end == 30.0);
    CHECK(sc.gains.k_nominal == Eigen::Vector2d(2.0, 2.0));
}

TEST_CASE("shipped scenarios load") {
    for (const char* name : {"ex1_hpassive", "ex1_hswapping", "ex2_xpassive", "ex2_xswapping", "ex1_fixed_boundary",
                             "ex1_poor_init", "ex2_fixed_boundary", "ex2_poor_init"}) {
        CAPTURE(name);
        CHECK_NOTHROW(novctl::testing::load(name));
    }
}

TEST_CASE("validation: named invariants") {
    CHECK(invariant_of(replace(ex1_text(), "x0 = [1.6, 84.5]", "x0 = [0.4, 84.5]")) == "h1_nonneg");
    CHECK(invariant_of(replace(ex1_text(), "kappa = [0.05, 0.05]", "kappa = [0.05, 0]")) == "positivity");
    CHECK(invariant_of(replace(ex1_text(), "c = [2.5, 2.5]", "c = [0, 2.5]")) == "positivity");
    CHECK(invariant_of(replace(ex1_text(), "gamma = 2", "gamma = -1")) == "positivity");
    CHECK(invariant_of(replace(ex1_text(), "c = [2.5, 2.5]", "c = [2.5]")) == "dimension");
    CHECK(invariant_of(replace(ex1_text(), "thetahat0 = [9.5]", "thetahat0 = [9.5, 1]")) == "dimension");
    CHECK(invariant_of(replace(ex1_text(), "r = \"sin(t/2)+0.5\"", "r = \"x1 + t\"")) == "reference");
    CHECK(invariant_of(replace(ex1_text(), "identifier = \"h-passive\"", "identifier = \"rls\"")) == "identifier");
    CHECK(invariant_of(replace(ex1_text(), "phi1 = [\"-8\"]", "phi1 = [\"-8 +\"]")) == "expression");
    // Safety checks off admits an unsafe start.
    CHECK(invariant_of(replace(replace(ex1_text(), "x0 = [1.6, 84.5]", "x0 = [0.4, 84.5]"), "[sim]\n",
                               "[sim]\nsafety_checks = false\n")) == "");
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_scenario_text("[plant]\nn = 2\nn = 3\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario_text(ex1_text() + "bogus = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario_text("[nowhere]\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario_text(replace(ex1_text(), "gamma = 2\n", "")), ParseError);
    CHECK_THROWS_AS(parse_scenario_text(replace(ex1_text(), "n = 2", "n = [2")), ParseError);
    CHECK_THROWS_AS(read_scenario_source("/nonexistent/scenario.ini"), std::filesystem::filesystem_error);
}

TEST_CASE("property: strict-feedback structure is enforced") {
    // phi_i may use x1..xi only; any later state is rejected.
    for (int trial = 0; trial < 60; ++trial) {
        const int n = novctl::testing::uniform_int(2, 5);
        const int row = novctl::testing::uniform_int(1, n - 1);
        const int bad = novctl::testing::uniform_int(row + 1, n);
        std::string text = fmt::format("[plant]\nn = {}\np = 1\ntheta = [1]\n", n);
        for (int i = 1; i <= n; ++i) {
            const std::string e = i == row ? fmt::format("x{}*x{}", i, bad) : fmt::format("x{}", i);
            text += fmt::format("phi{} = [\"{}\"]\n", i, e);
        }
        std::string ones, init;
        for (int i = 0; i < n; ++i) {
            ones += i ? ", 1" : "1";
            init += i ? ", 0" : "1";
        }
        text += "[reference]\nr = \"0\"\n[gains]\nc = [" + ones + "]\nkappa = [" + ones + "]\ng = [" + ones +
                "]\nsigma = 1\ngamma = 1\n[init]\nx0 = [" + init + "]\nthetahat0 = [0]\n";
        CAPTURE(text);
        CHECK(invariant_of(text) == "strict_feedback");
        // The same file with row-local dependencies is accepted.
        std::string ok = text;
        const auto pos = ok.find(fmt::format("x{}*x{}", row, bad));
        ok.replace(pos, fmt::format("x{}*x{}", row, bad).size(), fmt::format("x{}*x{}", row, row));
        CHECK(invariant_of(ok) == "");
    }
}

TEST_CASE("eval_reference: derivative chain") {
    const Scenario sc = ex1();
    CHECK(eval_reference(sc.reference, sc.symbols, 0.0, 0) == 0.5);
    CHECK(eval_reference(sc.reference, sc.symbols, 0.0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(eval_reference(sc.reference, sc.symbols, 0.0, 2) == 0.0);
    CHECK_THROWS_AS(eval_reference(sc.reference, sc.symbols, 0.0, 3), std::out_of_range);

    const Scenario nl = novctl::testing::nonlinear();
    for (int trial = 0; trial < 100; ++trial) {
        const double t = novctl::testing::uniform(0.0, 20.0);
        for (int k = 1; k <= nl.n(); ++k) {
            const double h = 1e-5;
            const double fd = (eval_reference(nl.reference, nl.symbols, t + h, k - 1) -
                               eval_reference(nl.reference, nl.symbols, t - h, k - 1)) / (2 * h);
            CHECK(std::abs(eval_reference(nl.reference, nl.symbols, t, k) - fd) <= 1e-6);
            const double fdy = (eval_nominal_target(nl.reference, nl.symbols, t + h, k - 1) -
                                eval_nominal_target(nl.reference, nl.symbols, t - h, k - 1)) / (2 * h);
            CHECK(std::abs(eval_nominal_target(nl.reference, nl.symbols, t, k) - fdy) <= 1e-6);
        }
    }
}

TEST_CASE("derivs[k] is the k-fold derivative of r") {
    const Scenario sc = novctl::testing::nonlinear();
    expr::Expr d = sc.reference.r_expr;
    for (int k = 1; k <= sc.n(); ++k) {
        d = expr::diff(d, sc.symbols.t());
        CHECK(expr::structurally_equal(d, sc.reference.derivs[static_cast<std::size_t>(k)]));
    }
}

TEST_CASE("format/parse round trip and fingerprint") {
    const Scenario a = ex1();
    const ScenarioSource again = parse_scenario_text(format_scenario(a.source));
    const Scenario b = build_scenario(again);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint().size() == 16);
    const Scenario c = build_scenario(parse_scenario_text(replace(ex1_text(), "gamma = 2", "gamma = 3")));
    CHECK(c.fingerprint() != a.fingerprint());
}

}  // TEST_SUITE
