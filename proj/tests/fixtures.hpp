#pragma once

#include <string>

#include "novctl/scenario.hpp"

namespace novctl::testing {

inline std::string scenario_path(const std::string& name) {
    return std::string(NOVCTL_SCENARIO_DIR) + "/" + name + ".ini";
}

inline Scenario load(const std::string& name) { return load_scenario(scenario_path(name)); }

inline ScenarioSource source(const std::string& name) { return read_scenario_source(scenario_path(name)); }

/// EX1 scenario text (n = 2, p = 1, constant regressors).
inline std::string ex1_text() {
    return R"ini(name = "ex1"

[plant]
n = 2
p = 1
phi1 = ["-8"]
phi2 = ["-3"]
theta = [10]

[reference]
r = "sin(t/2)+0.5"
yr = "0"

[gains]
c = [2.5, 2.5]
kappa = [0.05, 0.05]
g = [0.3, 0.3]
sigma = 1
gamma = 2

[init]
x0 = [1.6, 84.5]
thetahat0 = [9.5]

[sim]
identifier = "h-passive"
)ini";
}

inline Scenario ex1() { return build_scenario(parse_scenario_text(ex1_text())); }

/// A nonlinear n = 3, p = 2 plant for derivative checks.
inline std::string nonlinear_text() {
    return R"ini([plant]
n = 3
p = 2
phi1 = ["x1^2", "sin(x1)"]
phi2 = ["x1*x2", "tanh(x2)"]
phi3 = ["cos(x1 + x3)", "x2*x3/(2 + x1^2)"]
theta = [0.5, -1]

[reference]
r = "0.3*sin(t) + 0.1*cos(2*t)"
yr = "0.2*sin(t)"

[gains]
c = [1.5, 2, 2.5]
kappa = [0.1, 0.1, 0.1]
g = [0.2, 0.2, 0.2]
sigma = 0.5
gamma = 1

[init]
x0 = [0.5, 0.1, -0.2]
thetahat0 = [0.3, -0.8]

[sim]
identifier = "x-passive"
safety_checks = false
)ini";
}

inline Scenario nonlinear() { return build_scenario(parse_scenario_text(nonlinear_text())); }

}  // namespace novctl::testing
