#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "novctl/scenario.hpp"
#include "novctl/sim.hpp"

namespace novctl {

inline constexpr int kMetricsSchemaVersion = 1;

/// t, x1..xn, thetahat1..thetahatp, h1..hn, u0, ubar, u, active, eps_norm, V
std::string trace_csv_header(int n, int p);
void write_trace_csv(std::ostream& os, const Trace& trace);

nlohmann::ordered_json metrics_json(const Scenario& scenario, const RunResult& result);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool dashed = false;
};

struct PlotSpec {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<Series> series;
    bool markers = false;
};

std::string render_svg(const PlotSpec& spec);

/// fig_y.svg, fig_theta.svg, fig_u.svg, fig_h1.svg. Returns the written paths.
std::vector<std::filesystem::path> write_run_plots(const std::filesystem::path& dir, const Scenario& scenario,
                                                   const RunResult& result);

/// 17 significant digits.
std::string format_double(double v);

}  // namespace novctl
