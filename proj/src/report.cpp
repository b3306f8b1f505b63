#include "novctl/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace novctl {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", v);
}

std::string trace_csv_header(int n, int p) {
    std::string h = "t";
    for (int i = 1; i <= n; ++i) h += fmt::format(",x{}", i);
    for (int j = 1; j <= p; ++j) h += fmt::format(",thetahat{}", j);
    for (int i = 1; i <= n; ++i) h += fmt::format(",h{}", i);
    h += ",u0,ubar,u,active,eps_norm,V";
    return h;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
    os << trace_csv_header(trace.n, trace.p) << '\n';
    std::string line;
    for (const Sample& s : trace.samples) {
        line = format_double(s.t);
        for (Eigen::Index i = 0; i < s.x.size(); ++i) (line += ',') += format_double(s.x(i));
        for (Eigen::Index j = 0; j < s.thetahat.size(); ++j) (line += ',') += format_double(s.thetahat(j));
        for (Eigen::Index i = 0; i < s.h.size(); ++i) (line += ',') += format_double(s.h(i));
        (line += ',') += format_double(s.u0);
        (line += ',') += format_double(s.ubar);
        (line += ',') += format_double(s.u);
        line += s.active ? ",1" : ",0";
        (line += ',') += format_double(s.eps_norm);
        (line += ',') += format_double(s.V);
        os << line << '\n';
    }
}

namespace {

// JSON has no inf/nan; encode them as strings.
nlohmann::ordered_json num(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

}  // namespace

nlohmann::ordered_json metrics_json(const Scenario& scenario, const RunResult& result) {
    const Metrics& m = result.metrics;
    nlohmann::ordered_json j;
    j["schema_version"] = kMetricsSchemaVersion;
    j["scenario"] = scenario.name;
    j["fingerprint"] = scenario.fingerprint();
    j["identifier"] = to_string(scenario.identifier);
    j["gated"] = scenario.gated;
    j["filter_on"] = scenario.filter_on;
    j["dt"] = scenario.dt;
    j["t_end"] = scenario.t_end;
    j["completed"] = result.ok();
    j["min_h1"] = num(m.min_h1);
    j["t_min_h1"] = num(m.t_min_h1);
    j["violation"] = num(m.violation);
    j["h1_star"] = num(m.h1_star);
    j["bound_respected"] = m.bound_respected;
    j["envelope_respected"] = m.envelope_respected;
    j["theta_err0"] = num(m.theta_err0);
    j["theta_err_final"] = num(m.theta_err_final);
    j["theta_err_sup"] = num(m.theta_err_sup);
    j["thetadot_sup"] = num(m.thetadot_sup);
    j["thetadot_l2"] = num(m.thetadot_l2);
    j["h1_final"] = num(m.h1_final);
    j["settled"] = m.settled;
    j["max_V_increase"] = num(m.max_V_increase);
    j["swap_residual_sup"] = num(m.swap_residual_sup);
    j["active_fraction"] = num(m.active_fraction);
    j["switches"] = m.switches;
    j["steps"] = m.steps;
    if (result.failure) {
        j["failure"] = {{"component", result.failure->component},
                        {"t", num(result.failure->t)},
                        {"message", result.failure->message}};
    } else {
        j["failure"] = nullptr;
    }
    return j;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            default: o += c;
        }
    }
    return o;
}

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : spec.series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    auto px = [&](double x) { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); };
    auto py = [&](double y) { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); };

    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kW, kH, kW, kH);
    out += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kW / 2,
                       esc(spec.title));
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", kL, kT,
                       kW - kL - kR, kH - kT - kB);

    const double xs = nice_step(x1 - x0);
    for (double v = std::ceil(x0 / xs) * xs; v <= x1 + 1e-9 * xs; v += xs) {
        out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1}\" x2=\"{0:.2f}\" y2=\"{2}\" stroke=\"#ddd\"/>"
                           "<text x=\"{0:.2f}\" y=\"{3}\" text-anchor=\"middle\">{4:g}</text>\n",
                           px(v), kT, kH - kB, kH - kB + 16, v);
    }
    const double ys = nice_step(y1 - y0);
    for (double v = std::ceil(y0 / ys) * ys; v <= y1 + 1e-9 * ys; v += ys) {
        out += fmt::format("<line x1=\"{1}\" y1=\"{0:.2f}\" x2=\"{2}\" y2=\"{0:.2f}\" stroke=\"#ddd\"/>"
                           "<text x=\"{3}\" y=\"{0:.2f}\" text-anchor=\"end\" dominant-baseline=\"middle\">{4:.4g}</text>\n",
                           py(v), kL, kW - kR, kL - 6, std::abs(v) < 1e-12 * ys ? 0.0 : v);
    }
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kL + (kW - kL - kR) / 2,
                       kH - 12, esc(spec.xlabel));
    out += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                       kT + (kH - kT - kB) / 2, esc(spec.ylabel));

    std::size_t ci = 0;
    for (const auto& s : spec.series) {
        const char* color = kColors[ci % std::size(kColors)];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
        }
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n", color,
                           s.dashed ? " stroke-dasharray=\"6 4\"" : "", pts);
        if (spec.markers) {
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.y[i])) continue;
                out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[i]),
                                   py(s.y[i]), color);
            }
        }
        const double ly = kT + 14 + 16 * static_cast<double>(ci);
        out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"{4}/>"
                           "<text x=\"{5}\" y=\"{1}\" dominant-baseline=\"middle\">{6}</text>\n",
                           kW - kR - 150, ly, kW - kR - 125, color, s.dashed ? " stroke-dasharray=\"6 4\"" : "",
                           kW - kR - 120, esc(s.label));
        ++ci;
    }
    out += "</svg>\n";
    return out;
}

std::vector<std::filesystem::path> write_run_plots(const std::filesystem::path& dir, const Scenario& scenario,
                                                   const RunResult& result) {
    const auto& samples = result.trace.samples;
    std::vector<double> t, y, r, h1, u0, ubar, u, neg_star;
    std::vector<std::vector<double>> th(static_cast<std::size_t>(scenario.p()));
    for (const Sample& s : samples) {
        t.push_back(s.t);
        y.push_back(s.x(0));
        r.push_back(s.x(0) - s.h(0));
        h1.push_back(s.h(0));
        u0.push_back(s.u0);
        ubar.push_back(s.ubar);
        u.push_back(s.u);
        neg_star.push_back(-result.metrics.h1_star);
        for (int j = 0; j < scenario.p(); ++j) th[static_cast<std::size_t>(j)].push_back(s.thetahat(j));
    }

    std::vector<std::pair<std::string, PlotSpec>> figs;
    figs.push_back({"fig_y.svg", {"output and boundary", "t [s]", "", {{"y", t, y}, {"r", t, r, true}}}});
    PlotSpec theta{"parameter estimate", "t [s]", "", {}};
    for (int j = 0; j < scenario.p(); ++j) {
        const auto J = static_cast<std::size_t>(j);
        theta.series.push_back({fmt::format("thetahat{}", j + 1), t, th[J]});
        theta.series.push_back({fmt::format("theta{}", j + 1), t,
                                std::vector<double>(t.size(), scenario.plant.theta_true(j)), true});
    }
    figs.push_back({"fig_theta.svg", theta});
    figs.push_back({"fig_u.svg", {"control inputs", "t [s]", "", {{"u0", t, u0, true}, {"ubar", t, ubar}, {"u", t, u}}}});
    PlotSpec h1spec{"h1 and violation bound", "t [s]", "", {{"h1", t, h1}}};
    if (std::isfinite(result.metrics.h1_star)) h1spec.series.push_back({"-h1*", t, neg_star, true});
    figs.push_back({"fig_h1.svg", h1spec});

    std::vector<std::filesystem::path> written;
    for (const auto& [name, spec] : figs) {
        const auto path = dir / name;
        std::ofstream f(path);
        if (!f) throw std::filesystem::filesystem_error("cannot write plot", path, std::make_error_code(std::errc::io_error));
        f << render_svg(spec);
        written.push_back(path);
    }
    return written;
}

}  // namespace novctl
