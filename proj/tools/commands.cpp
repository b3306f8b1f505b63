#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "novctl/controller.hpp"
#include "novctl/lyap.hpp"
#include "novctl/report.hpp"
#include "novctl/scenario.hpp"
#include "novctl/sim.hpp"

namespace novctl::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void diag(std::ostream& err, const std::string& kind, const std::string& message, json extra = json::object()) {
    json j{{"level", "error"}, {"kind", kind}, {"message", message}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    err << j.dump() << '\n';
}

void apply(ScenarioSource& src, const Overrides& o) {
    if (o.stride) src.stride = *o.stride;
    if (o.dt) src.dt = *o.dt;
    if (o.t_end) src.t_end = *o.t_end;
}

// Runs `body` and maps library exceptions onto exit codes with JSON-lines diagnostics.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const fs::filesystem_error& e) {
        diag(err, "io", e.what(), {{"path", e.path1().string()}});
        return kIo;
    } catch (const ValidationError& e) {
        diag(err, "validation", e.what(), {{"invariant", e.invariant()}});
        return kValidation;
    } catch (const ParseError& e) {
        diag(err, "parse", e.what());
        return kValidation;
    } catch (const expr::SyntaxError& e) {
        diag(err, "syntax", e.what(), {{"position", e.position()}, {"expected", e.expected()}});
        return kValidation;
    } catch (const expr::UnknownSymbol& e) {
        diag(err, "unknown_symbol", e.what(), {{"name", e.name()}});
        return kValidation;
    } catch (const CompileError& e) {
        diag(err, "compile", e.what());
        return kValidation;
    } catch (const NotPositiveDefinite& e) {
        diag(err, "lyapunov", e.what());
        return kValidation;
    } catch (const NonFinite& e) {
        diag(err, "numeric", e.what(), {{"component", e.component()}, {"t", e.time()}});
        return kNumeric;
    }
}

Scenario finalize(ScenarioSource src, bool auto_dt) {
    Scenario sc = build_scenario(src);
    if (!auto_dt) return sc;
    const double dt = stable_dt(Simulator(sc), sc.dt);
    if (dt >= sc.dt) return sc;
    src.dt = dt;
    return build_scenario(src);
}

Scenario load_with(const fs::path& path, const Overrides& o) {
    ScenarioSource src = read_scenario_source(path);
    apply(src, o);
    return finalize(std::move(src), o.auto_dt);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw fs::filesystem_error("cannot create output directory", dir, ec);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw fs::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
    f << content;
    if (!f) throw fs::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

}  // namespace

int cmd_validate(const fs::path& scenario, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Scenario sc = load_scenario(scenario);
        const CiFloorReport rep = ci_floor(sc);
        out << "level,c,c_floor,h0,degenerate,pass\n";
        for (int i = 0; i < sc.n(); ++i) {
            const auto I = static_cast<std::size_t>(i);
            out << fmt::format("{},{},{:.6g},{:.6g},{},{}\n", i + 1, sc.gains.c(i), rep.floor(i), rep.h0(i),
                               rep.degenerate[I] ? "yes" : "no", rep.pass[I] ? "pass" : "FAIL");
        }
        if (!rep.ok) {
            std::string levels;
            for (int v : rep.violations) levels += (levels.empty() ? "" : ",") + std::to_string(v);
            diag(err, "validation", "gain rule c_i >= max(c_floor_i, 0) violated at level(s) " + levels,
                 {{"invariant", "ci_floor"}, {"levels", rep.violations}});
            return static_cast<int>(kValidation);
        }
        out << "valid " << sc.fingerprint() << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Scenario sc = load_with(opts.scenario, opts.overrides);
        ensure_dir(opts.out_dir);
        const RunResult res = run(sc);
        write_file(opts.out_dir / "metrics.json", metrics_json(sc, res).dump(2) + "\n");
        if (opts.csv) {
            std::ofstream f(opts.out_dir / "trace.csv", std::ios::binary);
            if (!f) throw fs::filesystem_error("cannot open for writing", opts.out_dir / "trace.csv",
                                               std::make_error_code(std::errc::io_error));
            write_trace_csv(f, res.trace);
        }
        if (opts.plot) write_run_plots(opts.out_dir, sc, res);
        const Metrics& m = res.metrics;
        out << fmt::format("{} min_h1={:.6g} h1_star={:.6g} bound={} settled={} theta_err_final={:.3g}\n", sc.name,
                           m.min_h1, m.h1_star, m.bound_respected ? "ok" : "VIOLATED", m.settled,
                           m.theta_err_final);
        if (res.failure) {
            diag(err, "numeric", res.failure->message,
                 {{"component", res.failure->component}, {"t", res.failure->t}});
            return static_cast<int>(kNumeric);
        }
        return static_cast<int>(kOk);
    });
}

namespace {

const std::vector<std::string> kAxes{"cbar", "kappabar", "gbar", "sigma", "gamma", "thetahat0"};

void set_axis(ScenarioSource& src, const std::string& axis, double v) {
    auto fill = [&](std::vector<double>& vec) { std::fill(vec.begin(), vec.end(), v); };
    if (axis == "cbar") fill(src.c);
    else if (axis == "kappabar") fill(src.kappa);
    else if (axis == "gbar") fill(src.g);
    else if (axis == "sigma") src.sigma = v;
    else if (axis == "gamma") src.gamma = v;
    else if (axis == "thetahat0") fill(src.thetahat0);
}

struct SweepRow {
    std::size_t index = 0;
    double value = 0.0;
    std::string status = "ok";
    Metrics metrics;
    json metrics_json;
};

}  // namespace

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
    if (std::find(kAxes.begin(), kAxes.end(), opts.axis) == kAxes.end()) {
        diag(err, "validation", "unknown sweep axis '" + opts.axis + "'", {{"invariant", "axis"}});
        return kValidation;
    }
    if (opts.values.size() < 2) {
        diag(err, "validation", "a sweep needs at least two values", {{"invariant", "sweep_length"}});
        return kValidation;
    }
    if (opts.axis != "thetahat0") {
        for (double v : opts.values) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                diag(err, "validation", fmt::format("{} value {} must be > 0", opts.axis, v),
                     {{"invariant", "positivity"}});
                return kValidation;
            }
        }
    }
    return guarded(err, [&] {
        ScenarioSource base = read_scenario_source(opts.scenario);
        apply(base, opts.overrides);
        build_scenario(base);  // fail fast on an invalid base
        ensure_dir(opts.out_dir);

        const std::size_t total = opts.values.size();
        std::atomic<std::size_t> next{0};
        std::mutex mu;
        std::condition_variable cv;
        std::deque<SweepRow> ready;

        auto worker = [&] {
            for (std::size_t i = next++; i < total; i = next++) {
                SweepRow row;
                row.index = i;
                row.value = opts.values[i];
                try {
                    ScenarioSource src = base;
                    set_axis(src, opts.axis, row.value);
                    src.name = fmt::format("{}_{}_{}", base.name, opts.axis, i);
                    const Scenario sc = finalize(std::move(src), opts.overrides.auto_dt);
                    const RunResult res = run(sc);
                    row.metrics = res.metrics;
                    row.metrics_json = metrics_json(sc, res);
                    if (res.failure) row.status = "numeric:" + res.failure->component;
                } catch (const std::exception& e) {
                    row.status = std::string("error:") + e.what();
                }
                {
                    std::lock_guard lk(mu);
                    ready.push_back(std::move(row));
                }
                cv.notify_one();
            }
        };

        unsigned jobs = opts.jobs ? opts.jobs : std::max(1u, std::thread::hardware_concurrency());
        jobs = std::min<unsigned>(jobs, static_cast<unsigned>(total));
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);

        // Single collector: the only writer of output files.
        std::vector<SweepRow> rows(total);
        for (std::size_t got = 0; got < total; ++got) {
            std::unique_lock lk(mu);
            cv.wait(lk, [&] { return !ready.empty(); });
            SweepRow row = std::move(ready.front());
            ready.pop_front();
            lk.unlock();
            if (!row.metrics_json.is_null()) {
                write_file(opts.out_dir / fmt::format("run_{:03d}.json", row.index), row.metrics_json.dump(2) + "\n");
            }
            rows[row.index] = std::move(row);
        }
        pool.clear();

        std::string csv = opts.axis + ",violation,min_h1,h1_star,bound_respected,settled,status\n";
        Series viol{"violation", {}, {}};
        Series star{"h1*", {}, {}, true};
        bool all_ok = true;
        for (const SweepRow& r : rows) {
            const bool ok = r.status == "ok";
            all_ok = all_ok && ok;
            csv += fmt::format("{},{},{},{},{},{},{}\n", format_double(r.value), format_double(r.metrics.violation),
                               format_double(r.metrics.min_h1), format_double(r.metrics.h1_star),
                               r.metrics.bound_respected, r.metrics.settled, ok ? "ok" : r.status);
            if (ok) {
                viol.x.push_back(r.value);
                viol.y.push_back(r.metrics.violation);
                star.x.push_back(r.value);
                star.y.push_back(r.metrics.h1_star);
            }
        }
        write_file(opts.out_dir / "summary.csv", csv);
        PlotSpec spec{"safety violation vs " + opts.axis, opts.axis, "violation", {viol}, true};
        if (std::all_of(star.y.begin(), star.y.end(), [](double v) { return std::isfinite(v); })) {
            spec.series.push_back(star);
        }
        write_file(opts.out_dir / fmt::format("sweep_{}.svg", opts.axis), render_svg(spec));
        out << csv;
        if (!all_ok) {
            diag(err, "sweep", "one or more sweep runs failed");
            return static_cast<int>(kNumeric);
        }
        return static_cast<int>(kOk);
    });
}

int cmd_bounds(const fs::path& scenario, const Overrides& overrides, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Scenario sc = load_with(scenario, overrides);
        const RunResult res = run(sc);
        const Metrics& m = res.metrics;
        const BoundGains gains = BoundGains::from(sc.gains);
        auto bound = [&](BoundMode mode, const BoundInputs& in) -> std::string {
            try {
                return format_double(violation_bound(gains, mode, in));
            } catch (const std::domain_error&) {
                return "inf";  // swapping bound with nu = 0
            }
        };
        out << "mode,h1_star,theta_err_input,thetadot_input\n";
        out << fmt::format("linf,{},{},{}\n", bound(BoundMode::Linf, {m.theta_err_sup, m.thetadot_sup, 0.0}),
                           format_double(m.theta_err_sup), format_double(m.thetadot_sup));
        out << fmt::format("l2,{},{},{}\n", bound(BoundMode::L2, {m.theta_err_sup, m.thetadot_l2, 0.0}),
                           format_double(m.theta_err_sup), format_double(m.thetadot_l2));
        out << fmt::format("passive,{},{},\n", bound(BoundMode::HPassive, {0.0, 0.0, m.theta_err0}),
                           format_double(m.theta_err0));
        out << fmt::format("swapping,{},{},\n", bound(BoundMode::HSwapping, {0.0, 0.0, m.theta_err0}),
                           format_double(m.theta_err0));
        out << fmt::format("# observed min_h1 = {}\n", format_double(m.min_h1));
        if (res.failure) {
            diag(err, "numeric", res.failure->message, {{"component", res.failure->component}});
            return static_cast<int>(kNumeric);
        }
        return static_cast<int>(kOk);
    });
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive nonovershooting override control: simulate, validate, sweep, bound."};
    app.require_subcommand(1);

    std::string path;
    Overrides ov;
    auto add_overrides = [&](CLI::App* sub) {
        sub->add_option("--stride", ov.stride, "Trace sampling stride")->check(CLI::PositiveNumber);
        sub->add_option("--dt", ov.dt, "Integration step [s]")->check(CLI::PositiveNumber);
        sub->add_option("--t-end", ov.t_end, "Horizon [s]")->check(CLI::PositiveNumber);
        sub->add_flag("--auto-dt", ov.auto_dt, "Reduce dt to the stiffness estimate at t = 0");
    };

    auto* validate = app.add_subcommand("validate", "Load a scenario and check the gain floor");
    validate->add_option("scenario", path)->required();

    RunOptions ropts;
    auto* runc = app.add_subcommand("run", "Simulate one scenario");
    runc->add_option("scenario", path)->required();
    runc->add_option("--out", ropts.out_dir, "Output directory");
    runc->add_flag("--csv", ropts.csv, "Write trace.csv");
    runc->add_flag("--plot", ropts.plot, "Write SVG figures");
    add_overrides(runc);

    SweepOptions sopts;
    auto* sweep = app.add_subcommand("sweep", "Run one scenario across an axis of values");
    sweep->add_option("scenario", path)->required();
    sweep->add_option("--axis", sopts.axis, "cbar|kappabar|gbar|sigma|gamma|thetahat0")->required();
    sweep->add_option("--values", sopts.values, "Comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", sopts.out_dir, "Output directory");
    sweep->add_option("--jobs", sopts.jobs, "Worker threads (0 = all cores)");
    add_overrides(sweep);

    auto* bounds = app.add_subcommand("bounds", "Print the violation bounds for a scenario");
    bounds->add_option("scenario", path)->required();
    add_overrides(bounds);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        diag(err, "usage", e.what());
        return kValidation;
    }

    if (*validate) return cmd_validate(path, out, err);
    if (*runc) {
        ropts.scenario = path;
        ropts.overrides = ov;
        return cmd_run(ropts, out, err);
    }
    if (*sweep) {
        sopts.scenario = path;
        sopts.overrides = ov;
        return cmd_sweep(sopts, out, err);
    }
    if (*bounds) return cmd_bounds(path, ov, out, err);
    return kValidation;
}

}  // namespace novctl::cli
