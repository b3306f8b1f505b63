#include "novctl/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace novctl {

// ---------------------------------------------------------------------------
// Small helpers

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::HPassive: return "h-passive";
        case Scheme::HSwapping: return "h-swapping";
        case Scheme::XPassive: return "x-passive";
        case Scheme::XSwapping: return "x-swapping";
    }
    return "?";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "h-passive") return Scheme::HPassive;
    if (s == "h-swapping") return Scheme::HSwapping;
    if (s == "x-passive") return Scheme::XPassive;
    if (s == "x-swapping") return Scheme::XSwapping;
    throw ValidationError("identifier", "unknown identifier scheme '" + s + "'");
}

ValidationError::ValidationError(std::string invariant, const std::string& detail)
    : std::runtime_error(invariant + ": " + detail), invariant_(std::move(invariant)) {}

SymbolLayout::SymbolLayout(int n_, int p_) : n(n_), p(p_) {
    for (int i = 1; i <= n; ++i) table.add("x" + std::to_string(i));
    for (int j = 1; j <= p; ++j) table.add("thetahat" + std::to_string(j));
    for (int k = 0; k <= n; ++k) table.add("r" + std::to_string(k));
    table.add("t");
    for (int k = 0; k <= n; ++k) table.add("yr" + std::to_string(k));
}

double GainConfig::g_min() const {
    if (g.size() < 2) return std::numeric_limits<double>::infinity();
    return g.tail(g.size() - 1).minCoeff();
}

// ---------------------------------------------------------------------------
// Scenario file reader
//
// INI-style: "[section]" headers, "key = value" lines, '#' comments. Values
// are numbers, true/false, "quoted strings", or [comma, separated, lists].

namespace {

struct Value {
    enum class Kind { Number, Bool, String, List } kind = Kind::Number;
    double number = 0.0;
    bool boolean = false;
    std::string text;
    std::vector<Value> items;
};

class ValueReader {
public:
    ValueReader(std::string_view s, int line) : s_(s), line_(line) {}

    Value read() {
        Value v = value();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(fmt::format("line {}: {} in value '{}'", line_, what, s_));
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    Value value() {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        Value v;
        const char c = s_[pos_];
        if (c == '"') {
            const auto close = s_.find('"', pos_ + 1);
            if (close == std::string_view::npos) fail("unterminated string");
            v.kind = Value::Kind::String;
            v.text = std::string(s_.substr(pos_ + 1, close - pos_ - 1));
            pos_ = close + 1;
            return v;
        }
        if (c == '[') {
            ++pos_;
            v.kind = Value::Kind::List;
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                skip_ws();
                if (pos_ >= s_.size()) fail("unterminated list");
                if (s_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (s_[pos_] == ']') {
                    ++pos_;
                    return v;
                }
                fail("expected ',' or ']'");
            }
        }
        std::size_t end = pos_;
        while (end < s_.size() && s_[end] != ',' && s_[end] != ']' &&
               !std::isspace(static_cast<unsigned char>(s_[end]))) {
            ++end;
        }
        const std::string word(s_.substr(pos_, end - pos_));
        pos_ = end;
        if (word == "true" || word == "false") {
            v.kind = Value::Kind::Bool;
            v.boolean = word == "true";
            return v;
        }
        char* stop = nullptr;
        v.number = std::strtod(word.c_str(), &stop);
        if (word.empty() || *stop != '\0') fail("not a number: '" + word + "'");
        return v;
    }

    std::string_view s_;
    int line_;
    std::size_t pos_ = 0;
};

std::string strip(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

double as_number(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::Number) throw ParseError(key + ": expected a number");
    return v.number;
}

int as_int(const Value& v, const std::string& key) {
    const double d = as_number(v, key);
    if (d != std::floor(d) || std::abs(d) > 1e9) throw ParseError(key + ": expected an integer");
    return static_cast<int>(d);
}

bool as_bool(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::Bool) throw ParseError(key + ": expected true or false");
    return v.boolean;
}

std::string as_string(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::String) throw ParseError(key + ": expected a quoted string");
    return v.text;
}

std::vector<double> as_numbers(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::List) throw ParseError(key + ": expected a list of numbers");
    std::vector<double> out;
    for (const auto& item : v.items) out.push_back(as_number(item, key));
    return out;
}

std::vector<std::string> as_strings(const Value& v, const std::string& key) {
    if (v.kind != Value::Kind::List) throw ParseError(key + ": expected a list of strings");
    std::vector<std::string> out;
    for (const auto& item : v.items) out.push_back(as_string(item, key));
    return out;
}

std::string fmt_num(double v) { return fmt::format("{}", v); }

std::string fmt_list(const std::vector<double>& v) {
    std::vector<std::string> parts;
    for (double d : v) parts.push_back(fmt_num(d));
    return "[" + fmt::format("{}", fmt::join(parts, ", ")) + "]";
}

std::string fmt_strings(const std::vector<std::string>& v) {
    std::vector<std::string> parts;
    for (const auto& s : v) parts.push_back("\"" + s + "\"");
    return "[" + fmt::format("{}", fmt::join(parts, ", ")) + "]";
}

VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ScenarioSource parse_scenario_text(const std::string& text) {
    ScenarioSource src;
    std::map<std::string, bool> seen;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    std::map<int, std::vector<std::string>> phi_rows;

    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = strip(std::string_view(line).substr(1, line.size() - 2));
            if (section != "plant" && section != "reference" && section != "gains" &&
                section != "init" && section != "sim") {
                throw ParseError(fmt::format("line {}: unknown section [{}]", line_no, section));
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(fmt::format("line {}: expected 'key = value'", line_no));
        const std::string key = strip(std::string_view(line).substr(0, eq));
        const Value v = ValueReader(strip(std::string_view(line).substr(eq + 1)), line_no).read();
        const std::string qualified = section.empty() ? key : section + "." + key;
        if (seen[qualified]) throw ParseError(fmt::format("line {}: duplicate key {}", line_no, qualified));
        seen[qualified] = true;

        if (qualified == "name") {
            src.name = as_string(v, qualified);
        } else if (qualified == "plant.n") {
            src.n = as_int(v, qualified);
        } else if (qualified == "plant.p") {
            src.p = as_int(v, qualified);
        } else if (qualified == "plant.theta") {
            src.theta = as_numbers(v, qualified);
        } else if (section == "plant" && key.size() > 3 && key.starts_with("phi") &&
                   std::all_of(key.begin() + 3, key.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            phi_rows[std::stoi(key.substr(3))] = as_strings(v, qualified);
        } else if (qualified == "reference.r") {
            src.r = as_string(v, qualified);
        } else if (qualified == "reference.yr") {
            src.yr = as_string(v, qualified);
        } else if (qualified == "gains.c") {
            src.c = as_numbers(v, qualified);
        } else if (qualified == "gains.kappa") {
            src.kappa = as_numbers(v, qualified);
        } else if (qualified == "gains.g") {
            src.g = as_numbers(v, qualified);
        } else if (qualified == "gains.k_nominal") {
            src.k_nominal = as_numbers(v, qualified);
        } else if (qualified == "gains.sigma") {
            src.sigma = as_number(v, qualified);
        } else if (qualified == "gains.gamma") {
            src.gamma = as_number(v, qualified);
        } else if (qualified == "gains.nu") {
            src.nu = as_number(v, qualified);
        } else if (qualified == "init.x0") {
            src.x0 = as_numbers(v, qualified);
        } else if (qualified == "init.thetahat0") {
            src.thetahat0 = as_numbers(v, qualified);
        } else if (qualified == "sim.identifier") {
            src.identifier = as_string(v, qualified);
        } else if (qualified == "sim.gated") {
            src.gated = as_bool(v, qualified);
        } else if (qualified == "sim.filter") {
            src.filter_on = as_bool(v, qualified);
        } else if (qualified == "sim.safety_checks") {
            src.safety_checks = as_bool(v, qualified);
        } else if (qualified == "sim.events") {
            src.events = as_bool(v, qualified);
        } else if (qualified == "sim.t_end") {
            src.t_end = as_number(v, qualified);
        } else if (qualified == "sim.dt") {
            src.dt = as_number(v, qualified);
        } else if (qualified == "sim.stride") {
            src.stride = as_int(v, qualified);
        } else if (qualified == "sim.node_budget") {
            src.node_budget = as_number(v, qualified);
        } else {
            throw ParseError(fmt::format("line {}: unknown key {}", line_no, qualified));
        }
    }

    for (const char* required : {"plant.n", "plant.p", "plant.theta", "reference.r", "gains.c",
                                 "gains.kappa", "gains.g", "gains.sigma", "gains.gamma",
                                 "init.x0", "init.thetahat0"}) {
        if (!seen[required]) throw ParseError(std::string("missing required key ") + required);
    }
    for (const auto& [row, entries] : phi_rows) {
        if (row < 1 || row > src.n) {
            throw ParseError(fmt::format("phi{} is outside rows 1..{}", row, src.n));
        }
    }
    for (int i = 1; i <= src.n; ++i) {
        auto it = phi_rows.find(i);
        if (it == phi_rows.end()) throw ParseError(fmt::format("missing required key plant.phi{}", i));
        src.phi.push_back(it->second);
    }
    return src;
}

std::string format_scenario(const ScenarioSource& src) {
    std::string out;
    if (!src.name.empty()) out += "name = \"" + src.name + "\"\n\n";
    out += "[plant]\n";
    out += fmt::format("n = {}\np = {}\n", src.n, src.p);
    for (std::size_t i = 0; i < src.phi.size(); ++i) {
        out += fmt::format("phi{} = {}\n", i + 1, fmt_strings(src.phi[i]));
    }
    out += "theta = " + fmt_list(src.theta) + "\n\n";
    out += "[reference]\n";
    out += "r = \"" + src.r + "\"\n";
    out += "yr = \"" + src.yr + "\"\n\n";
    out += "[gains]\n";
    out += "c = " + fmt_list(src.c) + "\n";
    out += "kappa = " + fmt_list(src.kappa) + "\n";
    out += "g = " + fmt_list(src.g) + "\n";
    out += "sigma = " + fmt_num(src.sigma) + "\n";
    out += "gamma = " + fmt_num(src.gamma) + "\n";
    out += "nu = " + fmt_num(src.nu) + "\n";
    if (!src.k_nominal.empty()) out += "k_nominal = " + fmt_list(src.k_nominal) + "\n";
    out += "\n[init]\n";
    out += "x0 = " + fmt_list(src.x0) + "\n";
    out += "thetahat0 = " + fmt_list(src.thetahat0) + "\n\n";
    out += "[sim]\n";
    out += "identifier = \"" + src.identifier + "\"\n";
    if (src.gated) out += fmt::format("gated = {}\n", *src.gated);
    out += fmt::format("filter = {}\n", src.filter_on);
    out += fmt::format("safety_checks = {}\n", src.safety_checks);
    out += fmt::format("events = {}\n", src.events);
    out += "t_end = " + fmt_num(src.t_end) + "\n";
    out += "dt = " + fmt_num(src.dt) + "\n";
    out += fmt::format("stride = {}\n", src.stride);
    out += "node_budget = " + fmt_num(src.node_budget) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void require_length(const std::vector<double>& v, int expected, const std::string& what) {
    if (static_cast<int>(v.size()) != expected) {
        throw ValidationError("dimension", fmt::format("{} has length {}, expected {}", what, v.size(), expected));
    }
}

void require_positive(const std::vector<double>& v, const std::string& what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
            throw ValidationError("positivity", fmt::format("{}[{}] = {} must be > 0", what, i + 1, v[i]));
        }
    }
}

void require_positive(double v, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError("positivity", fmt::format("{} = {} must be > 0", what, v));
    }
}

expr::Expr parse_field(const std::string& text, const SymbolLayout& layout, expr::Pool& pool,
                       const std::string& field) {
    try {
        return expr::parse(text, layout.table, pool);
    } catch (const expr::SyntaxError& e) {
        throw ValidationError("expression", field + ": " + e.what());
    } catch (const expr::UnknownSymbol& e) {
        throw ValidationError("expression", field + ": " + e.what());
    }
}

}  // namespace

Scenario build_scenario(const ScenarioSource& src) {
    if (src.n < 1) throw ValidationError("dimension", fmt::format("n = {} must be >= 1", src.n));
    if (src.p < 1) throw ValidationError("dimension", fmt::format("p = {} must be >= 1", src.p));
    const int n = src.n;
    const int p = src.p;

    Scenario sc;
    sc.source = src;
    sc.name = src.name;
    sc.symbols = SymbolLayout(n, p);
    const SymbolLayout& layout = sc.symbols;
    expr::Pool pool;

    // Plant
    if (static_cast<int>(src.phi.size()) != n) {
        throw ValidationError("dimension", fmt::format("{} phi rows, expected {}", src.phi.size(), n));
    }
    require_length(src.theta, p, "theta");
    sc.plant.n = n;
    sc.plant.p = p;
    sc.plant.theta_true = to_vector(src.theta);
    for (int i = 1; i <= n; ++i) {
        const auto& row_text = src.phi[static_cast<std::size_t>(i - 1)];
        if (static_cast<int>(row_text.size()) != p) {
            throw ValidationError("dimension", fmt::format("phi{} has {} entries, expected {}", i, row_text.size(), p));
        }
        std::vector<expr::Expr> row;
        for (int j = 1; j <= p; ++j) {
            const std::string field = fmt::format("phi{}[{}]", i, j);
            expr::Expr e = parse_field(row_text[static_cast<std::size_t>(j - 1)], layout, pool, field);
            for (int v : expr::free_vars(e)) {
                if (v < layout.x(1) || v > layout.x(i)) {
                    throw ValidationError("strict_feedback",
                                          fmt::format("{} depends on {}, allowed x1..x{}", field, layout.table.name(v), i));
                }
            }
            row.push_back(e);
        }
        sc.plant.phi.push_back(std::move(row));
    }

    // Reference and nominal target: functions of t only.
    auto time_only = [&](const expr::Expr& e, const std::string& field) {
        for (int v : expr::free_vars(e)) {
            if (v != layout.t()) {
                throw ValidationError("reference", fmt::format("{} depends on {}, only t is allowed", field, layout.table.name(v)));
            }
        }
    };
    Reference& ref = sc.reference;
    ref.r_expr = parse_field(src.r, layout, pool, "r");
    ref.yr_expr = parse_field(src.yr, layout, pool, "yr");
    time_only(ref.r_expr, "r");
    time_only(ref.yr_expr, "yr");
    ref.derivs.push_back(ref.r_expr);
    ref.yr_derivs.push_back(ref.yr_expr);
    for (int k = 1; k <= n; ++k) {
        ref.derivs.push_back(pool.diff(ref.derivs.back(), layout.t()));
        ref.yr_derivs.push_back(pool.diff(ref.yr_derivs.back(), layout.t()));
    }
    std::vector<expr::Expr> outputs = ref.derivs;
    outputs.insert(outputs.end(), ref.yr_derivs.begin(), ref.yr_derivs.end());
    ref.program = expr::Program(outputs);

    // Gains
    require_length(src.c, n, "c");
    require_length(src.kappa, n, "kappa");
    require_length(src.g, n, "g");
    require_positive(src.c, "c");
    require_positive(src.kappa, "kappa");
    require_positive(src.g, "g");
    require_positive(src.sigma, "sigma");
    require_positive(src.gamma, "gamma");
    if (!(src.nu >= 0.0) || !std::isfinite(src.nu)) {
        throw ValidationError("positivity", fmt::format("nu = {} must be >= 0", src.nu));
    }
    std::vector<double> k_nominal = src.k_nominal;
    if (k_nominal.empty()) k_nominal.assign(static_cast<std::size_t>(n), 2.0);
    require_length(k_nominal, n, "k_nominal");
    require_positive(k_nominal, "k_nominal");
    sc.gains.c = to_vector(src.c);
    sc.gains.kappa = to_vector(src.kappa);
    sc.gains.g = to_vector(src.g);
    sc.gains.sigma = src.sigma;
    sc.gains.gamma = src.gamma;
    sc.gains.nu = src.nu;
    sc.gains.k_nominal = to_vector(k_nominal);

    // Initial conditions
    require_length(src.x0, n, "x0");
    require_length(src.thetahat0, p, "thetahat0");
    sc.x0 = to_vector(src.x0);
    sc.thetahat0 = to_vector(src.thetahat0);
    if (!sc.x0.allFinite() || !sc.thetahat0.allFinite()) {
        throw ValidationError("finite", "initial conditions must be finite");
    }

    // Simulation settings
    sc.identifier = scheme_from_string(src.identifier);
    sc.filter_on = src.filter_on;
    sc.gated = src.gated.value_or(sc.identifier == Scheme::HPassive && sc.filter_on);
    sc.safety_checks = src.safety_checks;
    sc.events = src.events;
    require_positive(src.t_end, "t_end");
    require_positive(src.dt, "dt");
    if (src.dt > src.t_end) throw ValidationError("dt", "dt exceeds t_end");
    if (src.stride < 1) throw ValidationError("stride", fmt::format("stride = {} must be >= 1", src.stride));
    if (!(src.node_budget >= 1.0)) throw ValidationError("node_budget", "node_budget must be >= 1");
    sc.t_end = src.t_end;
    sc.dt = src.dt;
    sc.stride = src.stride;
    sc.node_budget = static_cast<std::size_t>(src.node_budget);

    if (sc.safety_checks) {
        const double h1 = sc.x0(0) - eval_reference(ref, layout, 0.0, 0);
        if (h1 < 0.0) {
            throw ValidationError("h1_nonneg", fmt::format("h1(0) = x1(0) - r(0) = {} must be >= 0", h1));
        }
    }
    return sc;
}

ScenarioSource read_scenario_source(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::filesystem::filesystem_error("cannot open scenario", path,
                                                std::make_error_code(std::errc::no_such_file_or_directory));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    ScenarioSource src = parse_scenario_text(buf.str());
    if (src.name.empty()) src.name = path.stem().string();
    return src;
}

Scenario load_scenario(const std::filesystem::path& path) {
    return build_scenario(read_scenario_source(path));
}

std::string Scenario::canonical() const { return format_scenario(source); }

std::string Scenario::fingerprint() const {
    // FNV-1a, 64 bit
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------
// Reference evaluation

double eval_reference(const Reference& ref, const SymbolLayout& symbols, double t, int order) {
    if (order < 0 || order >= static_cast<int>(ref.derivs.size())) {
        throw std::out_of_range(fmt::format("reference derivative order {} outside 0..{}", order, ref.derivs.size() - 1));
    }
    std::vector<double> env(symbols.size(), 0.0);
    env[static_cast<std::size_t>(symbols.t())] = t;
    return expr::eval(ref.derivs[static_cast<std::size_t>(order)], env);
}

double eval_nominal_target(const Reference& ref, const SymbolLayout& symbols, double t, int order) {
    if (order < 0 || order >= static_cast<int>(ref.yr_derivs.size())) {
        throw std::out_of_range(fmt::format("target derivative order {} outside 0..{}", order, ref.yr_derivs.size() - 1));
    }
    std::vector<double> env(symbols.size(), 0.0);
    env[static_cast<std::size_t>(symbols.t())] = t;
    return expr::eval(ref.yr_derivs[static_cast<std::size_t>(order)], env);
}

void fill_time_slots(const Reference& ref, const SymbolLayout& symbols, double t,
                     std::span<double> env, std::vector<double>& scratch) {
    const int n = symbols.n;
    env[static_cast<std::size_t>(symbols.t())] = t;
    std::vector<double> out(static_cast<std::size_t>(2 * (n + 1)));
    ref.program.run(env, scratch, out);
    for (int k = 0; k <= n; ++k) {
        env[static_cast<std::size_t>(symbols.r(k))] = out[static_cast<std::size_t>(k)];
        env[static_cast<std::size_t>(symbols.yr(k))] = out[static_cast<std::size_t>(n + 1 + k)];
    }
}

}  // namespace novctl
