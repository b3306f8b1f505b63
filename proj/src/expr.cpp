#include "novctl/expr.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

namespace novctl::expr {

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

std::size_t node_hash(const Node& n) {
    std::size_t h = static_cast<std::size_t>(n.op);
    h = mix(h, std::bit_cast<std::uint64_t>(n.value));
    h = mix(h, static_cast<std::size_t>(n.index));
    h = mix(h, std::hash<const void*>{}(n.lhs.get()));
    h = mix(h, std::hash<const void*>{}(n.rhs.get()));
    return h;
}

bool same_key(const Node& a, const Node& b) {
    return a.op == b.op &&
           std::bit_cast<std::uint64_t>(a.value) == std::bit_cast<std::uint64_t>(b.value) &&
           a.index == b.index && a.lhs.get() == b.lhs.get() && a.rhs.get() == b.rhs.get();
}

double ipow(double base, int exponent) {
    double result = 1.0;
    for (int k = 0; k < exponent; ++k) result *= base;
    return result;
}

double apply(Op op, double a, double b, int index) {
    switch (op) {
        case Op::Neg: return -a;
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div:
            if (std::abs(b) < kDivisionGuard) {
                throw DivisionNearZero(fmt::format("division by {:.3g} (guard {:.0e})", b, kDivisionGuard));
            }
            return a / b;
        case Op::PowInt: return ipow(a, index);
        case Op::Sin: return std::sin(a);
        case Op::Cos: return std::cos(a);
        case Op::Exp: return std::exp(a);
        case Op::Tanh: return std::tanh(a);
        case Op::Constant:
        case Op::Var: break;
    }
    return 0.0;
}

bool is_binary(Op op) {
    return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div;
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Exp: return "exp";
        case Op::Tanh: return "tanh";
        default: return nullptr;
    }
}

char operator_char(Op op) {
    switch (op) {
        case Op::Add: return '+';
        case Op::Sub: return '-';
        case Op::Mul: return '*';
        case Op::Div: return '/';
        default: return '?';
    }
}

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, std::abs(v));
    std::string digits(buf, res.ptr);
    return v < 0 || std::signbit(v) ? "(-" + digits + ")" : digits;
}

}  // namespace

// ---------------------------------------------------------------------------
// Errors

SyntaxError::SyntaxError(std::size_t position, std::string expected, const std::string& text)
    : std::runtime_error(fmt::format("syntax error at position {}: expected {} in \"{}\"",
                                     position, expected, text)),
      position_(position),
      expected_(std::move(expected)) {}

UnknownSymbol::UnknownSymbol(std::string name)
    : std::runtime_error("unknown symbol '" + name + "'"), name_(std::move(name)) {}

// ---------------------------------------------------------------------------
// SymbolTable

SymbolTable::SymbolTable(std::vector<std::string> names) {
    for (auto& n : names) add(std::move(n));
}

int SymbolTable::add(std::string name) {
    if (auto it = slots_.find(name); it != slots_.end()) return it->second;
    const int slot = static_cast<int>(names_.size());
    slots_.emplace(name, slot);
    names_.push_back(std::move(name));
    return slot;
}

std::optional<int> SymbolTable::find(std::string_view name) const {
    auto it = slots_.find(std::string(name));
    if (it == slots_.end()) return std::nullopt;
    return it->second;
}

int SymbolTable::at(std::string_view name) const {
    auto slot = find(name);
    if (!slot) throw UnknownSymbol(std::string(name));
    return *slot;
}

// ---------------------------------------------------------------------------
// Pool: raw constructors

Expr Pool::intern(Node n) {
    n.hash = node_hash(n);
    auto [first, last] = table_.equal_range(n.hash);
    for (auto it = first; it != last; ++it) {
        if (same_key(*it->second, n)) return it->second;
    }
    auto e = std::make_shared<const Node>(std::move(n));
    table_.emplace(e->hash, e);
    return e;
}

Expr Pool::constant(double v) {
    if (v == 0.0) v = 0.0;  // fold -0 into +0
    Node n;
    n.op = Op::Constant;
    n.value = v;
    return intern(std::move(n));
}

Expr Pool::var(int slot) {
    Node n;
    n.op = Op::Var;
    n.index = slot;
    return intern(std::move(n));
}

Expr Pool::unary(Op op, Expr a) {
    Node n;
    n.op = op;
    n.lhs = std::move(a);
    return intern(std::move(n));
}

Expr Pool::binary(Op op, Expr a, Expr b) {
    Node n;
    n.op = op;
    n.lhs = std::move(a);
    n.rhs = std::move(b);
    return intern(std::move(n));
}

Expr Pool::pow_int(Expr a, int exponent) {
    if (exponent < 0) throw DomainError("negative integer exponent");
    Node n;
    n.op = Op::PowInt;
    n.index = exponent;
    n.lhs = std::move(a);
    return intern(std::move(n));
}

// ---------------------------------------------------------------------------
// Pool: simplifying builders

Expr Pool::neg(Expr a) {
    if (is_constant(a)) return constant(-a->value);
    if (a->op == Op::Neg) return a->lhs;
    return unary(Op::Neg, std::move(a));
}

Expr Pool::add(Expr a, Expr b) {
    if (is_constant(a, 0.0)) return b;
    if (is_constant(b, 0.0)) return a;
    if (is_constant(a) && is_constant(b)) return constant(a->value + b->value);
    return binary(Op::Add, std::move(a), std::move(b));
}

Expr Pool::sub(Expr a, Expr b) {
    if (is_constant(b, 0.0)) return a;
    if (is_constant(a, 0.0)) return neg(std::move(b));
    if (is_constant(a) && is_constant(b)) return constant(a->value - b->value);
    return binary(Op::Sub, std::move(a), std::move(b));
}

Expr Pool::mul(Expr a, Expr b) {
    if (is_constant(a, 0.0) || is_constant(b, 0.0)) return zero();
    if (is_constant(a, 1.0)) return b;
    if (is_constant(b, 1.0)) return a;
    if (is_constant(a) && is_constant(b)) return constant(a->value * b->value);
    return binary(Op::Mul, std::move(a), std::move(b));
}

Expr Pool::div(Expr a, Expr b) {
    if (is_constant(b, 1.0)) return a;
    if (is_constant(b) && std::abs(b->value) >= kDivisionGuard) {
        if (is_constant(a)) return constant(a->value / b->value);
        if (is_constant(a, 0.0)) return zero();
    }
    return binary(Op::Div, std::move(a), std::move(b));
}

Expr Pool::pow(Expr a, int exponent) {
    if (exponent == 0) return one();
    if (exponent == 1) return a;
    if (is_constant(a)) return constant(ipow(a->value, exponent));
    return pow_int(std::move(a), exponent);
}

Expr Pool::sin(Expr a) {
    if (is_constant(a)) return constant(std::sin(a->value));
    return unary(Op::Sin, std::move(a));
}

Expr Pool::cos(Expr a) {
    if (is_constant(a)) return constant(std::cos(a->value));
    return unary(Op::Cos, std::move(a));
}

Expr Pool::exp(Expr a) {
    if (is_constant(a)) return constant(std::exp(a->value));
    return unary(Op::Exp, std::move(a));
}

Expr Pool::tanh(Expr a) {
    if (is_constant(a)) return constant(std::tanh(a->value));
    return unary(Op::Tanh, std::move(a));
}

// ---------------------------------------------------------------------------
// Differentiation

Expr Pool::diff(const Expr& e, int slot) {
    const MemoKey key{e.get(), slot};
    if (auto it = diff_memo_.find(key); it != diff_memo_.end()) return it->second;

    Expr d;
    switch (e->op) {
        case Op::Constant: d = zero(); break;
        case Op::Var: d = e->index == slot ? one() : zero(); break;
        case Op::Neg: d = neg(diff(e->lhs, slot)); break;
        case Op::Add: d = add(diff(e->lhs, slot), diff(e->rhs, slot)); break;
        case Op::Sub: d = sub(diff(e->lhs, slot), diff(e->rhs, slot)); break;
        case Op::Mul:
            d = add(mul(diff(e->lhs, slot), e->rhs), mul(e->lhs, diff(e->rhs, slot)));
            break;
        case Op::Div: {
            Expr da = diff(e->lhs, slot);
            Expr db = diff(e->rhs, slot);
            if (is_constant(db, 0.0)) {
                d = div(da, e->rhs);
            } else {
                d = sub(div(da, e->rhs), div(mul(e->lhs, db), pow(e->rhs, 2)));
            }
            break;
        }
        case Op::PowInt:
            if (e->index == 0) {
                d = zero();
            } else {
                d = mul(mul(constant(e->index), pow(e->lhs, e->index - 1)), diff(e->lhs, slot));
            }
            break;
        case Op::Sin: d = mul(diff(e->lhs, slot), cos(e->lhs)); break;
        case Op::Cos: d = neg(mul(diff(e->lhs, slot), sin(e->lhs))); break;
        case Op::Exp: d = mul(diff(e->lhs, slot), e); break;
        case Op::Tanh: d = mul(diff(e->lhs, slot), sub(one(), pow(e, 2))); break;
    }
    diff_memo_.emplace(key, d);
    return d;
}

Expr Pool::import(const Expr& e) {
    if (auto it = import_memo_.find(e.get()); it != import_memo_.end()) return it->second;
    Expr out;
    switch (e->op) {
        case Op::Constant: out = constant(e->value); break;
        case Op::Var: out = var(e->index); break;
        case Op::PowInt: out = pow_int(import(e->lhs), e->index); break;
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Exp:
        case Op::Tanh: out = unary(e->op, import(e->lhs)); break;
        default: out = binary(e->op, import(e->lhs), import(e->rhs)); break;
    }
    import_memo_.emplace(e.get(), out);
    return out;
}

// ---------------------------------------------------------------------------
// Queries

bool is_constant(const Expr& e) { return e->op == Op::Constant; }

bool is_constant(const Expr& e, double v) { return e->op == Op::Constant && e->value == v; }

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.get() == b.get()) return true;
    if (!a || !b) return false;
    if (a->op != b->op || a->index != b->index) return false;
    if (a->op == Op::Constant) return a->value == b->value;
    if (a->op == Op::Var) return true;
    if (!structurally_equal(a->lhs, b->lhs)) return false;
    if (is_binary(a->op)) return structurally_equal(a->rhs, b->rhs);
    return true;
}

std::vector<int> free_vars(const Expr& e) {
    std::set<int> vars;
    std::unordered_set<const Node*> seen;
    std::function<void(const Expr&)> walk = [&](const Expr& n) {
        if (!n || !seen.insert(n.get()).second) return;
        if (n->op == Op::Var) vars.insert(n->index);
        walk(n->lhs);
        walk(n->rhs);
    };
    walk(e);
    return {vars.begin(), vars.end()};
}

std::size_t dag_size(std::span<const Expr> roots) {
    std::unordered_set<const Node*> seen;
    std::vector<const Node*> stack;
    for (const auto& r : roots) stack.push_back(r.get());
    while (!stack.empty()) {
        const Node* n = stack.back();
        stack.pop_back();
        if (!n || !seen.insert(n).second) continue;
        stack.push_back(n->lhs.get());
        stack.push_back(n->rhs.get());
    }
    return seen.size();
}

std::string to_string(const Expr& e, const SymbolTable& symbols) {
    switch (e->op) {
        case Op::Constant: return format_number(e->value);
        case Op::Var: return symbols.name(e->index);
        case Op::Neg: return "(-(" + to_string(e->lhs, symbols) + "))";
        case Op::PowInt: return "(" + to_string(e->lhs, symbols) + " ^ " + std::to_string(e->index) + ")";
        case Op::Sin:
        case Op::Cos:
        case Op::Exp:
        case Op::Tanh: return std::string(function_name(e->op)) + "(" + to_string(e->lhs, symbols) + ")";
        default:
            return "(" + to_string(e->lhs, symbols) + " " + operator_char(e->op) + " " +
                   to_string(e->rhs, symbols) + ")";
    }
}

Expr diff(const Expr& e, int slot) {
    Pool pool;
    return pool.diff(pool.import(e), slot);
}

// ---------------------------------------------------------------------------
// Evaluation

double eval(const Expr& e, std::span<const double> env) {
    double v = 0.0;
    switch (e->op) {
        case Op::Constant: return e->value;
        case Op::Var:
            if (e->index < 0 || static_cast<std::size_t>(e->index) >= env.size()) {
                throw DomainError(fmt::format("unbound variable slot {}", e->index));
            }
            v = env[static_cast<std::size_t>(e->index)];
            break;
        default: {
            const double a = eval(e->lhs, env);
            const double b = is_binary(e->op) ? eval(e->rhs, env) : 0.0;
            v = apply(e->op, a, b, e->index);
        }
    }
    if (!std::isfinite(v)) throw DomainError("non-finite value during evaluation");
    return v;
}

double eval(const Expr& e, const SymbolTable& symbols,
            const std::unordered_map<std::string, double>& env) {
    std::vector<double> slots(symbols.size(), std::nan(""));
    for (const auto& [name, value] : env) {
        slots[static_cast<std::size_t>(symbols.at(name))] = value;
    }
    for (int v : free_vars(e)) {
        if (std::isnan(slots[static_cast<std::size_t>(v)])) {
            throw DomainError("variable '" + symbols.name(v) + "' is not bound");
        }
    }
    return eval(e, slots);
}

Program::Program(std::span<const Expr> roots) {
    std::unordered_map<const Node*, int> slot_of;
    // Iterative post-order to keep deep chains off the call stack.
    for (const auto& root : roots) {
        std::vector<std::pair<const Node*, bool>> stack{{root.get(), false}};
        while (!stack.empty()) {
            auto [n, expanded] = stack.back();
            stack.pop_back();
            if (slot_of.contains(n)) continue;
            if (!expanded) {
                stack.emplace_back(n, true);
                if (n->rhs) stack.emplace_back(n->rhs.get(), false);
                if (n->lhs) stack.emplace_back(n->lhs.get(), false);
                continue;
            }
            Instr ins{n->op, n->value, n->index, -1, -1};
            if (n->lhs) ins.a = slot_of.at(n->lhs.get());
            if (n->rhs) ins.b = slot_of.at(n->rhs.get());
            slot_of.emplace(n, static_cast<int>(code_.size()));
            code_.push_back(ins);
        }
        outputs_.push_back(slot_of.at(root.get()));
    }
}

void Program::run(std::span<const double> env, std::vector<double>& scratch,
                  std::span<double> out) const {
    scratch.resize(code_.size());
    for (std::size_t k = 0; k < code_.size(); ++k) {
        const Instr& ins = code_[k];
        double v;
        if (ins.op == Op::Constant) {
            v = ins.value;
        } else if (ins.op == Op::Var) {
            v = env[static_cast<std::size_t>(ins.index)];
        } else {
            const double a = scratch[static_cast<std::size_t>(ins.a)];
            const double b = ins.b >= 0 ? scratch[static_cast<std::size_t>(ins.b)] : 0.0;
            v = apply(ins.op, a, b, ins.index);
        }
        if (!std::isfinite(v)) throw DomainError("non-finite value during evaluation");
        scratch[k] = v;
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) {
        out[k] = scratch[static_cast<std::size_t>(outputs_[k])];
    }
}

}  // namespace novctl::expr
