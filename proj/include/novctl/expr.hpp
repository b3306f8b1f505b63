#pragma once

// Scalar expression trees for regressors and reference signals.
//
// Nodes are immutable and hash-consed inside a Pool, so structurally equal
// subexpressions built through the same pool are the same object. Derived
// expressions (diff, controller recursion) go through the simplifying
// builders; the parser uses the raw constructors so that parsed text maps
// one-to-one onto the tree.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace novctl::expr {

enum class Op : std::uint8_t {
    Constant,
    Var,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowInt,
    Sin,
    Cos,
    Exp,
    Tanh,
};

struct Node;
using Expr = std::shared_ptr<const Node>;

struct Node {
    Op op = Op::Constant;
    double value = 0.0;  // Constant
    int index = 0;       // Var slot, or PowInt exponent
    Expr lhs;
    Expr rhs;
    std::size_t hash = 0;
};

/// |denominator| below this raises DivisionNearZero.
inline constexpr double kDivisionGuard = 1e-12;

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(std::size_t position, std::string expected, const std::string& text);
    std::size_t position() const noexcept { return position_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

class UnknownSymbol : public std::runtime_error {
public:
    explicit UnknownSymbol(std::string name);
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class DivisionNearZero : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Name <-> slot mapping. Slots index the evaluation environment.
class SymbolTable {
public:
    SymbolTable() = default;
    explicit SymbolTable(std::vector<std::string> names);

    int add(std::string name);
    std::optional<int> find(std::string_view name) const;
    int at(std::string_view name) const;
    const std::string& name(int slot) const { return names_.at(static_cast<std::size_t>(slot)); }
    std::size_t size() const noexcept { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> slots_;
};

/// Interning store. Not thread-safe; one pool per builder.
class Pool {
public:
    Pool() = default;
    Pool(const Pool&) = delete;
    Pool& operator=(const Pool&) = delete;

    // Raw constructors: intern without simplification.
    Expr constant(double v);
    Expr var(int slot);
    Expr unary(Op op, Expr a);
    Expr binary(Op op, Expr a, Expr b);
    Expr pow_int(Expr a, int exponent);

    // Simplifying builders: local rules and constant folding only.
    Expr neg(Expr a);
    Expr add(Expr a, Expr b);
    Expr sub(Expr a, Expr b);
    Expr mul(Expr a, Expr b);
    Expr div(Expr a, Expr b);
    Expr pow(Expr a, int exponent);
    Expr sin(Expr a);
    Expr cos(Expr a);
    Expr exp(Expr a);
    Expr tanh(Expr a);

    Expr zero() { return constant(0.0); }
    Expr one() { return constant(1.0); }

    /// d e / d (slot), memoized per pool.
    Expr diff(const Expr& e, int slot);

    /// Re-intern an expression built elsewhere into this pool.
    Expr import(const Expr& e);

    std::size_t size() const noexcept { return table_.size(); }

private:
    Expr intern(Node n);

    struct MemoKey {
        const Node* node;
        int slot;
        bool operator==(const MemoKey&) const = default;
    };
    struct MemoHash {
        std::size_t operator()(const MemoKey& k) const noexcept {
            return std::hash<const void*>{}(k.node) ^ (static_cast<std::size_t>(k.slot) * 0x9e3779b97f4a7c15ULL);
        }
    };

    std::unordered_multimap<std::size_t, Expr> table_;
    std::unordered_map<MemoKey, Expr, MemoHash> diff_memo_;
    std::unordered_map<const Node*, Expr> import_memo_;
};

bool is_constant(const Expr& e, double v);
bool is_constant(const Expr& e);

/// Recursive structural equality (works across pools).
bool structurally_equal(const Expr& a, const Expr& b);

/// Free-variable slots, sorted ascending.
std::vector<int> free_vars(const Expr& e);

/// Number of distinct nodes reachable from the given roots.
std::size_t dag_size(std::span<const Expr> roots);

/// Fully parenthesized infix text; parse(to_string(e)) reproduces e.
std::string to_string(const Expr& e, const SymbolTable& symbols);

/// Parse infix text. Raw AST, no simplification (except "-<number>" literals).
Expr parse(std::string_view text, const SymbolTable& symbols, Pool& pool);
Expr parse(std::string_view text, const SymbolTable& symbols);

/// Differentiate with a throwaway pool.
Expr diff(const Expr& e, int slot);

double eval(const Expr& e, std::span<const double> env);
double eval(const Expr& e, const SymbolTable& symbols,
            const std::unordered_map<std::string, double>& env);

/// Straight-line evaluation tape over several roots with shared subtrees
/// evaluated once. Immutable after construction.
class Program {
public:
    Program() = default;
    explicit Program(std::span<const Expr> roots);

    std::size_t num_outputs() const noexcept { return outputs_.size(); }
    std::size_t num_slots() const noexcept { return code_.size(); }

    /// `scratch` is resized as needed and owned by the caller.
    void run(std::span<const double> env, std::vector<double>& scratch,
             std::span<double> out) const;

private:
    struct Instr {
        Op op;
        double value;
        int index;
        int a;
        int b;
    };
    std::vector<Instr> code_;
    std::vector<int> outputs_;
};

}  // namespace novctl::expr
