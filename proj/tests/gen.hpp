#pragma once

// Seeded generators for property tests.

#include <random>

#include "novctl/expr.hpp"

namespace novctl::testing {

inline std::mt19937_64& rng() {
    static std::mt19937_64 engine(0x5eed1234ULL);
    return engine;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }
inline int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng()); }

/// Random raw AST over the given variable slots, depth <= max_depth.
inline expr::Expr random_expr(expr::Pool& pool, const std::vector<int>& slots, int max_depth) {
    using expr::Op;
    if (max_depth <= 0 || uniform_int(0, 3) == 0) {
        if (uniform_int(0, 1) == 0) return pool.var(slots[static_cast<std::size_t>(uniform_int(0, static_cast<int>(slots.size()) - 1))]);
        return pool.constant(std::round(uniform(-5.0, 5.0) * 100.0) / 100.0);
    }
    switch (uniform_int(0, 9)) {
        case 0: return pool.unary(Op::Neg, random_expr(pool, slots, max_depth - 1));
        case 1: return pool.binary(Op::Add, random_expr(pool, slots, max_depth - 1), random_expr(pool, slots, max_depth - 1));
        case 2: return pool.binary(Op::Sub, random_expr(pool, slots, max_depth - 1), random_expr(pool, slots, max_depth - 1));
        case 3: return pool.binary(Op::Mul, random_expr(pool, slots, max_depth - 1), random_expr(pool, slots, max_depth - 1));
        case 4: return pool.binary(Op::Div, random_expr(pool, slots, max_depth - 1), random_expr(pool, slots, max_depth - 1));
        case 5: return pool.pow_int(random_expr(pool, slots, max_depth - 1), uniform_int(0, 3));
        case 6: return pool.unary(Op::Sin, random_expr(pool, slots, max_depth - 1));
        case 7: return pool.unary(Op::Cos, random_expr(pool, slots, max_depth - 1));
        case 8: return pool.unary(Op::Exp, random_expr(pool, slots, max_depth - 1));
        default: return pool.unary(Op::Tanh, random_expr(pool, slots, max_depth - 1));
    }
}

}  // namespace novctl::testing
