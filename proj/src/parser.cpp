// Recursive-descent parser for the scenario expression grammar.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' INTEGER)?
//   primary := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
//
// A minus sign directly in front of a numeric literal (and not followed by
// '^') is folded into a negative constant.

#include "novctl/expr.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace novctl::expr {

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t pos;
    std::string_view text;
    double number = 0.0;
};

class Parser {
public:
    Parser(std::string_view text, const SymbolTable& symbols, Pool& pool)
        : text_(text), symbols_(symbols), pool_(pool) {
        advance();
    }

    Expr parse_all() {
        Expr e = expr();
        if (tok_.kind != Tok::End) fail("operator or end of input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(tok_.pos, expected, std::string(text_));
    }

    void advance() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        tok_ = Token{Tok::End, pos_, {}};
        if (pos_ >= text_.size()) return;
        const char c = text_[pos_];
        const std::size_t start = pos_;
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            // strtod accepts exponents; copy to guarantee termination.
            std::string buf(text_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(buf.c_str(), &end);
            const std::size_t len = static_cast<std::size_t>(end - buf.c_str());
            if (len == 0) fail("number");
            pos_ += len;
            tok_ = Token{Tok::Number, start, text_.substr(start, len), v};
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                ++pos_;
            }
            tok_ = Token{Tok::Ident, start, text_.substr(start, pos_ - start)};
            return;
        }
        ++pos_;
        switch (c) {
            case '+': tok_.kind = Tok::Plus; break;
            case '-': tok_.kind = Tok::Minus; break;
            case '*': tok_.kind = Tok::Star; break;
            case '/': tok_.kind = Tok::Slash; break;
            case '^': tok_.kind = Tok::Caret; break;
            case '(': tok_.kind = Tok::LParen; break;
            case ')': tok_.kind = Tok::RParen; break;
            default: fail("number, identifier, operator or parenthesis");
        }
        tok_.text = text_.substr(start, 1);
    }

    Token peek_next() {
        const std::size_t saved_pos = pos_;
        const Token saved_tok = tok_;
        advance();
        Token next = tok_;
        pos_ = saved_pos;
        tok_ = saved_tok;
        return next;
    }

    Expr expr() {
        Expr lhs = term();
        while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
            const Op op = tok_.kind == Tok::Plus ? Op::Add : Op::Sub;
            advance();
            lhs = pool_.binary(op, lhs, term());
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
            const Op op = tok_.kind == Tok::Star ? Op::Mul : Op::Div;
            advance();
            lhs = pool_.binary(op, lhs, unary());
        }
        return lhs;
    }

    Expr unary() {
        if (tok_.kind != Tok::Minus) return power();
        advance();
        if (tok_.kind == Tok::Number && peek_next().kind != Tok::Caret) {
            const double v = tok_.number;
            advance();
            return pool_.constant(-v);
        }
        return pool_.unary(Op::Neg, unary());
    }

    Expr power() {
        Expr base = primary();
        if (tok_.kind != Tok::Caret) return base;
        advance();
        if (tok_.kind != Tok::Number) fail("non-negative integer exponent");
        int exponent = 0;
        auto [ptr, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), exponent);
        if (ec != std::errc{} || ptr != tok_.text.data() + tok_.text.size() || exponent < 0) {
            fail("non-negative integer exponent");
        }
        advance();
        return pool_.pow_int(base, exponent);
    }

    Expr primary() {
        switch (tok_.kind) {
            case Tok::Number: {
                const double v = tok_.number;
                advance();
                return pool_.constant(v);
            }
            case Tok::LParen: {
                advance();
                Expr e = expr();
                if (tok_.kind != Tok::RParen) fail("')'");
                advance();
                return e;
            }
            case Tok::Ident: {
                const std::string_view name = tok_.text;
                advance();
                if (auto fn = function_op(name)) {
                    if (tok_.kind != Tok::LParen) fail("'(' after " + std::string(name));
                    advance();
                    Expr arg = expr();
                    if (tok_.kind != Tok::RParen) fail("')'");
                    advance();
                    return pool_.unary(*fn, arg);
                }
                auto slot = symbols_.find(name);
                if (!slot) throw UnknownSymbol(std::string(name));
                return pool_.var(*slot);
            }
            default: fail("number, identifier or '('");
        }
    }

    static std::optional<Op> function_op(std::string_view name) {
        if (name == "sin") return Op::Sin;
        if (name == "cos") return Op::Cos;
        if (name == "exp") return Op::Exp;
        if (name == "tanh") return Op::Tanh;
        return std::nullopt;
    }

    std::string_view text_;
    const SymbolTable& symbols_;
    Pool& pool_;
    std::size_t pos_ = 0;
    Token tok_{Tok::End, 0, {}};
};

}  // namespace

Expr parse(std::string_view text, const SymbolTable& symbols, Pool& pool) {
    return Parser(text, symbols, pool).parse_all();
}

Expr parse(std::string_view text, const SymbolTable& symbols) {
    Pool pool;
    return parse(text, symbols, pool);
}

}  // namespace novctl::expr
