#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace logkg {

/// Scalar expression in one variable `x`, e.g. "cos(pi*x) + 0.5*exp(-x^2)".
///
/// Grammar (usual precedence, '^' right-associative):
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('+' | '-') unary | power
///   power   := primary ('^' unary)?
///   primary := number | 'x' | 'pi' | 'e' | name '(' expr ')' | '(' expr ')'
/// with name in sin cos tan exp log sqrt abs sinh cosh tanh.
class Expression {
public:
    explicit Expression(std::string source) : source_(std::move(source)) {
        Parser p{source_, 0};
        root_ = p.expr();
        p.skip();
        if (p.pos != source_.size()) p.fail("unexpected trailing input");
    }

    double operator()(double x) const { return root_->eval(x); }
    const std::string& source() const { return source_; }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(double x) const = 0;
    };
    using Ptr = std::shared_ptr<const Node>;

    struct Constant : Node {
        double v;
        explicit Constant(double value) : v(value) {}
        double eval(double) const override { return v; }
    };
    struct Variable : Node {
        double eval(double x) const override { return x; }
    };
    struct Unary : Node {
        double (*fn)(double);
        Ptr arg;
        Unary(double (*f)(double), Ptr a) : fn(f), arg(std::move(a)) {}
        double eval(double x) const override { return fn(arg->eval(x)); }
    };
    struct Binary : Node {
        char op;
        Ptr lhs, rhs;
        Binary(char o, Ptr l, Ptr r) : op(o), lhs(std::move(l)), rhs(std::move(r)) {}
        double eval(double x) const override {
            const double l = lhs->eval(x);
            const double r = rhs->eval(x);
            switch (op) {
                case '+': return l + r;
                case '-': return l - r;
                case '*': return l * r;
                case '/': return l / r;
                default: return std::pow(l, r);
            }
        }
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;

        [[noreturn]] void fail(const std::string& msg) const {
            throw std::invalid_argument("expression '" + s + "': " + msg + " at offset " +
                                        std::to_string(pos));
        }
        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool accept(char c) {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        Ptr expr() {
            Ptr lhs = term();
            for (;;) {
                if (accept('+')) lhs = std::make_shared<Binary>('+', lhs, term());
                else if (accept('-')) lhs = std::make_shared<Binary>('-', lhs, term());
                else return lhs;
            }
        }
        Ptr term() {
            Ptr lhs = unary();
            for (;;) {
                if (accept('*')) lhs = std::make_shared<Binary>('*', lhs, unary());
                else if (accept('/')) lhs = std::make_shared<Binary>('/', lhs, unary());
                else return lhs;
            }
        }
        Ptr unary() {
            if (accept('-')) return std::make_shared<Binary>('-', std::make_shared<Constant>(0.0), unary());
            if (accept('+')) return unary();
            return power();
        }
        Ptr power() {
            Ptr base = primary();
            if (accept('^')) return std::make_shared<Binary>('^', base, unary());
            return base;
        }
        Ptr primary() {
            skip();
            if (pos >= s.size()) fail("unexpected end");
            if (accept('(')) {
                Ptr e = expr();
                if (!accept(')')) fail("expected ')'");
                return e;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const char* begin = s.c_str() + pos;
                char* end = nullptr;
                const double v = std::strtod(begin, &end);
                if (end == begin) fail("bad number");
                pos += static_cast<std::size_t>(end - begin);
                return std::make_shared<Constant>(v);
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos;
                while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
                const std::string name = s.substr(start, pos - start);
                if (name == "x") return std::make_shared<Variable>();
                if (name == "pi") return std::make_shared<Constant>(std::numbers::pi);
                if (name == "e") return std::make_shared<Constant>(std::numbers::e);
                double (*fn)(double) = lookup(name);
                if (!fn) fail("unknown name '" + name + "'");
                if (!accept('(')) fail("expected '(' after " + name);
                Ptr arg = expr();
                if (!accept(')')) fail("expected ')'");
                return std::make_shared<Unary>(fn, arg);
            }
            fail(std::string("unexpected character '") + c + "'");
        }

        static double (*lookup(const std::string& name))(double) {
            if (name == "sin") return [](double v) { return std::sin(v); };
            if (name == "cos") return [](double v) { return std::cos(v); };
            if (name == "tan") return [](double v) { return std::tan(v); };
            if (name == "exp") return [](double v) { return std::exp(v); };
            if (name == "log") return [](double v) { return std::log(v); };
            if (name == "sqrt") return [](double v) { return std::sqrt(v); };
            if (name == "abs") return [](double v) { return std::abs(v); };
            if (name == "sinh") return [](double v) { return std::sinh(v); };
            if (name == "cosh") return [](double v) { return std::cosh(v); };
            if (name == "tanh") return [](double v) { return std::tanh(v); };
            return nullptr;
        }
    };

    std::string source_;
    Ptr root_;
};

}  // namespace logkg
