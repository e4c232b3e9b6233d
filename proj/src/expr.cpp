#include "firstint/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace firstint {

namespace {

bool is_integral(double v) { return std::isfinite(v) && v == std::rint(v) && std::abs(v) < 1e15; }

bool is_real_integer(cplx c) { return c.imag() == 0.0 && is_integral(c.real()); }

std::string format_double(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    if (is_integral(v)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_cnum(cplx c) {
    if (c.imag() == 0.0) return format_double(c.real());
    return "(" + format_double(c.real()) + "," + format_double(c.imag()) + ")";
}

std::string render_node(const ExprNode& n);

std::string render_child_as_factor(const Expr& c) {
    // The grammar has no grouping parentheses; a sum inside a product is
    // spelled pow(sum,1), which canonicalizes back to the sum on parse.
    if (c->kind == ExprKind::Sum) return "pow(" + c->text + ",1)";
    return c->text;
}

std::string render_node(const ExprNode& n) {
    switch (n.kind) {
        case ExprKind::Const:
            return format_cnum(n.value);
        case ExprKind::VarT:
            return "t" + std::to_string(n.index + 1);
        case ExprKind::VarX:
            return "x" + std::to_string(n.index + 1);
        case ExprKind::LinForm: {
            std::string s = "lin([";
            for (std::size_t i = 0; i < n.coeffs.size(); ++i) {
                if (i) s += ",";
                s += format_cnum(n.coeffs[i]);
            }
            return s + "])";
        }
        case ExprKind::Re:
            return "re(" + n.children[0]->text + ")";
        case ExprKind::Im:
            return "im(" + n.children[0]->text + ")";
        case ExprKind::Sum: {
            std::string s;
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                if (i) s += "+";
                s += n.children[i]->text;
            }
            return s;
        }
        case ExprKind::Prod: {
            std::string s;
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                if (i) s += "*";
                s += render_child_as_factor(n.children[i]);
            }
            return s;
        }
        case ExprKind::Pow:
            return "pow(" + n.children[0]->text + "," + format_cnum(n.value) + ")";
        case ExprKind::Exp:
            return "exp(" + n.children[0]->text + ")";
        case ExprKind::Log:
            return "log(" + n.children[0]->text + ")";
        case ExprKind::Abs:
            return "abs(" + n.children[0]->text + ")";
        case ExprKind::Atan2:
            return "atan2(" + n.children[0]->text + "," + n.children[1]->text + ")";
        case ExprKind::Quadrature:
            return "quad(" + std::to_string(n.index) + ")";
    }
    return {};
}

Expr finish(std::shared_ptr<ExprNode> n) {
    n->text = render_node(*n);
    return n;
}

} // namespace

Expr make_const(cplx c) {
    auto n = std::make_shared<ExprNode>(ExprKind::Const);
    if (c.real() == 0.0) c = cplx(0.0, c.imag());
    if (c.imag() == 0.0) c = cplx(c.real(), 0.0);
    n->value = c;
    return finish(std::move(n));
}

Expr make_var_t(std::size_t j) {
    auto n = std::make_shared<ExprNode>(ExprKind::VarT);
    n->index = j;
    return finish(std::move(n));
}

Expr make_var_x(std::size_t i) {
    auto n = std::make_shared<ExprNode>(ExprKind::VarX);
    n->index = i;
    return finish(std::move(n));
}

Expr make_linform(cvec coeffs) {
    auto n = std::make_shared<ExprNode>(ExprKind::LinForm);
    for (cplx& c : coeffs) {
        if (c.real() == 0.0) c = cplx(0.0, c.imag());
        if (c.imag() == 0.0) c = cplx(c.real(), 0.0);
    }
    n->coeffs = std::move(coeffs);
    return finish(std::move(n));
}

Expr make_sum(std::vector<Expr> children) {
    std::vector<Expr> flat;
    cplx const_part(0.0, 0.0);
    for (Expr& c : children) {
        if (c->kind == ExprKind::Sum) {
            for (const Expr& g : c->children) {
                if (g->kind == ExprKind::Const) const_part += g->value;
                else flat.push_back(g);
            }
        } else if (c->kind == ExprKind::Const) {
            const_part += c->value;
        } else {
            flat.push_back(std::move(c));
        }
    }
    if (const_part != cplx(0.0, 0.0)) flat.push_back(make_const(const_part));
    if (flat.empty()) return make_const(0.0);
    std::sort(flat.begin(), flat.end(),
              [](const Expr& a, const Expr& b) { return a->text < b->text; });
    if (flat.size() == 1) return flat[0];
    auto n = std::make_shared<ExprNode>(ExprKind::Sum);
    n->children = std::move(flat);
    return finish(std::move(n));
}

Expr make_prod(std::vector<Expr> children) {
    std::vector<Expr> flat;
    cplx const_part(1.0, 0.0);
    for (Expr& c : children) {
        if (c->kind == ExprKind::Prod) {
            for (const Expr& g : c->children) {
                if (g->kind == ExprKind::Const) const_part *= g->value;
                else flat.push_back(g);
            }
        } else if (c->kind == ExprKind::Const) {
            const_part *= c->value;
        } else {
            flat.push_back(std::move(c));
        }
    }
    if (const_part == cplx(0.0, 0.0)) return make_const(0.0);
    if (const_part != cplx(1.0, 0.0)) flat.push_back(make_const(const_part));
    if (flat.empty()) return make_const(1.0);
    std::sort(flat.begin(), flat.end(),
              [](const Expr& a, const Expr& b) { return a->text < b->text; });
    if (flat.size() == 1) return flat[0];
    auto n = std::make_shared<ExprNode>(ExprKind::Prod);
    n->children = std::move(flat);
    return finish(std::move(n));
}

Expr make_pow(Expr base, cplx exponent) {
    if (exponent == cplx(0.0, 0.0)) return make_const(1.0);
    if (exponent == cplx(1.0, 0.0)) return base;
    if (base->kind == ExprKind::Const) {
        const cplx b = base->value;
        if (std::abs(b) > 0.0 || (is_real_integer(exponent) && exponent.real() > 0.0))
            return make_const(std::pow(b, exponent));
    }
    if (base->kind == ExprKind::Pow && is_real_integer(base->value) && is_real_integer(exponent))
        return make_pow(base->children[0], base->value * exponent);
    auto n = std::make_shared<ExprNode>(ExprKind::Pow);
    n->value = exponent;
    n->children = {std::move(base)};
    return finish(std::move(n));
}

Expr make_exp(Expr e) {
    if (e->kind == ExprKind::Const) return make_const(std::exp(e->value));
    auto n = std::make_shared<ExprNode>(ExprKind::Exp);
    n->children = {std::move(e)};
    return finish(std::move(n));
}

Expr make_log(Expr e) {
    if (e->kind == ExprKind::Const && std::abs(e->value) > 0.0)
        return make_const(std::log(e->value));
    auto n = std::make_shared<ExprNode>(ExprKind::Log);
    n->children = {std::move(e)};
    return finish(std::move(n));
}

Expr make_abs(Expr e) {
    if (e->kind == ExprKind::Const) return make_const(std::abs(e->value));
    auto n = std::make_shared<ExprNode>(ExprKind::Abs);
    n->children = {std::move(e)};
    return finish(std::move(n));
}

Expr make_atan2(Expr num, Expr den) {
    if (num->kind == ExprKind::Const && den->kind == ExprKind::Const &&
        (num->value != cplx(0.0, 0.0) || den->value != cplx(0.0, 0.0)))
        return make_const(std::atan2(num->value.real(), den->value.real()));
    auto n = std::make_shared<ExprNode>(ExprKind::Atan2);
    n->children = {std::move(num), std::move(den)};
    return finish(std::move(n));
}

Expr make_re(Expr e) {
    if (e->kind == ExprKind::Const) return make_const(e->value.real());
    auto n = std::make_shared<ExprNode>(ExprKind::Re);
    n->children = {std::move(e)};
    return finish(std::move(n));
}

Expr make_im(Expr e) {
    if (e->kind == ExprKind::Const) return make_const(e->value.imag());
    auto n = std::make_shared<ExprNode>(ExprKind::Im);
    n->children = {std::move(e)};
    return finish(std::move(n));
}

Expr make_quadrature(std::size_t id) {
    auto n = std::make_shared<ExprNode>(ExprKind::Quadrature);
    n->index = id;
    return finish(std::move(n));
}

bool structurally_equal(const Expr& a, const Expr& b) { return a->text == b->text; }

bool contains_quadrature(const Expr& e) {
    if (e->kind == ExprKind::Quadrature) return true;
    for (const Expr& c : e->children)
        if (contains_quadrature(c)) return true;
    return false;
}

const std::string& render_expr(const Expr& e) { return e->text; }

namespace {

constexpr double kAtanFloor = 1e-300;

cplx pow_value(cplx base, cplx h, const std::string& where) {
    if (is_real_integer(h)) {
        const long k = static_cast<long>(h.real());
        if (k < 0 && std::abs(base) == 0.0)
            throw domain_error("pow: zero base with negative exponent in " + where);
        cplx r(1.0, 0.0);
        cplx b = base;
        long e = k < 0 ? -k : k;
        while (e) {
            if (e & 1) r *= b;
            b *= b;
            e >>= 1;
        }
        return k < 0 ? 1.0 / r : r;
    }
    if (std::abs(base) == 0.0)
        throw domain_error("pow: zero base with non-integer exponent in " + where);
    if (base.imag() == 0.0) {
        // |base|^h on the real line; on one component the sign is constant.
        return std::exp(h * std::log(std::abs(base.real())));
    }
    return std::exp(h * std::log(base));
}

} // namespace

cplx eval_expr(const Expr& e, const Point& p, const QuadEnv* quad) {
    switch (e->kind) {
        case ExprKind::Const:
            return e->value;
        case ExprKind::VarT:
            if (e->index >= p.t.size()) throw input_error("eval: t index out of range");
            return p.t[e->index];
        case ExprKind::VarX:
            if (e->index >= p.x.size()) throw input_error("eval: x index out of range");
            return p.x[e->index];
        case ExprKind::LinForm: {
            if (e->coeffs.size() != p.x.size())
                throw input_error("eval: lin form dimension mismatch");
            cplx s(0.0, 0.0);
            for (std::size_t i = 0; i < e->coeffs.size(); ++i) s += e->coeffs[i] * p.x[i];
            return s;
        }
        case ExprKind::Re:
            return eval_expr(e->children[0], p, quad).real();
        case ExprKind::Im:
            return eval_expr(e->children[0], p, quad).imag();
        case ExprKind::Sum: {
            cplx s(0.0, 0.0);
            for (const Expr& c : e->children) s += eval_expr(c, p, quad);
            return s;
        }
        case ExprKind::Prod: {
            cplx s(1.0, 0.0);
            for (const Expr& c : e->children) s *= eval_expr(c, p, quad);
            return s;
        }
        case ExprKind::Pow:
            return pow_value(eval_expr(e->children[0], p, quad), e->value, e->children[0]->text);
        case ExprKind::Exp:
            return std::exp(eval_expr(e->children[0], p, quad));
        case ExprKind::Log: {
            const cplx v = eval_expr(e->children[0], p, quad);
            if (std::abs(v) == 0.0) throw domain_error("log of zero: " + e->children[0]->text);
            return std::log(v);
        }
        case ExprKind::Abs:
            return std::abs(eval_expr(e->children[0], p, quad));
        case ExprKind::Atan2: {
            const double y = eval_expr(e->children[0], p, quad).real();
            const double x = eval_expr(e->children[1], p, quad).real();
            if (std::hypot(y, x) < kAtanFloor)
                throw domain_error("atan2 at the excluded locus: " + e->text);
            return std::atan2(y, x);
        }
        case ExprKind::Quadrature: {
            if (!quad) throw input_error("eval: quadrature environment missing");
            auto it = quad->values.find(e->index);
            if (it == quad->values.end())
                throw input_error("eval: quadrature id " + std::to_string(e->index) +
                                  " not in environment");
            return it->second;
        }
    }
    throw input_error("eval: unknown node");
}

DualValue eval_dual(const Expr& e, const Point& p, const Direction& dir, const QuadEnv* quad) {
    switch (e->kind) {
        case ExprKind::Const:
            return {e->value, cplx(0.0, 0.0)};
        case ExprKind::VarT:
            return {cplx(p.t[e->index], 0.0),
                    cplx(e->index < dir.dt.size() ? dir.dt[e->index] : 0.0, 0.0)};
        case ExprKind::VarX:
            return {cplx(p.x[e->index], 0.0),
                    cplx(e->index < dir.dx.size() ? dir.dx[e->index] : 0.0, 0.0)};
        case ExprKind::LinForm: {
            cplx v(0.0, 0.0), d(0.0, 0.0);
            for (std::size_t i = 0; i < e->coeffs.size(); ++i) {
                v += e->coeffs[i] * p.x[i];
                if (i < dir.dx.size()) d += e->coeffs[i] * dir.dx[i];
            }
            return {v, d};
        }
        case ExprKind::Re: {
            const DualValue c = eval_dual(e->children[0], p, dir, quad);
            return {c.value.real(), c.deriv.real()};
        }
        case ExprKind::Im: {
            const DualValue c = eval_dual(e->children[0], p, dir, quad);
            return {c.value.imag(), c.deriv.imag()};
        }
        case ExprKind::Sum: {
            cplx v(0.0, 0.0), d(0.0, 0.0);
            for (const Expr& c : e->children) {
                const DualValue cv = eval_dual(c, p, dir, quad);
                v += cv.value;
                d += cv.deriv;
            }
            return {v, d};
        }
        case ExprKind::Prod: {
            cplx v(1.0, 0.0), d(0.0, 0.0);
            for (const Expr& c : e->children) {
                const DualValue cv = eval_dual(c, p, dir, quad);
                d = d * cv.value + v * cv.deriv;
                v *= cv.value;
            }
            return {v, d};
        }
        case ExprKind::Pow: {
            const DualValue b = eval_dual(e->children[0], p, dir, quad);
            const cplx v = pow_value(b.value, e->value, e->children[0]->text);
            if (is_real_integer(e->value)) {
                const cplx vm1 = pow_value(b.value, e->value - cplx(1.0, 0.0),
                                           e->children[0]->text);
                return {v, e->value * vm1 * b.deriv};
            }
            if (std::abs(b.value) == 0.0)
                throw domain_error("pow derivative at zero base: " + e->children[0]->text);
            return {v, e->value * v * b.deriv / b.value};
        }
        case ExprKind::Exp: {
            const DualValue c = eval_dual(e->children[0], p, dir, quad);
            const cplx v = std::exp(c.value);
            return {v, v * c.deriv};
        }
        case ExprKind::Log: {
            const DualValue c = eval_dual(e->children[0], p, dir, quad);
            if (std::abs(c.value) == 0.0)
                throw domain_error("log of zero: " + e->children[0]->text);
            return {std::log(c.value), c.deriv / c.value};
        }
        case ExprKind::Abs: {
            const DualValue c = eval_dual(e->children[0], p, dir, quad);
            const double mag = std::abs(c.value);
            if (mag == 0.0)
                throw domain_error("abs derivative at the kink: " + e->children[0]->text);
            return {cplx(mag, 0.0), (std::conj(c.value) * c.deriv).real() / mag};
        }
        case ExprKind::Atan2: {
            const DualValue yv = eval_dual(e->children[0], p, dir, quad);
            const DualValue xv = eval_dual(e->children[1], p, dir, quad);
            const double y = yv.value.real(), x = xv.value.real();
            const double r2 = x * x + y * y;
            if (r2 < kAtanFloor)
                throw domain_error("atan2 at the excluded locus: " + e->text);
            return {cplx(std::atan2(y, x), 0.0),
                    (x * yv.deriv.real() - y * xv.deriv.real()) / r2};
        }
        case ExprKind::Quadrature: {
            if (!quad) throw input_error("eval: quadrature environment missing");
            auto vit = quad->values.find(e->index);
            if (vit == quad->values.end())
                throw input_error("eval: quadrature id not in environment");
            auto dit = quad->derivs.find(e->index);
            const cplx d = dit == quad->derivs.end() ? cplx(0.0, 0.0) : dit->second;
            return {vit->second, d};
        }
    }
    throw input_error("eval: unknown node");
}

namespace {

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    Expr parse() {
        Expr e = expr();
        skip_ws();
        if (pos_ != s_.size())
            throw input_error("parse: trailing input at offset " + std::to_string(pos_));
        return e;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c))
            throw input_error(std::string("parse: expected '") + c + "' at offset " +
                              std::to_string(pos_));
    }

    bool peek_keyword(const char* kw) {
        skip_ws();
        const std::size_t len = std::string(kw).size();
        return s_.compare(pos_, len, kw) == 0;
    }

    bool consume_keyword(const char* kw) {
        if (!peek_keyword(kw)) return false;
        pos_ += std::string(kw).size();
        return true;
    }

    Expr expr() {
        std::vector<Expr> terms{term()};
        for (;;) {
            skip_ws();
            if (consume('+')) {
                terms.push_back(term());
            } else if (pos_ < s_.size() && s_[pos_] == '-') {
                // binary minus: keep the sign with the following term
                ++pos_;
                terms.push_back(make_neg(term()));
            } else {
                break;
            }
        }
        return make_sum(std::move(terms));
    }

    Expr term() {
        std::vector<Expr> factors{factor()};
        while (consume('*')) factors.push_back(factor());
        return make_prod(std::move(factors));
    }

    Expr factor() {
        skip_ws();
        if (pos_ >= s_.size()) throw input_error("parse: unexpected end of input");
        if (consume_keyword("pow(")) {
            Expr base = expr();
            expect(',');
            const cplx h = cnum();
            expect(')');
            return make_pow(std::move(base), h);
        }
        if (consume_keyword("exp(")) {
            Expr e = expr();
            expect(')');
            return make_exp(std::move(e));
        }
        if (consume_keyword("abs(")) {
            Expr e = expr();
            expect(')');
            return make_abs(std::move(e));
        }
        if (consume_keyword("atan2(")) {
            Expr a = expr();
            expect(',');
            Expr b = expr();
            expect(')');
            return make_atan2(std::move(a), std::move(b));
        }
        if (consume_keyword("log(")) {
            Expr e = expr();
            expect(')');
            return make_log(std::move(e));
        }
        if (consume_keyword("re(")) {
            Expr e = expr();
            expect(')');
            return make_re(std::move(e));
        }
        if (consume_keyword("im(")) {
            Expr e = expr();
            expect(')');
            return make_im(std::move(e));
        }
        if (consume_keyword("quad(")) {
            const std::size_t id = static_cast<std::size_t>(integer());
            expect(')');
            return make_quadrature(id);
        }
        if (consume_keyword("lin([")) {
            cvec coeffs{cnum()};
            while (consume(',')) coeffs.push_back(cnum());
            expect(']');
            expect(')');
            return make_linform(std::move(coeffs));
        }
        const char c = s_[pos_];
        if (c == 't' || c == 'x') {
            ++pos_;
            const long idx = integer();
            if (idx < 1) throw input_error("parse: variable indices are 1-based");
            return c == 't' ? make_var_t(static_cast<std::size_t>(idx - 1))
                            : make_var_x(static_cast<std::size_t>(idx - 1));
        }
        if (c == '(') return make_const(cnum());
        if (c == '-') {
            const bool numeric = pos_ + 1 < s_.size() &&
                                 (std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
                                  s_[pos_ + 1] == '.');
            if (numeric) return make_const(cnum());
            ++pos_;
            return make_neg(factor());
        }
        if (c == '.' || std::isdigit(static_cast<unsigned char>(c)))
            return make_const(cnum());
        throw input_error("parse: unexpected character '" + std::string(1, c) +
                          "' at offset " + std::to_string(pos_));
    }

    long integer() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ == start) throw input_error("parse: integer expected");
        try {
            return std::stol(s_.substr(start, pos_ - start));
        } catch (const std::exception&) {
            throw input_error("parse: integer out of range at offset " + std::to_string(start));
        }
    }

    double number() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
        bool digits = false;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
            digits = true;
        }
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                ++pos_;
                digits = true;
            }
        }
        if (!digits) throw input_error("parse: number expected at offset " + std::to_string(start));
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        }
        try {
            return std::stod(s_.substr(start, pos_ - start));
        } catch (const std::exception&) {
            throw input_error("parse: number out of range at offset " + std::to_string(start));
        }
    }

    cplx cnum() {
        skip_ws();
        if (consume('(')) {
            const double re = number();
            expect(',');
            const double im = number();
            expect(')');
            return {re, im};
        }
        return {number(), 0.0};
    }
};

} // namespace

Expr parse_expr(const std::string& text) { return Parser(text).parse(); }

} // namespace firstint
