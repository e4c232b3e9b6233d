#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "firstint/linalg.hpp"

namespace firstint {

enum class ExprKind {
    Const,
    VarT,
    VarX,
    LinForm,
    Re,
    Im,
    Sum,
    Prod,
    Pow,
    Exp,
    Log,
    Abs,
    Atan2,
    Quadrature,
};

class ExprNode;
/// Immutable shared expression tree; safe to share and evaluate concurrently.
using Expr = std::shared_ptr<const ExprNode>;

class ExprNode {
public:
    ExprKind kind;
    cplx value{};               // Const payload; Pow exponent
    std::size_t index = 0;      // VarT / VarX (0-based) and Quadrature id
    cvec coeffs;                // LinForm coefficients over x
    std::vector<Expr> children;
    std::string text;           // canonical rendering, fixed at construction

    ExprNode(ExprKind k) : kind(k) {}
};

/// Evaluation point: m time coordinates and n state coordinates (real).
struct Point {
    std::vector<double> t;
    std::vector<double> x;
};

/// Values (and per-direction derivatives, when dual evaluation is used) of the
/// co-integrated quadrature accumulators referenced by Quadrature nodes.
struct QuadEnv {
    std::map<std::size_t, cplx> values;
    std::map<std::size_t, cplx> derivs;  // directional derivative for the active direction
};

// Canonicalizing constructors: flatten/fold/sort so that structurally equal
// trees share one rendering.
Expr make_const(cplx c);
Expr make_var_t(std::size_t j);
Expr make_var_x(std::size_t i);
Expr make_linform(cvec coeffs);
Expr make_sum(std::vector<Expr> children);
Expr make_prod(std::vector<Expr> children);
Expr make_pow(Expr base, cplx exponent);
Expr make_exp(Expr e);
Expr make_log(Expr e);
Expr make_abs(Expr e);
Expr make_atan2(Expr num, Expr den);
Expr make_re(Expr e);
Expr make_im(Expr e);
Expr make_quadrature(std::size_t id);

inline Expr make_neg(Expr e) { return make_prod({make_const(-1.0), std::move(e)}); }
inline Expr make_sub(Expr a, Expr b) { return make_sum({std::move(a), make_neg(std::move(b))}); }

bool structurally_equal(const Expr& a, const Expr& b);
bool contains_quadrature(const Expr& e);

cplx eval_expr(const Expr& e, const Point& p, const QuadEnv* quad = nullptr);

struct DualValue {
    cplx value;
    cplx deriv;
};

/// Tangent direction in (t, x); both parts real.
struct Direction {
    std::vector<double> dt;
    std::vector<double> dx;
};

DualValue eval_dual(const Expr& e, const Point& p, const Direction& dir,
                    const QuadEnv* quad = nullptr);

const std::string& render_expr(const Expr& e);

/// Parses the expression grammar used for forcing terms and emitted integrals:
///   expr := term (('+'|'-') term)* ; term := factor ('*' factor)* ;
///   factor := pow(expr,cnum) | exp(expr) | abs(expr) | atan2(expr,expr) |
///             log(expr) | re(expr) | im(expr) | quad(int) |
///             lin([cnum,...]) | tN | xN | cnum ;
///   cnum := float | '(' float ',' float ')'.
Expr parse_expr(const std::string& text);

} // namespace firstint
