#include "firstint/builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace firstint {

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::rint(r);
}

namespace {

bool near_zero(cplx v, double tol = 1e-12) { return std::abs(v) <= tol; }

bool is_real_integer(cplx c) {
    return c.imag() == 0.0 && std::isfinite(c.real()) && c.real() == std::rint(c.real());
}

cvec real_parts(const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = cplx(v[i].real(), 0.0);
    return r;
}

cvec imag_parts(const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = cplx(v[i].imag(), 0.0);
    return r;
}

bool vector_real(const cvec& v, double tol = 1e-10) {
    for (const cplx& e : v)
        if (std::abs(e.imag()) > tol) return false;
    return true;
}

/// Linear form over the real coordinates for a coefficient vector in the
/// system's natural space (gamma space for rlinear).
Expr state_linform(const SystemSpec& spec, const cvec& nu) {
    if (spec.kind == SystemKind::rlinear) return make_linform(gamma_linform_coeffs(nu));
    return make_linform(nu);
}

double snap_component(double v) {
    const double r = std::rint(v);
    if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) return r;
    const double h = std::rint(2.0 * v) / 2.0;
    if (std::abs(v - h) <= 1e-9 * std::max(1.0, std::abs(v))) return h;
    return v;
}

/// Display normalization for emitted linear forms: rescale to the small
/// integer vector when one exists, otherwise pin the first nonzero entry to 1.
cvec display_vector(const cvec& v) {
    double min_mag = 0.0;
    for (const cplx& e : v) {
        const double mag = std::abs(e);
        if (mag > 1e-10 && (min_mag == 0.0 || mag < min_mag)) min_mag = mag;
    }
    if (min_mag == 0.0) return v;
    cplx pivot(0.0, 0.0);
    for (const cplx& e : v)
        if (std::abs(std::abs(e) - min_mag) <= 1e-12 * min_mag) { pivot = e; break; }
    cvec scaled(v.size());
    bool integral = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const cplx z = v[i] / pivot;
        const double re = std::rint(z.real());
        const double im = std::rint(z.imag());
        if (std::abs(z.real() - re) > 1e-9 || std::abs(z.imag() - im) > 1e-9 ||
            std::abs(re) > 64.0 || std::abs(im) > 64.0) {
            integral = false;
            break;
        }
        scaled[i] = cplx(re, im);
    }
    if (!integral) {
        for (const cplx& e : v)
            if (std::abs(e) > 1e-10) return (1.0 / e) * v;
        return v;
    }
    for (const cplx& e : scaled) {
        if (std::abs(e) <= 1e-10) continue;
        if (e.real() < 0.0 || (e.real() == 0.0 && e.imag() < 0.0)) return cplx(-1.0, 0.0) * scaled;
        break;
    }
    return scaled;
}

cplx display_scale(const cvec& v) {
    const cvec d = display_vector(v);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > 1e-10) return d[i] / v[i];
    return cplx(1.0, 0.0);
}

/// Combined complex form whose negative-real-axis crossings are exactly the
/// branch jumps of atan2(num, den).
Expr atan2_branch_form(const cvec& den, const cvec& num) {
    cvec c(den.size());
    const cplx iu(0.0, 1.0);
    for (std::size_t k = 0; k < den.size(); ++k) c[k] = den[k] + iu * num[k];
    return make_linform(std::move(c));
}

/// Formal Lie derivatives of e at p along every direction carrying eigenvalue
/// data: the m real operators, or the 2m complex generators for rlinear
/// (recovered from the derivatives along the real axes).
cvec formal_lie_derivs(const Expr& e, const SystemSpec& spec, const Point& p,
                       const QuadEnv* quad = nullptr, bool include_forcing = false) {
    const std::size_t dirs = spec.direction_count();
    if (spec.kind != SystemKind::rlinear) {
        cvec out(dirs);
        for (std::size_t j = 0; j < dirs; ++j)
            out[j] = lie_derivative(e, spec, j, p, quad, include_forcing);
        return out;
    }
    const std::size_t m = spec.m;
    cvec out(2 * m);
    const cplx iu(0.0, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
        const cplx du = lie_derivative(e, spec, j, p, quad, false);
        const cplx dv = lie_derivative(e, spec, m + j, p, quad, false);
        out[j] = 0.5 * (du - iu * dv);
        out[m + j] = 0.5 * (du + iu * dv);
    }
    return out;
}

} // namespace

QuadEnv quad_env_at(const QuadRegistry& registry, const SystemSpec& spec,
                    const std::vector<double>& t, double step) {
    QuadEnv env;
    if (registry.accumulators.empty()) return env;
    if (t.size() != spec.time_dim()) throw input_error("quad_env_at: t dimension mismatch");
    const std::size_t count = registry.accumulators.size();
    std::vector<cplx> q(count, cplx(0.0, 0.0));

    double span = 0.0;
    for (double v : t) span = std::max(span, std::abs(v));
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                           std::ceil(span / std::max(step, 1e-9))));
    auto rhs = [&](double s, const std::vector<cplx>& state) {
        Point p;
        p.t.resize(t.size());
        for (std::size_t j = 0; j < t.size(); ++j) p.t[j] = s * t[j];
        QuadEnv stage;
        for (std::size_t i = 0; i < count; ++i) stage.values[i] = state[i];
        std::vector<cplx> d(count, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < count; ++i) {
            const QuadAccumulator& acc = registry.accumulators[i];
            cplx sum(0.0, 0.0);
            for (std::size_t j = 0; j < acc.integrands.size(); ++j)
                sum += t[j] * eval_expr(acc.integrands[j], p, &stage);
            d[i] = sum;
        }
        return d;
    };
    const double h = 1.0 / static_cast<double>(steps);
    double s = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const std::vector<cplx> k1 = rhs(s, q);
        std::vector<cplx> tmp(count);
        for (std::size_t i = 0; i < count; ++i) tmp[i] = q[i] + 0.5 * h * k1[i];
        const std::vector<cplx> k2 = rhs(s + 0.5 * h, tmp);
        for (std::size_t i = 0; i < count; ++i) tmp[i] = q[i] + 0.5 * h * k2[i];
        const std::vector<cplx> k3 = rhs(s + 0.5 * h, tmp);
        for (std::size_t i = 0; i < count; ++i) tmp[i] = q[i] + h * k3[i];
        const std::vector<cplx> k4 = rhs(s + h, tmp);
        for (std::size_t i = 0; i < count; ++i)
            q[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        s += h;
    }
    for (std::size_t i = 0; i < count; ++i) env.values[i] = q[i];
    return env;
}

void fill_quad_derivs(const QuadRegistry& registry, const Point& p, const Direction& dir,
                      QuadEnv& env) {
    for (const QuadAccumulator& acc : registry.accumulators) {
        cplx d(0.0, 0.0);
        for (std::size_t j = 0; j < acc.integrands.size() && j < dir.dt.size(); ++j)
            if (dir.dt[j] != 0.0) d += dir.dt[j] * eval_expr(acc.integrands[j], p, &env);
        env.derivs[acc.id] = d;
    }
}

std::vector<cvec> exponent_solutions(const CMatrix& lambda_matrix, bool real_field, double tol) {
    std::vector<cvec> basis = nullspace(lambda_matrix, std::max(tol, 1e-10));
    auto rationalize = [&](cvec h) {
        double min_mag = 0.0;
        for (const cplx& e : h) {
            const double mag = std::abs(e);
            if (mag > 1e-10 && (min_mag == 0.0 || mag < min_mag)) min_mag = mag;
        }
        if (min_mag == 0.0) return h;
        cplx pivot(0.0, 0.0);
        for (const cplx& e : h)
            if (std::abs(std::abs(e) - min_mag) <= 1e-12 * min_mag) { pivot = e; break; }
        if (pivot == cplx(0.0, 0.0)) return h;
        cvec scaled(h.size());
        bool integral = true;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const cplx z = h[i] / pivot;
            const double re = std::rint(z.real());
            const double im = std::rint(z.imag());
            if (std::abs(z.real() - re) > 1e-9 || std::abs(z.imag() - im) > 1e-9 ||
                std::abs(re) > 64.0 || std::abs(im) > 64.0) {
                integral = false;
                break;
            }
            scaled[i] = cplx(re, im);
        }
        return integral ? scaled : h;
    };
    for (cvec& h : basis) {
        h = rationalize(std::move(h));
        if (real_field)
            for (cplx& e : h) e = cplx(e.real(), 0.0);
    }
    return basis;
}

cvec exponent_solution(const CMatrix& lambda_matrix, bool real_field, double tol) {
    std::vector<cvec> basis = exponent_solutions(lambda_matrix, real_field, tol);
    if (basis.empty())
        throw structural_error("exponent_solution: the exponent system has no nontrivial solution");
    return basis.front();
}

std::vector<Point> sample_safe_points(const SystemSpec& spec, const std::vector<Expr>& forms,
                                      std::size_t count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> box(-2.0, 2.0);
    std::vector<Point> out;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 100 * std::max<std::size_t>(count, 1);
    while (out.size() < count) {
        if (++attempts > max_attempts)
            throw domain_error("sample_safe_points: domain too thin for the excluded forms");
        Point p;
        p.t.resize(spec.time_dim());
        p.x.resize(spec.state_dim());
        for (double& v : p.t) v = box(rng);
        for (double& v : p.x) v = box(rng);
        double xmag = 0.0;
        for (double v : p.x) xmag = std::max(xmag, std::abs(v));
        const double margin = 1e-3 * (1.0 + xmag);
        bool ok = true;
        for (const Expr& f : forms) {
            cplx v;
            try {
                v = eval_expr(f, p);
            } catch (const domain_error&) {
                ok = false;
                break;
            }
            if (std::abs(v) <= margin) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(std::move(p));
    }
    return out;
}

PsiChainData psi_chain(const TupleChain& chain, const SystemSpec& spec,
                       const std::vector<Point>& samples, double tol) {
    if (chain.vectors.size() < 2)
        throw input_error("psi_chain: chain must contain at least one generalized vector");
    PsiChainData out;
    out.tuple_index = chain.tuple_index;
    out.direction = chain.direction;
    const std::size_t s = chain.vectors.size();

    std::vector<Expr> lin(s);
    for (std::size_t k = 0; k < s; ++k) lin[k] = state_linform(spec, chain.vectors[k]);
    const Expr inv0 = make_pow(lin[0], cplx(-1.0, 0.0));

    // Forward substitution of the triangular reconstruction system.
    for (std::size_t theta = 1; theta < s; ++theta) {
        std::vector<Expr> terms{lin[theta]};
        for (std::size_t delta = 1; delta < theta; ++delta) {
            const double c = binomial(theta - 1, delta - 1);
            terms.push_back(make_prod(
                {make_const(-c), out.v[delta - 1], lin[theta - delta]}));
        }
        out.v.push_back(make_prod({make_sum(std::move(terms)), inv0}));
    }

    // mu constants measured over the samples.
    const std::size_t dirs = spec.direction_count();
    out.mu.assign(s - 1, cvec(dirs, cplx(0.0, 0.0)));
    double violation = 0.0;
    std::vector<std::vector<cvec>> derivs(s - 1);
    for (std::size_t theta = 0; theta + 1 < s; ++theta) {
        for (const Point& p : samples) derivs[theta].push_back(formal_lie_derivs(out.v[theta], spec, p));
        for (std::size_t j = 0; j < dirs; ++j) {
            cplx mean(0.0, 0.0);
            for (const cvec& d : derivs[theta]) mean += d[j];
            mean /= static_cast<double>(samples.size());
            double dev = 0.0;
            for (const cvec& d : derivs[theta]) dev = std::max(dev, std::abs(d[j] - mean));
            violation = std::max(violation, dev);
            out.mu[theta][j] = cplx(snap_component(mean.real()), snap_component(mean.imag()));
        }
    }
    out.mu_constant_violation = violation;
    const double accept = std::max(tol, 1e-7);
    out.valid = violation <= accept;
    // Chain-direction identities: p_zeta v_1 = 1 and p_zeta v_theta = 0 for theta >= 2.
    if (out.valid) {
        if (std::abs(out.mu[0][chain.direction] - cplx(1.0, 0.0)) > accept) out.valid = false;
        for (std::size_t theta = 1; theta + 1 < s && out.valid; ++theta)
            if (std::abs(out.mu[theta][chain.direction]) > accept) out.valid = false;
    }
    out.is_real = spec.real_field();
    if (out.is_real)
        for (const cvec& nu : chain.vectors)
            if (!vector_real(nu)) out.is_real = false;
    if (out.is_real)
        for (const cvec& row : out.mu)
            if (!vector_real(row)) out.is_real = false;
    return out;
}

IntegralBuilder::IntegralBuilder(const SystemSpec& spec, const CommonEigenData& data,
                                 std::uint64_t seed, double tol)
    : spec_(spec), data_(data), tol_(tol), rng_(seed) {
    for (const TupleChain& chain : data_.chains) {
        const EigenTuple& tuple = data_.tuples[chain.tuple_index];
        if (tuple.conjugate_partner && *tuple.conjugate_partner < chain.tuple_index)
            continue;  // mirror of the representative's chain
        std::vector<Expr> guard{state_linform(spec_, chain.vectors[0])};
        std::vector<Point> samples = sample_safe_points(spec_, guard, 60, rng_);
        PsiChainData psi = psi_chain(chain, spec_, samples, tol_);
        if (!psi.valid)
            notes_.push_back("chain for tuple " + std::to_string(chain.tuple_index) +
                             ": Lie derivatives of the chain functions are not constant "
                             "(violation " + std::to_string(psi.mu_constant_violation) +
                             "); chain integrals suppressed");
        chains_.push_back(std::move(psi));
    }
}

void IntegralBuilder::assemble_blocks() {
    if (blocks_ready_) return;
    blocks_ready_ = true;
    const bool rlin = spec_.kind == SystemKind::rlinear;
    for (std::size_t ti = 0; ti < data_.tuples.size(); ++ti) {
        const EigenTuple& tuple = data_.tuples[ti];
        if (tuple.conjugate_partner && *tuple.conjugate_partner < ti) continue;
        if (rlin || tuple.is_real) {
            Block b;
            b.expr = state_linform(spec_, display_vector(tuple.vector));
            b.column = rlin ? tuple.lambdas : real_parts(tuple.lambdas);
            b.multiplicative = true;
            b.linear_form = true;
            b.excluded = {b.expr};
            b.tuple_index = ti;
            blocks_.push_back(std::move(b));
        } else {
            const cvec dv = display_vector(tuple.vector);
            const Expr re_form = make_linform(real_parts(dv));
            const Expr im_form = make_linform(imag_parts(dv));
            Block pb;
            pb.expr = make_sum({make_pow(re_form, 2.0), make_pow(im_form, 2.0)});
            pb.column.resize(tuple.lambdas.size());
            for (std::size_t j = 0; j < tuple.lambdas.size(); ++j)
                pb.column[j] = 2.0 * tuple.lambdas[j].real();
            pb.multiplicative = true;
            pb.linear_form = false;
            pb.excluded = {pb.expr};
            pb.tuple_index = ti;
            blocks_.push_back(std::move(pb));
            Block ab;
            ab.expr = make_atan2(im_form, re_form);
            ab.column.resize(tuple.lambdas.size());
            for (std::size_t j = 0; j < tuple.lambdas.size(); ++j)
                ab.column[j] = tuple.lambdas[j].imag();
            ab.multiplicative = false;
            ab.linear_form = false;
            ab.excluded = {re_form, atan2_branch_form(real_parts(dv), imag_parts(dv))};
            ab.tuple_index = ti;
            blocks_.push_back(std::move(ab));
        }
    }
    for (const PsiChainData& psi : chains_) {
        if (!psi.valid) continue;
        const TupleChain* tc = nullptr;
        for (const TupleChain& c : data_.chains)
            if (c.tuple_index == psi.tuple_index) { tc = &c; break; }
        const Expr head = state_linform(spec_, tc->vectors[0]);
        for (std::size_t theta = 0; theta < psi.v.size(); ++theta) {
            if (rlin || psi.is_real) {
                Block b;
                b.expr = psi.v[theta];
                b.column = rlin ? psi.mu[theta] : real_parts(psi.mu[theta]);
                b.multiplicative = false;
                b.linear_form = false;
                b.excluded = {head};
                b.tuple_index = psi.tuple_index;
                blocks_.push_back(std::move(b));
            } else {
                Block rb;
                rb.expr = make_re(psi.v[theta]);
                rb.column = real_parts(psi.mu[theta]);
                rb.multiplicative = false;
                rb.linear_form = false;
                rb.excluded = {head};
                rb.tuple_index = psi.tuple_index;
                blocks_.push_back(std::move(rb));
                Block ib;
                ib.expr = make_im(psi.v[theta]);
                ib.column = imag_parts(psi.mu[theta]);
                ib.multiplicative = false;
                ib.linear_form = false;
                ib.excluded = {head};
                ib.tuple_index = psi.tuple_index;
                blocks_.push_back(std::move(ib));
            }
        }
    }
}

FirstIntegral IntegralBuilder::integral_from_solution(const cvec& h) const {
    FirstIntegral f;
    f.complex_valued = spec_.kind == SystemKind::rlinear;
    std::vector<Expr> factors;
    std::vector<Expr> exp_terms;
    bool any_mult = false;
    bool has_chain_block = false;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        if (near_zero(h[k])) continue;
        const Block& b = blocks_[k];
        f.provenance.push_back(b.tuple_index);
        if (!b.multiplicative) has_chain_block = has_chain_block || b.expr->kind != ExprKind::Atan2;
        if (b.multiplicative) {
            any_mult = true;
            const cplx e = h[k];
            const bool integer_exp = is_real_integer(e);
            Expr base = b.expr;
            if (!integer_exp && b.linear_form && spec_.real_field()) base = make_abs(base);
            factors.push_back(make_pow(base, e));
            if (!integer_exp || e.real() < 0.0)
                for (const Expr& g : b.excluded) f.excluded_hyperplanes.push_back(g);
        } else {
            exp_terms.push_back(make_prod({make_const(h[k]), b.expr}));
            for (const Expr& g : b.excluded) f.excluded_hyperplanes.push_back(g);
        }
    }
    if (!any_mult) {
        f.expr = make_sum(std::move(exp_terms));
        f.route = has_chain_block ? "psi_direct" : "eigen_angle";
    } else {
        if (!exp_terms.empty()) factors.push_back(make_exp(make_sum(std::move(exp_terms))));
        f.expr = make_prod(std::move(factors));
        f.route = has_chain_block ? "jordan_product" : "eigen_product";
    }
    // Deduplicate the hyperplane list.
    std::sort(f.excluded_hyperplanes.begin(), f.excluded_hyperplanes.end(),
              [](const Expr& a, const Expr& b2) { return a->text < b2->text; });
    f.excluded_hyperplanes.erase(
        std::unique(f.excluded_hyperplanes.begin(), f.excluded_hyperplanes.end(),
                    [](const Expr& a, const Expr& b2) { return a->text == b2->text; }),
        f.excluded_hyperplanes.end());
    std::sort(f.provenance.begin(), f.provenance.end());
    f.provenance.erase(std::unique(f.provenance.begin(), f.provenance.end()),
                       f.provenance.end());
    return f;
}

std::vector<FirstIntegral> IntegralBuilder::build_autonomous() {
    assemble_blocks();
    std::vector<FirstIntegral> out;
    auto push_unique = [&out](FirstIntegral f) {
        for (const FirstIntegral& g : out)
            if (g.expr->text == f.expr->text) return;
        out.push_back(std::move(f));
    };

    // Zero-eigenvalue tuples give bare linear integrals.
    for (std::size_t ti = 0; ti < data_.tuples.size(); ++ti) {
        const EigenTuple& tuple = data_.tuples[ti];
        bool all_zero = true;
        for (const cplx& l : tuple.lambdas)
            if (!near_zero(l)) all_zero = false;
        if (!all_zero) continue;
        if (!tuple.is_real && spec_.real_field()) continue;
        FirstIntegral f;
        f.expr = state_linform(spec_, display_vector(tuple.vector));
        f.route = "eigen_linear";
        f.complex_valued = !spec_.real_field();
        f.provenance = {ti};
        push_unique(std::move(f));
    }
    // Two tuples sharing every eigenvalue give a ratio.
    for (std::size_t i = 0; i < data_.tuples.size(); ++i) {
        const EigenTuple& a = data_.tuples[i];
        if (!a.is_real && spec_.real_field()) continue;
        for (std::size_t j = i + 1; j < data_.tuples.size(); ++j) {
            const EigenTuple& b = data_.tuples[j];
            if (!b.is_real && spec_.real_field()) continue;
            bool equal = true, nonzero = false;
            for (std::size_t d = 0; d < a.lambdas.size(); ++d) {
                if (std::abs(a.lambdas[d] - b.lambdas[d]) > 1e-10) equal = false;
                if (!near_zero(a.lambdas[d])) nonzero = true;
            }
            if (!equal || !nonzero) continue;
            FirstIntegral f;
            const Expr den = state_linform(spec_, display_vector(b.vector));
            f.expr = make_prod({state_linform(spec_, display_vector(a.vector)),
                                make_pow(den, cplx(-1.0, 0.0))});
            f.route = "eigen_ratio";
            f.complex_valued = !spec_.real_field();
            f.excluded_hyperplanes = {den};
            f.provenance = {i, j};
            push_unique(std::move(f));
        }
    }

    // Global exponent system over every block.
    if (!blocks_.empty()) {
        const std::size_t dirs = spec_.direction_count();
        CMatrix lam(dirs, blocks_.size());
        for (std::size_t k = 0; k < blocks_.size(); ++k)
            for (std::size_t j = 0; j < dirs; ++j) lam.at(j, k) = blocks_[k].column[j];
        for (const cvec& h : exponent_solutions(lam, spec_.real_field(), tol_)) {
            bool trivial = true;
            for (const cplx& e : h)
                if (!near_zero(e)) trivial = false;
            if (trivial) continue;
            push_unique(integral_from_solution(h));
        }
    }
    return out;
}

Expr IntegralBuilder::time_offset_expr(const cvec& coefficients) const {
    // sum_j c_j t_j over the real time coordinates; for rlinear the formal
    // coefficients (c^j, c^{m+j}) combine into the Re z_j / Im z_j axes.
    std::vector<Expr> terms;
    if (spec_.kind != SystemKind::rlinear) {
        for (std::size_t j = 0; j < coefficients.size(); ++j)
            if (!near_zero(coefficients[j]))
                terms.push_back(make_prod({make_const(coefficients[j]), make_var_t(j)}));
    } else {
        const std::size_t m = spec_.m;
        const cplx iu(0.0, 1.0);
        for (std::size_t j = 0; j < m; ++j) {
            const cplx cu = coefficients[j] + coefficients[m + j];
            const cplx cv = iu * (coefficients[j] - coefficients[m + j]);
            if (!near_zero(cu)) terms.push_back(make_prod({make_const(cu), make_var_t(j)}));
            if (!near_zero(cv)) terms.push_back(make_prod({make_const(cv), make_var_t(m + j)}));
        }
    }
    return make_sum(std::move(terms));
}

std::vector<FirstIntegral> IntegralBuilder::build_nonautonomous() {
    assemble_blocks();
    std::vector<FirstIntegral> out;
    const bool rlin = spec_.kind == SystemKind::rlinear;
    for (std::size_t ti = 0; ti < data_.tuples.size(); ++ti) {
        const EigenTuple& tuple = data_.tuples[ti];
        if (tuple.conjugate_partner && *tuple.conjugate_partner < ti) continue;
        bool all_zero = true;
        for (const cplx& l : tuple.lambdas)
            if (!near_zero(l)) all_zero = false;
        if (all_zero) continue;  // already autonomous and linear
        if (rlin || tuple.is_real) {
            cvec neg(tuple.lambdas.size());
            for (std::size_t j = 0; j < neg.size(); ++j) neg[j] = -tuple.lambdas[j];
            FirstIntegral f;
            f.expr = make_prod({state_linform(spec_, display_vector(tuple.vector)),
                                make_exp(time_offset_expr(neg))});
            f.autonomous = false;
            f.complex_valued = rlin;
            f.route = "nonauto_linear";
            f.provenance = {ti};
            out.push_back(std::move(f));
        } else {
            const cvec dv = display_vector(tuple.vector);
            const Expr re_form = make_linform(real_parts(dv));
            const Expr im_form = make_linform(imag_parts(dv));
            cvec neg2(tuple.lambdas.size());
            bool rotating = false;
            for (std::size_t j = 0; j < neg2.size(); ++j) {
                neg2[j] = cplx(-2.0 * tuple.lambdas[j].real(), 0.0);
                if (tuple.lambdas[j].imag() != 0.0) rotating = true;
            }
            FirstIntegral f1;
            f1.expr = make_prod({make_sum({make_pow(re_form, 2.0), make_pow(im_form, 2.0)}),
                                 make_exp(time_offset_expr(neg2))});
            f1.autonomous = false;
            f1.route = "nonauto_quadratic";
            f1.provenance = {ti};
            out.push_back(std::move(f1));
            if (rotating) {
                cvec negim(tuple.lambdas.size());
                for (std::size_t j = 0; j < negim.size(); ++j)
                    negim[j] = cplx(-tuple.lambdas[j].imag(), 0.0);
                FirstIntegral f2;
                f2.expr = make_sum({make_atan2(im_form, re_form), time_offset_expr(negim)});
                f2.autonomous = false;
                f2.route = "nonauto_angle";
                f2.excluded_hyperplanes = {
                    re_form, atan2_branch_form(real_parts(dv), imag_parts(dv))};
                f2.provenance = {ti};
                out.push_back(std::move(f2));
            }
        }
    }
    for (const PsiChainData& psi : chains_) {
        if (!psi.valid) continue;
        const TupleChain* tc = nullptr;
        for (const TupleChain& c : data_.chains)
            if (c.tuple_index == psi.tuple_index) { tc = &c; break; }
        const Expr head = state_linform(spec_, tc->vectors[0]);
        for (std::size_t theta = 0; theta < psi.v.size(); ++theta) {
            if (rlin || psi.is_real) {
                cvec neg(psi.mu[theta].size());
                for (std::size_t j = 0; j < neg.size(); ++j) neg[j] = -psi.mu[theta][j];
                FirstIntegral f;
                f.expr = make_sum({psi.v[theta], time_offset_expr(neg)});
                f.autonomous = false;
                f.complex_valued = rlin;
                f.route = "nonauto_chain";
                f.excluded_hyperplanes = {head};
                f.provenance = {psi.tuple_index};
                out.push_back(std::move(f));
            } else {
                cvec negr(psi.mu[theta].size()), negi(psi.mu[theta].size());
                for (std::size_t j = 0; j < negr.size(); ++j) {
                    negr[j] = cplx(-psi.mu[theta][j].real(), 0.0);
                    negi[j] = cplx(-psi.mu[theta][j].imag(), 0.0);
                }
                FirstIntegral fr;
                fr.expr = make_sum({make_re(psi.v[theta]), time_offset_expr(negr)});
                fr.autonomous = false;
                fr.route = "nonauto_chain";
                fr.excluded_hyperplanes = {head};
                fr.provenance = {psi.tuple_index};
                out.push_back(std::move(fr));
                FirstIntegral fi;
                fi.expr = make_sum({make_im(psi.v[theta]), time_offset_expr(negi)});
                fi.autonomous = false;
                fi.route = "nonauto_chain";
                fi.excluded_hyperplanes = {head};
                fi.provenance = {psi.tuple_index};
                out.push_back(std::move(fi));
            }
        }
    }
    return out;
}

std::vector<FirstIntegral> IntegralBuilder::build_nonhomogeneous() {
    if (!spec_.has_forcing())
        throw input_error("build_nonhomogeneous: the system carries no forcing");
    assemble_blocks();
    std::vector<FirstIntegral> out;
    const std::size_t m = spec_.m;

    auto phi_expr = [&](const cvec& lambdas) {
        cvec neg(lambdas.size());
        for (std::size_t j = 0; j < lambdas.size(); ++j) neg[j] = -lambdas[j];
        return make_exp(time_offset_expr(neg));
    };
    auto forcing_dot = [&](const cvec& nu, std::size_t j) {
        std::vector<Expr> terms;
        for (std::size_t i = 0; i < spec_.n; ++i)
            if (!near_zero(nu[i]))
                terms.push_back(make_prod({make_const(nu[i]), spec_.forcing[j].components[i]}));
        return make_sum(std::move(terms));
    };

    auto emit_real_or_pair = [&](const Expr& fc, bool data_real, const std::string& route,
                                 std::vector<Expr> excluded, std::size_t ti) {
        if (data_real) {
            FirstIntegral f;
            f.expr = fc;
            f.autonomous = false;
            f.route = route;
            f.excluded_hyperplanes = excluded;
            f.provenance = {ti};
            out.push_back(std::move(f));
        } else {
            FirstIntegral fr;
            fr.expr = make_re(fc);
            fr.autonomous = false;
            fr.route = route;
            fr.excluded_hyperplanes = excluded;
            fr.provenance = {ti};
            out.push_back(std::move(fr));
            FirstIntegral fi;
            fi.expr = make_im(fc);
            fi.autonomous = false;
            fi.route = route;
            fi.excluded_hyperplanes = excluded;
            fi.provenance = {ti};
            out.push_back(std::move(fi));
        }
    };

    // Eigenvector integrals with one accumulator each.
    std::vector<bool> tuple_has_chain(data_.tuples.size(), false);
    for (const PsiChainData& psi : chains_)
        if (psi.valid) tuple_has_chain[psi.tuple_index] = true;

    for (std::size_t ti = 0; ti < data_.tuples.size(); ++ti) {
        const EigenTuple& tuple = data_.tuples[ti];
        if (tuple.conjugate_partner && *tuple.conjugate_partner < ti) continue;
        if (tuple_has_chain[ti]) continue;  // covered by the chain recursion below
        const Expr phi = phi_expr(tuple.lambdas);
        const cvec dv = display_vector(tuple.vector);
        std::vector<Expr> integrands(m);
        for (std::size_t j = 0; j < m; ++j)
            integrands[j] = make_prod({forcing_dot(dv, j), phi});
        const std::size_t id = registry_.add(std::move(integrands));
        const Expr fc = make_sub(make_prod({state_linform(spec_, dv), phi}),
                                 make_quadrature(id));
        emit_real_or_pair(fc, tuple.is_real, tuple.is_real ? "forced_linear" : "forced_pair",
                          {}, ti);
    }

    // Chain recursion: K and C accumulators feeding the stacked integrals.
    for (const PsiChainData& psi : chains_) {
        if (!psi.valid) continue;
        const TupleChain* tc = nullptr;
        for (const TupleChain& c : data_.chains)
            if (c.tuple_index == psi.tuple_index) { tc = &c; break; }
        const EigenTuple& tuple = data_.tuples[psi.tuple_index];
        const std::size_t s = tc->vectors.size();
        const Expr phi = phi_expr(tuple.lambdas);
        const bool data_real = tuple.is_real && psi.is_real;
        const cplx scale = display_scale(tc->vectors[0]);
        std::vector<cvec> chain_vecs;
        for (const cvec& v : tc->vectors) chain_vecs.push_back(scale * v);
        auto mu_of = [&](std::size_t q, std::size_t j) {  // mu_0 = lambda
            return q == 0 ? tuple.lambdas[j] : psi.mu[q - 1][j];
        };

        std::vector<std::size_t> c_ids(s);
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> k_ids;
        {
            std::vector<Expr> integrands(m);
            for (std::size_t j = 0; j < m; ++j)
                integrands[j] = make_prod({forcing_dot(chain_vecs[0], j), phi});
            c_ids[0] = registry_.add(std::move(integrands));
        }
        std::vector<Expr> f_exprs(s);
        f_exprs[0] = make_sub(make_prod({state_linform(spec_, chain_vecs[0]), phi}),
                              make_quadrature(c_ids[0]));
        emit_real_or_pair(f_exprs[0], data_real, data_real ? "forced_linear" : "forced_pair",
                          {}, psi.tuple_index);

        for (std::size_t theta = 1; theta < s; ++theta) {
            for (std::size_t tau = 1; tau <= theta; ++tau) {
                std::vector<Expr> integrands(m);
                for (std::size_t j = 0; j < m; ++j) {
                    std::vector<Expr> terms;
                    const cplx lead = binomial(theta, tau - 1) * mu_of(theta - tau + 1, j);
                    if (!near_zero(lead)) terms.push_back(make_const(lead));
                    for (std::size_t delta = 1; delta + tau <= theta; ++delta) {
                        const cplx w = binomial(theta, delta) * mu_of(delta, j);
                        if (near_zero(w)) continue;
                        terms.push_back(make_prod(
                            {make_const(w),
                             make_quadrature(k_ids.at({theta - delta, tau - 1}))}));
                    }
                    integrands[j] = make_sum(std::move(terms));
                }
                k_ids[{theta, tau - 1}] = registry_.add(std::move(integrands));
            }
            {
                std::vector<Expr> integrands(m);
                for (std::size_t j = 0; j < m; ++j) {
                    std::vector<Expr> terms{make_prod({forcing_dot(chain_vecs[theta], j), phi})};
                    for (std::size_t tau = 1; tau <= theta; ++tau) {
                        const cplx w = binomial(theta, tau) * mu_of(tau, j);
                        if (near_zero(w)) continue;
                        terms.push_back(
                            make_prod({make_const(w), make_quadrature(c_ids[theta - tau])}));
                    }
                    integrands[j] = make_sum(std::move(terms));
                }
                c_ids[theta] = registry_.add(std::move(integrands));
            }
            std::vector<Expr> terms{make_prod({state_linform(spec_, chain_vecs[theta]), phi})};
            for (std::size_t tau = 1; tau <= theta; ++tau)
                terms.push_back(make_neg(make_prod(
                    {make_quadrature(k_ids.at({theta, tau - 1})), f_exprs[tau - 1]})));
            terms.push_back(make_neg(make_quadrature(c_ids[theta])));
            f_exprs[theta] = make_sum(std::move(terms));
            emit_real_or_pair(f_exprs[theta], data_real, "forced_chain", {}, psi.tuple_index);
        }
    }
    return out;
}

std::vector<std::vector<double>> gradient_rows(const FirstIntegral& f, const SystemSpec& spec,
                                               const Point& p, const QuadRegistry* registry,
                                               const QuadEnv* base_env, bool include_time) {
    const std::size_t td = include_time ? spec.time_dim() : 0;
    const std::size_t xd = spec.state_dim();
    const bool quad_bearing = contains_quadrature(f.expr);
    if (quad_bearing && (!registry || !base_env))
        throw input_error("gradient_rows: quadrature environment required");
    std::vector<cplx> grad(td + xd, cplx(0.0, 0.0));
    QuadEnv local;
    if (quad_bearing) local = *base_env;
    for (std::size_t c = 0; c < td + xd; ++c) {
        Direction dir;
        dir.dt.assign(spec.time_dim(), 0.0);
        dir.dx.assign(xd, 0.0);
        if (c < td) dir.dt[c] = 1.0;
        else dir.dx[c - td] = 1.0;
        if (quad_bearing) fill_quad_derivs(*registry, p, dir, local);
        grad[c] = eval_dual(f.expr, p, dir, quad_bearing ? &local : nullptr).deriv;
    }
    std::vector<std::vector<double>> rows;
    std::vector<double> re(td + xd), im(td + xd);
    bool has_im = false;
    for (std::size_t c = 0; c < td + xd; ++c) {
        re[c] = grad[c].real();
        im[c] = grad[c].imag();
        if (std::abs(im[c]) > 1e-12) has_im = true;
    }
    rows.push_back(std::move(re));
    if (f.complex_valued && has_im) rows.push_back(std::move(im));
    return rows;
}

AssemblyResult assemble_general_integral(const std::vector<FirstIntegral>& pool,
                                         const SystemSpec& spec, const QuadRegistry& registry,
                                         std::uint64_t seed, double tol) {
    AssemblyResult result;
    if (pool.empty()) {
        result.note = "empty candidate pool";
        return result;
    }
    std::map<std::string, int> priority{
        {"eigen_linear", 0},  {"eigen_product", 1}, {"eigen_ratio", 1},  {"eigen_angle", 2},
        {"jordan_product", 3}, {"psi_direct", 3},   {"nonauto_linear", 4},
        {"nonauto_quadratic", 5}, {"nonauto_angle", 5}, {"nonauto_chain", 6},
        {"forced_linear", 0}, {"forced_pair", 1},   {"forced_chain", 2}};
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pool[a].autonomous != pool[b].autonomous) return pool[a].autonomous;
        const int pa = priority.count(pool[a].route) ? priority.at(pool[a].route) : 9;
        const int pb = priority.count(pool[b].route) ? priority.at(pool[b].route) : 9;
        if (pa != pb) return pa < pb;
        return a < b;
    });

    std::vector<Expr> forms;
    for (const FirstIntegral& f : pool)
        for (const Expr& g : f.excluded_hyperplanes) forms.push_back(g);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const Point p = sample_safe_points(spec, forms, 1, rng).front();
    QuadEnv env;
    if (!registry.accumulators.empty()) env = quad_env_at(registry, spec, p.t);

    const double rank_tol = std::max(tol, 1e-8);
    const std::size_t auto_target =
        spec.state_dim() >= spec.time_dim() ? spec.state_dim() - spec.time_dim() : 0;
    const std::size_t total_target = spec.state_dim();

    // rows normalized to unit sup-norm so wildly different integral scales
    // cannot mask one another in the pivot test
    auto rank_of = [&](const std::vector<std::vector<double>>& rows) -> std::size_t {
        if (rows.empty()) return 0;
        CMatrix mat(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double mag = 0.0;
            for (double v : rows[r]) mag = std::max(mag, std::abs(v));
            if (!std::isfinite(mag)) return 0;
            const double inv = mag > 0.0 ? 1.0 / mag : 1.0;
            for (std::size_t c = 0; c < rows[0].size(); ++c) mat.at(r, c) = inv * rows[r][c];
        }
        return rank(mat, rank_tol);
    };

    // Phase 1: autonomous candidates, x-gradients only. The generic count for
    // a solvable system is state_dim - time_dim, but degenerate spectra can
    // legitimately exceed it; the rank test is the arbiter.
    (void)auto_target;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> chosen;
    std::size_t current = 0;
    for (std::size_t idx : order) {
        const FirstIntegral& f = pool[idx];
        if (!f.autonomous) continue;
        std::vector<std::vector<double>> cand;
        try {
            cand = gradient_rows(f, spec, p, &registry, &env, /*include_time=*/false);
        } catch (const domain_error&) {
            continue;
        } catch (const input_error&) {
            continue;
        }
        std::vector<std::vector<double>> trial = rows;
        for (auto& r : cand) trial.push_back(r);
        const std::size_t new_rank = rank_of(trial);
        if (new_rank > current) {
            rows = std::move(trial);
            current = new_rank;
            chosen.push_back(idx);
        }
    }

    // Phase 2: full (t, x) gradients, topping up with nonautonomous candidates.
    rows.clear();
    std::vector<std::size_t> selected;
    current = 0;
    auto try_add = [&](std::size_t idx) {
        std::vector<std::vector<double>> cand;
        try {
            cand = gradient_rows(pool[idx], spec, p, &registry, &env, /*include_time=*/true);
        } catch (const domain_error&) {
            return false;
        } catch (const input_error&) {
            return false;
        }
        std::vector<std::vector<double>> trial = rows;
        for (auto& r : cand) trial.push_back(r);
        const std::size_t new_rank = rank_of(trial);
        if (new_rank > current) {
            rows = std::move(trial);
            current = new_rank;
            selected.push_back(idx);
            return true;
        }
        return false;
    };
    for (std::size_t idx : chosen) try_add(idx);
    for (std::size_t idx : order) {
        if (current >= total_target) break;
        if (pool[idx].autonomous) continue;
        try_add(idx);
    }
    result.independence_rank = current;
    std::sort(selected.begin(), selected.end());
    for (std::size_t idx : selected) {
        if (pool[idx].autonomous) ++result.autonomous_count;
        result.selected.push_back(pool[idx]);
    }
    if (current < total_target)
        result.note = "candidate pool reaches rank " + std::to_string(current) + " of target " +
                      std::to_string(total_target);
    return result;
}

} // namespace firstint
