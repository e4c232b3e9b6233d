#include "firstint/system.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace firstint {

using json = nlohmann::json;

std::string to_string(SystemKind k) {
    switch (k) {
        case SystemKind::ode: return "ode";
        case SystemKind::total: return "total";
        case SystemKind::rlinear: return "rlinear";
    }
    return "?";
}

namespace {

bool references_state(const Expr& e) {
    if (e->kind == ExprKind::VarX || e->kind == ExprKind::LinForm) return true;
    for (const Expr& c : e->children)
        if (references_state(c)) return true;
    return false;
}

cplx parse_scalar(const json& v, const std::string& where) {
    if (v.is_number()) {
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw input_error(where + ": non-finite number");
        return {d, 0.0};
    }
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        const double re = v[0].get<double>();
        const double im = v[1].get<double>();
        if (!std::isfinite(re) || !std::isfinite(im))
            throw input_error(where + ": non-finite number");
        return {re, im};
    }
    throw input_error(where + ": expected number or [re,im]");
}

CMatrix parse_matrix(const json& rows, std::size_t nr, std::size_t nc, bool require_real,
                     const std::string& where) {
    if (!rows.is_array() || rows.size() != nr)
        throw input_error(where + ": expected " + std::to_string(nr) + " rows");
    CMatrix m(nr, nc);
    for (std::size_t i = 0; i < nr; ++i) {
        const json& row = rows[i];
        const std::string rw = where + "/" + std::to_string(i);
        if (!row.is_array() || row.size() != nc)
            throw input_error(rw + ": expected " + std::to_string(nc) + " entries");
        for (std::size_t j = 0; j < nc; ++j) {
            const cplx e = parse_scalar(row[j], rw + "/" + std::to_string(j));
            if (require_real && e.imag() != 0.0)
                throw input_error(rw + "/" + std::to_string(j) +
                                  ": real system with complex matrix entry");
            m.at(i, j) = e;
        }
    }
    return m;
}

SystemSpec parse_spec_json(const json& doc) {
    if (!doc.is_object()) throw input_error("/: expected a JSON object");

    SystemSpec spec;
    const std::string kind = doc.value("kind", std::string{});
    if (kind == "ode") spec.kind = SystemKind::ode;
    else if (kind == "total") spec.kind = SystemKind::total;
    else if (kind == "rlinear") spec.kind = SystemKind::rlinear;
    else throw input_error("/kind: expected \"ode\", \"total\" or \"rlinear\"");

    if (!doc.contains("n") || !doc["n"].is_number_integer() || doc["n"].get<long>() < 1)
        throw input_error("/n: positive integer required");
    if (!doc.contains("m") || !doc["m"].is_number_integer() || doc["m"].get<long>() < 1)
        throw input_error("/m: positive integer required");
    spec.n = doc["n"].get<std::size_t>();
    spec.m = doc["m"].get<std::size_t>();
    if (spec.kind == SystemKind::ode && spec.m != 1)
        throw input_error("/m: ode systems have m = 1");
    if (doc.contains("tol")) {
        if (!doc["tol"].is_number() || doc["tol"].get<double>() <= 0.0)
            throw input_error("/tol: positive number required");
        spec.tol = doc["tol"].get<double>();
    }

    if (spec.kind == SystemKind::rlinear) {
        if (doc.contains("matrices"))
            throw input_error("/matrices: rlinear systems use rlinear_coeffs");
        if (!doc.contains("rlinear_coeffs"))
            throw input_error("/rlinear_coeffs: required for rlinear systems");
        const json& tensor = doc["rlinear_coeffs"];
        if (!tensor.is_array() || tensor.size() != spec.n)
            throw input_error("/rlinear_coeffs: expected " + std::to_string(spec.n) +
                              " leading entries");
        RLinearRaw raw;
        raw.n = spec.n;
        raw.m = spec.m;
        raw.coeffs.assign(spec.n, std::vector<cvec>(2 * spec.m, cvec(2 * spec.n)));
        for (std::size_t tau = 0; tau < spec.n; ++tau) {
            const json& per_dir = tensor[tau];
            const std::string wt = "/rlinear_coeffs/" + std::to_string(tau);
            if (!per_dir.is_array() || per_dir.size() != 2 * spec.m)
                throw input_error(wt + ": expected " + std::to_string(2 * spec.m) + " rows");
            for (std::size_t k = 0; k < 2 * spec.m; ++k) {
                const json& row = per_dir[k];
                const std::string wk = wt + "/" + std::to_string(k);
                if (!row.is_array() || row.size() != 2 * spec.n)
                    throw input_error(wk + ": expected " + std::to_string(2 * spec.n) +
                                      " coefficients");
                for (std::size_t rho = 0; rho < 2 * spec.n; ++rho)
                    raw.coeffs[tau][k][rho] =
                        parse_scalar(row[rho], wk + "/" + std::to_string(rho));
            }
        }
        if (doc.contains("forcing"))
            throw input_error("/forcing: not supported for rlinear systems");
        SystemSpec embedded = embed_rlinear(raw, spec.tol);
        embedded.tol = spec.tol;
        return embedded;
    }

    if (!doc.contains("matrices"))
        throw input_error("/matrices: required");
    const json& mats = doc["matrices"];
    if (!mats.is_array() || mats.size() != spec.m)
        throw input_error("/matrices: expected " + std::to_string(spec.m) + " matrices");
    for (std::size_t j = 0; j < spec.m; ++j)
        spec.flow.push_back(parse_matrix(mats[j], spec.n, spec.n, /*require_real=*/true,
                                         "/matrices/" + std::to_string(j)));

    if (doc.contains("forcing")) {
        const json& fo = doc["forcing"];
        if (!fo.is_array() || fo.size() != spec.m)
            throw input_error("/forcing: expected one component list per independent variable");
        for (std::size_t j = 0; j < spec.m; ++j) {
            const json& comp = fo[j];
            const std::string wf = "/forcing/" + std::to_string(j);
            if (!comp.is_array() || comp.size() != spec.n)
                throw input_error(wf + ": expected " + std::to_string(spec.n) + " expressions");
            ForcingTerm term;
            for (std::size_t i = 0; i < spec.n; ++i) {
                if (!comp[i].is_string())
                    throw input_error(wf + "/" + std::to_string(i) + ": expression string required");
                Expr e;
                try {
                    e = parse_expr(comp[i].get<std::string>());
                } catch (const input_error& err) {
                    throw input_error(wf + "/" + std::to_string(i) + ": " + err.what());
                }
                if (references_state(e))
                    throw input_error(wf + "/" + std::to_string(i) +
                                      ": forcing must not reference state variables");
                term.components.push_back(std::move(e));
            }
            spec.forcing.push_back(std::move(term));
        }
    }
    return spec;
}

} // namespace

SystemSpec parse_spec(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw input_error(std::string("malformed JSON: ") + e.what());
    }
    return parse_spec_json(doc);
}

SystemSpec parse_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_spec(ss.str());
}

SystemSpec embed_rlinear(const RLinearRaw& raw, double tol) {
    if (raw.coeffs.size() != raw.n) throw input_error("embed_rlinear: coefficient shape");
    for (const auto& per_dir : raw.coeffs) {
        if (per_dir.size() != 2 * raw.m) throw input_error("embed_rlinear: coefficient shape");
        for (const cvec& row : per_dir)
            if (row.size() != 2 * raw.n) throw input_error("embed_rlinear: coefficient shape");
    }
    SystemSpec spec;
    spec.kind = SystemKind::rlinear;
    spec.n = raw.n;
    spec.m = raw.m;
    spec.tol = tol;
    const std::size_t n = raw.n, m = raw.m;

    // Column tau of A_j is the coefficient vector of the tau-th direction form;
    // columns n..2n-1 hold the conjugated vector with its halves swapped.
    auto swapped_conj = [n](const cvec& a) {
        cvec r(2 * n);
        for (std::size_t rho = 0; rho < n; ++rho) {
            r[rho] = std::conj(a[n + rho]);
            r[n + rho] = std::conj(a[rho]);
        }
        return r;
    };
    for (std::size_t k = 0; k < 2 * m; ++k) {
        const std::size_t partner = k < m ? k + m : k - m;
        CMatrix op(2 * n, 2 * n);
        for (std::size_t tau = 0; tau < n; ++tau) {
            for (std::size_t rho = 0; rho < 2 * n; ++rho) op.at(rho, tau) = raw.coeffs[tau][k][rho];
            const cvec bar = swapped_conj(raw.coeffs[tau][partner]);
            for (std::size_t rho = 0; rho < 2 * n; ++rho) op.at(rho, n + tau) = bar[rho];
        }
        op.require_finite("embed_rlinear");
        spec.flow.push_back(transpose(op));
    }
    return spec;
}

SolvabilityVerdict frobenius_check(const SystemSpec& spec, double tol) {
    SolvabilityVerdict verdict;
    for (std::size_t j = 0; j < spec.flow.size(); ++j) {
        for (std::size_t z = j + 1; z < spec.flow.size(); ++z) {
            const CMatrix comm = spec.flow[z] * spec.flow[j] - spec.flow[j] * spec.flow[z];
            const double denom = 1.0 + inf_norm(spec.flow[j]) * inf_norm(spec.flow[z]);
            const double res = inf_norm(comm) / denom;
            if (res > verdict.max_commutator_residual) {
                verdict.max_commutator_residual = res;
                verdict.offending_pair = {j, z};
                verdict.defect_witness = comm;
            }
        }
    }
    verdict.solvable = verdict.max_commutator_residual <= tol;
    if (verdict.solvable) {
        verdict.offending_pair.reset();
        verdict.defect_witness.reset();
    }
    return verdict;
}

namespace {

std::vector<double> eval_forcing(const SystemSpec& spec, std::size_t j,
                                 const std::vector<double>& t) {
    Point p;
    p.t = t;
    std::vector<double> f(spec.n, 0.0);
    for (std::size_t i = 0; i < spec.n; ++i)
        f[i] = eval_expr(spec.forcing[j].components[i], p).real();
    return f;
}

} // namespace

double forcing_compat_check(const SystemSpec& spec,
                            const std::vector<std::vector<double>>& sample_grid, double tol) {
    (void)tol;
    if (!spec.has_forcing()) throw input_error("forcing_compat_check: no forcing present");
    if (spec.kind == SystemKind::ode) return 0.0;
    double worst = 0.0;
    for (const std::vector<double>& t : sample_grid) {
        if (t.size() != spec.time_dim())
            throw input_error("forcing_compat_check: grid point dimension mismatch");
        double tmag = 0.0;
        for (double v : t) tmag = std::max(tmag, std::abs(v));
        const double h = 1e-6 * (1.0 + tmag);
        auto partial = [&](std::size_t j, std::size_t wrt) {
            std::vector<double> tp = t, tm = t;
            tp[wrt] += h;
            tm[wrt] -= h;
            const std::vector<double> fp = eval_forcing(spec, j, tp);
            const std::vector<double> fm = eval_forcing(spec, j, tm);
            std::vector<double> d(spec.n);
            for (std::size_t i = 0; i < spec.n; ++i) d[i] = (fp[i] - fm[i]) / (2.0 * h);
            return d;
        };
        for (std::size_t j = 0; j < spec.m; ++j) {
            const std::vector<double> fj = eval_forcing(spec, j, t);
            for (std::size_t z = j + 1; z < spec.m; ++z) {
                const std::vector<double> fz = eval_forcing(spec, z, t);
                const std::vector<double> dj_z = partial(j, z);  // d f_j / d t_z
                const std::vector<double> dz_j = partial(z, j);
                for (std::size_t i = 0; i < spec.n; ++i) {
                    double bz_fj = 0.0, bj_fz = 0.0;
                    for (std::size_t c = 0; c < spec.n; ++c) {
                        bz_fj += spec.flow[z].at(i, c).real() * fj[c];
                        bj_fz += spec.flow[j].at(i, c).real() * fz[c];
                    }
                    const double r = dj_z[i] - bz_fj - dz_j[i] + bj_fz;
                    worst = std::max(worst, std::abs(r));
                }
            }
        }
    }
    return worst;
}

std::vector<double> direction_field(const SystemSpec& spec, std::size_t j, const Point& p,
                                    bool include_forcing) {
    const std::size_t dim = spec.state_dim();
    if (p.x.size() != dim) throw input_error("direction_field: state dimension mismatch");
    std::vector<double> out(dim, 0.0);
    if (spec.kind != SystemKind::rlinear) {
        const CMatrix& mj = spec.flow.at(j);
        for (std::size_t i = 0; i < dim; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < dim; ++c) s += mj.at(i, c).real() * p.x[c];
            out[i] = s;
        }
        if (include_forcing && spec.has_forcing()) {
            const std::vector<double> f = eval_forcing(spec, j, p.t);
            for (std::size_t i = 0; i < dim; ++i) out[i] += f[i];
        }
        return out;
    }

    // rlinear: x = (Re w, Im w); direction j < m is Re z_j with generator
    // x_j + x_{m+j}, direction m + j is Im z_j with generator i (x_j - x_{m+j}).
    const std::size_t n = spec.n, m = spec.m;
    if (j >= 2 * m) throw input_error("direction_field: direction out of range");
    const bool is_real_axis = j < m;
    const std::size_t base = is_real_axis ? j : j - m;
    cvec gamma(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        gamma[i] = cplx(p.x[i], p.x[n + i]);
        gamma[n + i] = std::conj(gamma[i]);
    }
    const cvec g1 = matvec(spec.flow[base], gamma);
    const cvec g2 = matvec(spec.flow[base + m], gamma);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx wprime = is_real_axis ? g1[i] + g2[i] : cplx(0.0, 1.0) * (g1[i] - g2[i]);
        out[i] = wprime.real();
        out[n + i] = wprime.imag();
    }
    return out;
}

cplx lie_derivative(const Expr& e, const SystemSpec& spec, std::size_t j, const Point& p,
                    const QuadEnv* quad, bool include_forcing) {
    Direction dir;
    dir.dt.assign(spec.time_dim(), 0.0);
    if (j >= spec.time_dim()) throw input_error("lie_derivative: direction out of range");
    dir.dt[j] = 1.0;
    dir.dx = direction_field(spec, j, p, include_forcing);
    return eval_dual(e, p, dir, quad).deriv;
}

cvec gamma_linform_coeffs(const cvec& nu) {
    const std::size_t n = nu.size() / 2;
    cvec c(2 * n);
    const cplx i_unit(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = nu[k] + nu[n + k];
        c[n + k] = i_unit * (nu[k] - nu[n + k]);
    }
    return c;
}

} // namespace firstint
