#include "firstint/spectral.hpp"

#include "firstint/builder.hpp"

#include <algorithm>
#include <cmath>

namespace firstint {

namespace {

double snap_component(double v) {
    const double r = std::rint(v);
    if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) return r;
    const double h = std::rint(2.0 * v) / 2.0;
    if (std::abs(v - h) <= 1e-9 * std::max(1.0, std::abs(v))) return h;
    return v;
}

cvec snapped(const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        r[i] = cplx(snap_component(v[i].real()), snap_component(v[i].imag()));
    return r;
}

bool vector_is_real(const cvec& v) {
    double scale = inf_norm(v);
    for (const cplx& e : v)
        if (std::abs(e.imag()) > 1e-9 * std::max(1.0, scale)) return false;
    return true;
}

cvec real_part_only(const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = cplx(v[i].real(), 0.0);
    return r;
}

/// Coordinates of w in the span of basis (columns); throws structural_error
/// when w leaves the span beyond tol.
cvec coords_in_span(const std::vector<cvec>& basis, const cvec& w, double tol) {
    const std::size_t n = w.size();
    CMatrix m(n, basis.size());
    for (std::size_t c = 0; c < basis.size(); ++c)
        for (std::size_t r = 0; r < n; ++r) m.at(r, c) = basis[c][r];
    return solve_min_norm(m, w, tol);
}

struct SplitOutcome {
    std::vector<cvec> vectors;
    bool warning = false;
};

/// Recursively intersects the candidate eigenspace with eigenspaces of the
/// restrictions of the remaining matrices.
SplitOutcome split_eigenspace(const std::vector<cvec>& basis, const std::vector<CMatrix>& ops,
                              std::size_t next, double tol) {
    SplitOutcome out;
    if (basis.empty()) return out;
    if (next >= ops.size() || basis.size() == 1) {
        out.vectors = basis;
        return out;
    }
    const std::size_t k = basis.size();
    CMatrix restriction(k, k);
    for (std::size_t c = 0; c < k; ++c) {
        const cvec image = matvec(ops[next], basis[c]);
        cvec coords;
        try {
            coords = coords_in_span(basis, image, tol);
        } catch (const structural_error&) {
            // The subspace is not invariant: no common eigenvectors here.
            out.warning = true;
            return out;
        }
        for (std::size_t r = 0; r < k; ++r) restriction.at(r, c) = coords[r];
    }
    EigenStructure es = eigen_structure(restriction, tol);
    for (std::size_t e = 0; e < es.eigenvalues.size(); ++e) {
        CMatrix shifted = restriction;
        for (std::size_t i = 0; i < k; ++i) shifted.at(i, i) -= es.eigenvalues[e].value;
        const std::vector<cvec> sub = nullspace(shifted, std::max(tol, 1e-9));
        if (sub.size() < es.eigenvalues[e].algebraic_multiplicity) out.warning = true;
        std::vector<cvec> refined;
        for (const cvec& coeff : sub) {
            cvec v(basis[0].size(), cplx(0.0, 0.0));
            for (std::size_t c = 0; c < k; ++c) v = v + coeff[c] * basis[c];
            refined.push_back(std::move(v));
        }
        SplitOutcome deeper = split_eigenspace(refined, ops, next + 1, tol);
        out.warning = out.warning || deeper.warning;
        for (cvec& v : deeper.vectors) out.vectors.push_back(std::move(v));
    }
    return out;
}

} // namespace

const TupleChain* CommonEigenData::chain_for(std::size_t tuple_index) const {
    for (const TupleChain& c : chains)
        if (c.tuple_index == tuple_index) return &c;
    return nullptr;
}

std::size_t select_pivot_matrix(const std::vector<EigenStructure>& eigen) {
    if (eigen.empty()) throw input_error("select_pivot_matrix: empty family");
    std::size_t best = 0;
    std::size_t best_count = eigen[0].divisor_count();
    for (std::size_t j = 1; j < eigen.size(); ++j) {
        const std::size_t c = eigen[j].divisor_count();
        if (c < best_count) {
            best = j;
            best_count = c;
        }
    }
    return best;
}

std::vector<EigenStructure> family_eigen_structures(const SystemSpec& spec, double tol) {
    std::vector<EigenStructure> out;
    for (std::size_t j = 0; j < spec.flow.size(); ++j)
        out.push_back(eigen_structure(spec.op_matrix(j), tol));
    return out;
}

CommonEigenData common_eigenvectors(const SystemSpec& spec,
                                    const std::vector<EigenStructure>& eigen, double tol) {
    CommonEigenData data;
    data.per_matrix = eigen;
    data.pivot = select_pivot_matrix(eigen);

    std::vector<CMatrix> ops;
    for (std::size_t j = 0; j < spec.flow.size(); ++j) ops.push_back(spec.op_matrix(j));
    const std::size_t dim = ops[data.pivot].rows();

    // Matrices tested during the split, pivot excluded, original order otherwise.
    std::vector<CMatrix> rest;
    for (std::size_t j = 0; j < ops.size(); ++j)
        if (j != data.pivot) rest.push_back(ops[j]);

    const double rank_tol = std::max(tol, 1e-9);
    for (const EigenvalueInfo& info : eigen[data.pivot].eigenvalues) {
        CMatrix shifted = ops[data.pivot];
        for (std::size_t i = 0; i < dim; ++i) shifted.at(i, i) -= info.value;
        std::vector<cvec> basis = nullspace(shifted, rank_tol);
        SplitOutcome split = split_eigenspace(basis, rest, 0, tol);
        data.split_warning = data.split_warning || split.warning;
        for (cvec& v : split.vectors) {
            cvec nu = snapped(normalize_leading(v));
            // Eigenvalue per member, read off at the leading unit entry and verified.
            std::size_t lead = 0;
            double best = 0.0;
            for (std::size_t i = 0; i < nu.size(); ++i)
                if (std::abs(nu[i]) > best) { best = std::abs(nu[i]); lead = i; }
            EigenTuple tuple;
            tuple.vector = nu;
            bool common = true;
            for (const CMatrix& op : ops) {
                const cvec image = matvec(op, nu);
                const cplx lambda = image[lead] / nu[lead];
                const cvec resid = image - lambda * nu;
                if (inf_norm(resid) > std::max(tol, 1e-8) * (1.0 + inf_norm(op))) {
                    common = false;
                    break;
                }
                tuple.lambdas.push_back(
                    cplx(snap_component(lambda.real()), snap_component(lambda.imag())));
            }
            if (!common) {
                data.split_warning = true;
                continue;
            }
            if (vector_is_real(tuple.vector)) {
                bool lambdas_real = true;
                for (const cplx& l : tuple.lambdas)
                    if (l.imag() != 0.0) lambdas_real = false;
                if (lambdas_real) {
                    tuple.is_real = true;
                    tuple.vector = real_part_only(tuple.vector);
                }
            }
            data.tuples.push_back(std::move(tuple));
        }
    }

    // Conjugate pairing (meaningful for real-coefficient families).
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        if (data.tuples[i].is_real || data.tuples[i].conjugate_partner) continue;
        const cvec conj_v = conjugated(data.tuples[i].vector);
        for (std::size_t j = i + 1; j < data.tuples.size(); ++j) {
            if (data.tuples[j].is_real || data.tuples[j].conjugate_partner) continue;
            if (inf_norm(conj_v - data.tuples[j].vector) <=
                1e-8 * (1.0 + inf_norm(conj_v))) {
                data.tuples[i].conjugate_partner = j;
                data.tuples[j].conjugate_partner = i;
                break;
            }
        }
    }

    // Chain attachment: pivot first, then the other members in index order.
    std::vector<std::size_t> order{data.pivot};
    for (std::size_t j = 0; j < ops.size(); ++j)
        if (j != data.pivot) order.push_back(j);
    for (std::size_t ti = 0; ti < data.tuples.size(); ++ti) {
        const EigenTuple& tuple = data.tuples[ti];
        for (std::size_t dir : order) {
            const cplx lambda = tuple.lambdas[dir];
            std::size_t s_max = 1;
            for (const EigenvalueInfo& info : eigen[dir].eigenvalues)
                if (std::abs(info.value - lambda) <=
                    std::max(tol, 1e-6 * (1.0 + std::abs(info.value))))
                    s_max = std::max(s_max, *std::max_element(info.divisor_degrees.begin(),
                                                              info.divisor_degrees.end()));
            if (s_max < 2) continue;
            std::vector<cvec> chain =
                family_chain(ops, tuple.lambdas, dir, s_max, tuple.vector, std::max(tol, 1e-8));
            if (chain.size() < 2) {
                // gauge-free extension in one matrix; the constancy measurement
                // downstream decides whether its integrals survive
                for (std::size_t s = s_max; s >= 2; --s) {
                    try {
                        chain = jordan_chain(ops[dir], lambda, s, tuple.vector,
                                             std::max(tol, 1e-8));
                        break;
                    } catch (const structural_error&) {
                        continue;
                    }
                }
            }
            if (chain.size() >= 2) {
                TupleChain tc;
                tc.tuple_index = ti;
                tc.direction = dir;
                for (cvec& v : chain) tc.vectors.push_back(snapped(v));
                data.chains.push_back(std::move(tc));
                break;
            }
        }
    }
    return data;
}

std::vector<cvec> family_chain(const std::vector<CMatrix>& ops, const cvec& lambdas,
                               std::size_t zeta, std::size_t s_max, const cvec& nu0,
                               double tol) {
    const std::size_t n = nu0.size();
    const std::size_t dirs = ops.size();
    std::vector<cvec> chain{normalize_leading(nu0)};
    // mu[theta-1][j]; the chain direction carries mu_1 = 1 and mu_theta = 0 beyond.
    std::vector<cvec> mu;
    std::vector<CMatrix> shifted;
    for (std::size_t j = 0; j < dirs; ++j) {
        CMatrix s = ops[j];
        for (std::size_t i = 0; i < n; ++i) s.at(i, i) -= lambdas[j];
        shifted.push_back(std::move(s));
    }
    for (std::size_t theta = 1; theta < s_max; ++theta) {
        // unknowns: nu^theta and mu_theta^j for j != zeta
        const std::size_t unknowns = n + dirs - 1;
        CMatrix sys(dirs * n, unknowns);
        cvec rhs(dirs * n, cplx(0.0, 0.0));
        std::size_t mu_col = n;
        for (std::size_t j = 0; j < dirs; ++j) {
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c) sys.at(j * n + r, c) = shifted[j].at(r, c);
            if (j == zeta) {
                for (std::size_t r = 0; r < n; ++r)
                    rhs[j * n + r] = static_cast<double>(theta) * chain[theta - 1][r];
            } else {
                for (std::size_t r = 0; r < n; ++r) sys.at(j * n + r, mu_col) = -chain[0][r];
                cvec known(n, cplx(0.0, 0.0));
                for (std::size_t delta = 1; delta < theta; ++delta) {
                    const cplx w = binomial(theta, delta) * mu[delta - 1][j];
                    known = known + w * chain[theta - delta];
                }
                for (std::size_t r = 0; r < n; ++r) rhs[j * n + r] = known[r];
                ++mu_col;
            }
        }
        cvec sol;
        try {
            sol = solve_min_norm(sys, rhs, tol);
        } catch (const structural_error&) {
            break;
        }
        const cvec resid = matvec(sys, sol) - rhs;
        double scale = 1.0;
        for (const CMatrix& s : shifted) scale = std::max(scale, inf_norm(s));
        if (inf_norm(resid) > tol * scale * (1.0 + inf_norm(rhs))) break;
        cvec next(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(n));
        cvec mu_theta(dirs, cplx(0.0, 0.0));
        mu_theta[zeta] = theta == 1 ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
        std::size_t at = n;
        for (std::size_t j = 0; j < dirs; ++j)
            if (j != zeta) mu_theta[j] = sol[at++];
        chain.push_back(std::move(next));
        mu.push_back(std::move(mu_theta));
    }
    return chain;
}

} // namespace firstint
