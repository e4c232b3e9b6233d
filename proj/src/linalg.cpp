#include "firstint/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace firstint {

CMatrix::CMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, cplx(0.0, 0.0)) {}

CMatrix::CMatrix(std::initializer_list<std::initializer_list<cplx>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    entries_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw input_error("CMatrix: ragged initializer rows");
        entries_.insert(entries_.end(), r.begin(), r.end());
    }
}

CMatrix CMatrix::identity(std::size_t n) {
    CMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

CMatrix CMatrix::zero(std::size_t rows, std::size_t cols) { return CMatrix(rows, cols); }

bool CMatrix::finite() const {
    for (const cplx& e : entries_)
        if (!std::isfinite(e.real()) || !std::isfinite(e.imag())) return false;
    return true;
}

void CMatrix::require_finite(const char* context) const {
    if (!finite()) throw input_error(std::string(context) + ": non-finite matrix entry");
}

CMatrix operator+(const CMatrix& a, const CMatrix& b) {
    CMatrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r.at(i, j) = a.at(i, j) + b.at(i, j);
    return r;
}

CMatrix operator-(const CMatrix& a, const CMatrix& b) {
    CMatrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r.at(i, j) = a.at(i, j) - b.at(i, j);
    return r;
}

CMatrix operator*(const CMatrix& a, const CMatrix& b) {
    CMatrix r(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const cplx aik = a.at(i, k);
            if (aik == cplx(0.0, 0.0)) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) r.at(i, j) += aik * b.at(k, j);
        }
    return r;
}

CMatrix operator*(cplx s, const CMatrix& a) {
    CMatrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r.at(i, j) = s * a.at(i, j);
    return r;
}

CMatrix transpose(const CMatrix& a) {
    CMatrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r.at(j, i) = a.at(i, j);
    return r;
}

CMatrix conjugated(const CMatrix& a) {
    CMatrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r.at(i, j) = std::conj(a.at(i, j));
    return r;
}

cvec matvec(const CMatrix& a, const cvec& v) {
    cvec r(a.rows(), cplx(0.0, 0.0));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r[i] += a.at(i, j) * v[j];
    return r;
}

double inf_norm(const CMatrix& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a.at(i, j));
        best = std::max(best, s);
    }
    return best;
}

double inf_norm(const cvec& v) {
    double best = 0.0;
    for (const cplx& e : v) best = std::max(best, std::abs(e));
    return best;
}

cvec operator+(const cvec& a, const cvec& b) {
    cvec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

cvec operator-(const cvec& a, const cvec& b) {
    cvec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

cvec operator*(cplx s, const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = s * v[i];
    return r;
}

cplx dot(const cvec& a, const cvec& b) {
    cplx s(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

cvec conjugated(const cvec& v) {
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = std::conj(v[i]);
    return r;
}

RrefResult rref(const CMatrix& m, double tol) {
    m.require_finite("rref");
    if (tol <= 0.0) throw input_error("rref: tolerance must be positive");
    RrefResult res{m, {}};
    CMatrix& a = res.reduced;
    const double pivot_floor = tol * (1.0 + inf_norm(m));
    std::size_t row = 0;
    for (std::size_t col = 0; col < a.cols() && row < a.rows(); ++col) {
        std::size_t best = row;
        double best_mag = std::abs(a.at(row, col));
        for (std::size_t r = row + 1; r < a.rows(); ++r) {
            const double mag = std::abs(a.at(r, col));
            if (mag > best_mag) { best = r; best_mag = mag; }
        }
        if (best_mag <= pivot_floor) continue;
        if (best != row)
            for (std::size_t c = 0; c < a.cols(); ++c) std::swap(a.at(row, c), a.at(best, c));
        const cplx inv = 1.0 / a.at(row, col);
        for (std::size_t c = 0; c < a.cols(); ++c) a.at(row, c) *= inv;
        a.at(row, col) = 1.0;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            if (r == row) continue;
            const cplx f = a.at(r, col);
            if (f == cplx(0.0, 0.0)) continue;
            for (std::size_t c = 0; c < a.cols(); ++c) a.at(r, c) -= f * a.at(row, c);
            a.at(r, col) = 0.0;
        }
        res.pivot_cols.push_back(col);
        ++row;
    }
    return res;
}

std::size_t rank(const CMatrix& m, double tol) { return rref(m, tol).rank(); }

std::vector<cvec> nullspace(const CMatrix& m, double tol) {
    const RrefResult r = rref(m, tol);
    std::vector<bool> is_pivot(m.cols(), false);
    for (std::size_t c : r.pivot_cols) is_pivot[c] = true;
    std::vector<cvec> basis;
    for (std::size_t free_col = 0; free_col < m.cols(); ++free_col) {
        if (is_pivot[free_col]) continue;
        cvec v(m.cols(), cplx(0.0, 0.0));
        v[free_col] = 1.0;
        for (std::size_t p = 0; p < r.pivot_cols.size(); ++p)
            v[r.pivot_cols[p]] = -r.reduced.at(p, free_col);
        basis.push_back(std::move(v));
    }
    return basis;
}

cvec solve_min_norm(const CMatrix& m, const cvec& b, double tol) {
    if (b.size() != m.rows()) throw input_error("solve_min_norm: size mismatch");
    CMatrix aug(m.rows(), m.cols() + 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) aug.at(i, j) = m.at(i, j);
        aug.at(i, m.cols()) = b[i];
    }
    const RrefResult r = rref(aug, tol);
    for (std::size_t c : r.pivot_cols)
        if (c == m.cols())
            throw structural_error("solve_min_norm: right-hand side outside the range");
    cvec y(m.cols(), cplx(0.0, 0.0));
    for (std::size_t p = 0; p < r.pivot_cols.size(); ++p)
        y[r.pivot_cols[p]] = r.reduced.at(p, m.cols());

    // Project out the kernel component (modified Gram-Schmidt on the kernel basis).
    std::vector<cvec> ker = nullspace(m, tol);
    std::vector<cvec> ortho;
    for (cvec k : ker) {
        for (const cvec& q : ortho) {
            const cplx c = dot(conjugated(q), k);
            k = k - c * q;
        }
        double nrm = 0.0;
        for (const cplx& e : k) nrm += std::norm(e);
        nrm = std::sqrt(nrm);
        if (nrm > tol) ortho.push_back((1.0 / nrm) * k);
    }
    for (const cvec& q : ortho) {
        const cplx c = dot(conjugated(q), y);
        y = y - c * q;
    }
    return y;
}

cvec characteristic_polynomial(const CMatrix& b) {
    if (b.rows() != b.cols()) throw input_error("characteristic_polynomial: square matrix required");
    b.require_finite("characteristic_polynomial");
    const std::size_t n = b.rows();
    // p(z) = z^n + c_1 z^{n-1} + ... + c_n from M_{k+1} = B (M_k + c_k I).
    cvec coeffs(n + 1, cplx(0.0, 0.0));
    coeffs[n] = 1.0;
    CMatrix mk = b;
    for (std::size_t k = 1; k <= n; ++k) {
        cplx tr(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) tr += mk.at(i, i);
        const cplx ck = -tr / static_cast<double>(k);
        coeffs[n - k] = ck;
        if (k < n) {
            for (std::size_t i = 0; i < n; ++i) mk.at(i, i) += ck;
            mk = b * mk;
        }
    }
    return coeffs;
}

namespace {

cplx poly_eval(const cvec& c, cplx z) {
    cplx v(0.0, 0.0);
    for (std::size_t k = c.size(); k-- > 0;) v = v * z + c[k];
    return v;
}

cvec poly_derivative(const cvec& c) {
    if (c.size() <= 1) return cvec{cplx(0.0, 0.0)};
    cvec d(c.size() - 1);
    for (std::size_t k = 1; k < c.size(); ++k) d[k - 1] = static_cast<double>(k) * c[k];
    return d;
}

} // namespace

std::vector<cplx> polynomial_roots(const cvec& coeffs, int max_sweeps) {
    std::size_t deg = coeffs.size();
    while (deg > 0 && std::abs(coeffs[deg - 1]) == 0.0) --deg;
    if (deg == 0) throw input_error("polynomial_roots: zero polynomial");
    --deg;
    if (deg == 0) return {};
    cvec c(coeffs.begin(), coeffs.begin() + deg + 1);
    const cplx lead = c[deg];
    for (cplx& e : c) e /= lead;
    const cvec dc = poly_derivative(c);

    // Backward-error bound: |p(z)| below eps times the absolute Horner sum
    // means z is a root of a negligibly perturbed polynomial.
    cvec abs_c(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) abs_c[k] = std::abs(c[k]);
    auto backward_ok = [&](cplx z, cplx pz) {
        const cplx bound = poly_eval(abs_c, std::abs(z));
        return std::abs(pz) <= 16.0 * static_cast<double>(deg + 1) * 1e-16 * std::abs(bound);
    };

    // Initial guesses on a Cauchy-bound circle around the coefficient centroid.
    double radius = 0.0;
    for (std::size_t k = 0; k < deg; ++k) radius = std::max(radius, std::abs(c[k]));
    radius = 1.0 + radius;
    const cplx center = -c[deg - 1] / static_cast<double>(deg);
    std::vector<cplx> z(deg);
    for (std::size_t i = 0; i < deg; ++i) {
        const double ang = 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.35) /
                           static_cast<double>(deg);
        z[i] = center + 0.9 * radius * cplx(std::cos(ang), std::sin(ang));
    }

    double worst = 0.0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double step_max = 0.0;
        bool all_done = true;
        worst = 0.0;
        for (std::size_t i = 0; i < deg; ++i) {
            const cplx p = poly_eval(c, z[i]);
            worst = std::max(worst, std::abs(p));
            if (std::abs(p) == 0.0 || backward_ok(z[i], p)) continue;
            all_done = false;
            const cplx dp = poly_eval(dc, z[i]);
            cplx rep(0.0, 0.0);
            for (std::size_t j = 0; j < deg; ++j)
                if (j != i) rep += 1.0 / (z[i] - z[j]);
            cplx delta;
            if (std::abs(dp) == 0.0) {
                delta = 1e-3 * radius * cplx(1.0, 1.0);  // nudge off a critical point
            } else {
                const cplx ratio = p / dp;
                delta = ratio / (1.0 - ratio * rep);
            }
            z[i] -= delta;
            step_max = std::max(step_max, std::abs(delta));
        }
        if (all_done || step_max <= 1e-15 * std::max(1.0, radius)) break;
        if (sweep == max_sweeps - 1)
            throw numerical_error("polynomial_roots: Aberth iteration did not converge", worst);
    }
    std::sort(z.begin(), z.end(), [](const cplx& a, const cplx& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return z;
}

std::size_t EigenStructure::divisor_count() const {
    std::size_t n = 0;
    for (const auto& ev : eigenvalues) n += ev.divisor_degrees.size();
    return n;
}

std::size_t EigenStructure::max_divisor_degree() const {
    std::size_t n = 0;
    for (const auto& ev : eigenvalues)
        for (std::size_t d : ev.divisor_degrees) n = std::max(n, d);
    return n;
}

namespace {

/// Newton steps on the (s-1)-th derivative, where a cluster of size s has a
/// simple root; quadratically sharpens the cluster mean.
cplx polish_multiple_root(const cvec& coeffs, cplx z0, std::size_t s) {
    cvec p = coeffs;
    for (std::size_t k = 1; k < s; ++k) p = poly_derivative(p);
    const cvec dp = poly_derivative(p);
    cplx z = z0;
    for (int it = 0; it < 50; ++it) {
        const cplx pv = poly_eval(p, z);
        const cplx dv = poly_eval(dp, z);
        if (std::abs(dv) == 0.0) break;
        const cplx step = pv / dv;
        z -= step;
        if (std::abs(step) <= 1e-16 * (1.0 + std::abs(z))) break;
    }
    return z;
}

} // namespace

namespace {

struct RootCluster {
    cplx mean;
    std::vector<std::size_t> members;
};

std::vector<RootCluster> cluster_roots(const std::vector<cplx>& roots,
                                       const std::vector<double>& radii, double threshold) {
    std::vector<bool> used(roots.size(), false);
    std::vector<RootCluster> clusters;
    auto linked = [&](std::size_t i, std::size_t j) {
        return std::abs(roots[i] - roots[j]) <= std::max({radii[i], radii[j], threshold});
    };
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (used[i]) continue;
        RootCluster cl;
        cl.members.push_back(i);
        used[i] = true;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t j = 0; j < roots.size(); ++j) {
                if (used[j]) continue;
                for (std::size_t m : cl.members) {
                    if (linked(j, m)) {
                        cl.members.push_back(j);
                        used[j] = true;
                        grew = true;
                        break;
                    }
                }
            }
        }
        cplx sum(0.0, 0.0);
        for (std::size_t m : cl.members) sum += roots[m];
        cl.mean = sum / static_cast<double>(cl.members.size());
        clusters.push_back(std::move(cl));
    }
    std::sort(clusters.begin(), clusters.end(), [](const RootCluster& a, const RootCluster& b) {
        if (a.mean.real() != b.mean.real()) return a.mean.real() < b.mean.real();
        return a.mean.imag() < b.mean.imag();
    });
    return clusters;
}

/// Divisor degrees from the rank sequence of (B - lambda E)^k; empty (and a
/// false flag) when the sequence is inconsistent with the claimed multiplicity,
/// which signals that the root cluster was split too finely.
bool divisor_degrees_for(const CMatrix& b, cplx lambda, std::size_t mult, double rank_tol,
                         std::vector<std::size_t>& out) {
    const std::size_t n = b.rows();
    CMatrix shifted = b;
    for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) -= lambda;
    std::vector<std::size_t> ranks{n};
    CMatrix pow = CMatrix::identity(n);
    for (std::size_t k = 1; k <= mult; ++k) {
        pow = pow * shifted;
        const double scale = inf_norm(pow);
        // rank relative to the power's own magnitude
        ranks.push_back(rank((scale > 0.0 ? 1.0 / scale : 1.0) * pow, rank_tol));
    }
    out.clear();
    std::size_t total = 0;
    for (std::size_t k = 1; k <= mult; ++k) {
        if (ranks[k - 1] < ranks[k]) return false;
        const std::size_t ge_k = ranks[k - 1] - ranks[k];
        const std::size_t ge_k1 = (k == mult) ? 0 : (ranks[k] >= ranks[k + 1]
                                                         ? ranks[k] - ranks[k + 1]
                                                         : 0);
        const std::size_t exactly = (ge_k > ge_k1) ? ge_k - ge_k1 : 0;
        for (std::size_t c = 0; c < exactly; ++c) out.push_back(k);
        total += exactly * k;
    }
    std::sort(out.rbegin(), out.rend());
    return total == mult;
}

} // namespace

EigenStructure eigen_structure(const CMatrix& b, double tol) {
    if (b.rows() != b.cols()) throw input_error("eigen_structure: square matrix required");
    if (b.rows() > 32) throw input_error("eigen_structure: dimension exceeds 32");
    const std::size_t n = b.rows();
    EigenStructure es;
    es.tolerance_used = tol;
    if (n == 0) return es;

    const cvec cp = characteristic_polynomial(b);
    std::vector<cplx> roots = polynomial_roots(cp);
    const double rank_tol = std::max(tol, 1e-9);

    // Roots of an s-fold eigenvalue scatter like eps^(1/s); a converged root's
    // Newton correction |p/p'| measures that scatter (it stays near machine
    // precision for well-separated simple roots), giving a per-root cluster
    // radius. A threshold escalation guarded by the rank sequences backs this
    // up, flagging ambiguity when it has to stop between clusterings.
    const cvec dcp = poly_derivative(cp);
    std::vector<double> radii(roots.size(), 0.0);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double pv = std::abs(poly_eval(cp, roots[i]));
        const double dv = std::abs(poly_eval(dcp, roots[i]));
        const double cap = 1e-2 * (1.0 + std::abs(roots[i]));
        radii[i] = dv > 0.0 ? std::min(8.0 * static_cast<double>(n) * pv / dv, cap) : cap;
    }
    struct Resolved {
        cplx value;
        std::size_t mult;
        std::vector<std::size_t> divisors;
    };
    std::vector<Resolved> resolved;
    bool have_choice = false;
    bool choice_ambiguous = false;
    double cluster_tol = std::max(tol, 1e-7 * inf_norm(b));
    for (int attempt = 0; attempt < 8; ++attempt, cluster_tol *= 10.0) {
        const std::vector<RootCluster> clusters = cluster_roots(roots, radii, cluster_tol);
        std::vector<Resolved> trial;
        bool consistent = true;
        for (const RootCluster& cl : clusters) {
            Resolved r;
            r.mult = cl.members.size();
            r.value = polish_multiple_root(cp, cl.mean, r.mult);
            if (!divisor_degrees_for(b, r.value, r.mult, rank_tol, r.divisors)) {
                consistent = false;
                break;
            }
            trial.push_back(std::move(r));
        }
        bool ambiguous = false;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j)
                if (std::abs(clusters[i].mean - clusters[j].mean) <= 10.0 * cluster_tol)
                    ambiguous = true;
        if (consistent) {
            resolved = std::move(trial);
            have_choice = true;
            choice_ambiguous = ambiguous;
            if (!ambiguous) break;  // clean separation: done
        } else if (have_choice) {
            break;  // coarser merging contradicts the rank data; keep the last good one
        }
    }
    if (!have_choice)
        throw numerical_error("eigen_structure: eigenvalue clustering failed", cluster_tol);
    es.clustering_ambiguous = choice_ambiguous;
    std::sort(resolved.begin(), resolved.end(), [](const Resolved& a, const Resolved& b2) {
        if (a.value.real() != b2.value.real()) return a.value.real() < b2.value.real();
        return a.value.imag() < b2.value.imag();
    });

    for (const Resolved& r : resolved) {
        EigenvalueInfo info;
        info.value = r.value;
        info.algebraic_multiplicity = r.mult;
        info.divisor_degrees = r.divisors;
        CMatrix shifted = b;
        for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) -= info.value;

        // Chains, largest block first: pick top vectors in ker(S^s) \ ker(S^{s-1})
        // independent of already-chosen chains, then walk down by nu^{k-1} = S nu^k / k.
        std::vector<std::vector<cvec>> ev_chains;
        std::vector<cvec> spent;  // all chain vectors chosen so far for this eigenvalue
        for (std::size_t d = 0; d < info.divisor_degrees.size(); ++d) {
            const std::size_t s = info.divisor_degrees[d];
            CMatrix pow_s = CMatrix::identity(n);
            for (std::size_t k = 0; k < s; ++k) pow_s = pow_s * shifted;
            std::vector<cvec> ker_s = nullspace(pow_s, rank_tol);
            CMatrix pow_sm1 = CMatrix::identity(n);
            for (std::size_t k = 0; k + 1 < s; ++k) pow_sm1 = pow_sm1 * shifted;

            // Independence test target: candidate top must be outside
            // span(ker(S^{s-1}) + spent vectors).
            cvec top;
            bool found = false;
            std::vector<cvec> span_basis = nullspace(pow_sm1, rank_tol);
            if (s == 1) span_basis.clear();
            for (const cvec& k : spent) span_basis.push_back(k);
            CMatrix span_m(span_basis.size(), n);
            for (std::size_t r = 0; r < span_basis.size(); ++r)
                for (std::size_t c = 0; c < n; ++c) span_m.at(r, c) = span_basis[r][c];
            const std::size_t base_rank = span_basis.empty() ? 0 : rank(span_m, rank_tol);
            for (const cvec& cand : ker_s) {
                CMatrix trial(span_basis.size() + 1, n);
                for (std::size_t r = 0; r < span_basis.size(); ++r)
                    for (std::size_t c = 0; c < n; ++c) trial.at(r, c) = span_basis[r][c];
                for (std::size_t c = 0; c < n; ++c) trial.at(span_basis.size(), c) = cand[c];
                if (rank(trial, rank_tol) > base_rank) { top = cand; found = true; break; }
            }
            if (!found)
                throw numerical_error("eigen_structure: failed to complete a Jordan chain",
                                      cluster_tol);
            std::vector<cvec> chain(s);
            chain[s - 1] = top;
            for (std::size_t k = s - 1; k >= 1; --k)
                chain[k - 1] = (1.0 / static_cast<double>(k)) * matvec(shifted, chain[k]);
            // Rescale the whole chain so nu^0 carries the leading-one normalization.
            const cvec nu0 = normalize_leading(chain[0]);
            cplx scale_factor(1.0, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                if (std::abs(chain[0][i]) > 0.0) { scale_factor = nu0[i] / chain[0][i]; break; }
            for (cvec& link : chain) link = scale_factor * link;
            for (const cvec& link : chain) spent.push_back(link);
            ev_chains.push_back(std::move(chain));
        }
        es.chains.push_back(std::move(ev_chains));
        es.eigenvalues.push_back(std::move(info));
    }
    return es;
}

cvec normalize_leading(const cvec& v) {
    double max_mag = 0.0;
    for (const cplx& e : v) max_mag = std::max(max_mag, std::abs(e));
    if (max_mag == 0.0) return v;
    std::size_t lead = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) >= 0.9 * max_mag) { lead = i; break; }
    const cplx inv = 1.0 / v[lead];
    cvec r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = inv * v[i];
    return r;
}

std::vector<cvec> jordan_chain(const CMatrix& b, cplx lambda, std::size_t s,
                               const cvec& nu0, double tol) {
    if (s < 1) throw input_error("jordan_chain: chain length must be at least 1");
    if (nu0.size() != b.rows()) throw input_error("jordan_chain: eigenvector size mismatch");
    const std::size_t n = b.rows();
    CMatrix shifted = b;
    for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) -= lambda;
    const double scale = tol * (1.0 + inf_norm(b));
    const cvec head = normalize_leading(nu0);
    if (inf_norm(matvec(shifted, head)) > scale * std::max(1.0, inf_norm(head)))
        throw input_error("jordan_chain: nu0 is not an eigenvector for lambda");

    std::vector<cvec> chain{head};
    for (std::size_t k = 1; k < s; ++k) {
        const cvec rhs = cplx(static_cast<double>(k), 0.0) * chain[k - 1];
        cvec next;
        try {
            next = solve_min_norm(shifted, rhs, tol);
        } catch (const structural_error&) {
            throw structural_error("jordan_chain: chain stops at length " +
                                   std::to_string(k) + " of requested " + std::to_string(s));
        }
        const cvec resid = matvec(shifted, next) - rhs;
        if (inf_norm(resid) > scale * std::max(1.0, inf_norm(rhs)))
            throw structural_error("jordan_chain: chain stops at length " +
                                   std::to_string(k) + " of requested " + std::to_string(s));
        chain.push_back(std::move(next));
    }
    return chain;
}

} // namespace firstint
