#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "firstint/errors.hpp"

namespace firstint {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

/// Dense row-major complex matrix. Sized for spectral work on small systems (n <= 32).
class CMatrix {
public:
    CMatrix() = default;
    CMatrix(std::size_t rows, std::size_t cols);
    CMatrix(std::initializer_list<std::initializer_list<cplx>> rows);

    static CMatrix identity(std::size_t n);
    static CMatrix zero(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    cplx& at(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
    const cplx& at(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

    const cvec& entries() const { return entries_; }

    bool finite() const;
    /// Throws input_error if any entry is NaN/Inf.
    void require_finite(const char* context) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    cvec entries_;
};

CMatrix operator+(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a, const CMatrix& b);
CMatrix operator*(const CMatrix& a, const CMatrix& b);
CMatrix operator*(cplx s, const CMatrix& a);

CMatrix transpose(const CMatrix& a);
CMatrix conjugated(const CMatrix& a);
cvec matvec(const CMatrix& a, const cvec& v);

/// Max absolute row sum.
double inf_norm(const CMatrix& a);
/// Max absolute entry.
double inf_norm(const cvec& v);

cvec operator+(const cvec& a, const cvec& b);
cvec operator-(const cvec& a, const cvec& b);
cvec operator*(cplx s, const cvec& v);
cplx dot(const cvec& a, const cvec& b);     // unconjugated sum a_i b_i
cvec conjugated(const cvec& v);

/// Row echelon reduction with partial pivoting. Pivots are accepted when
/// |entry| > tol * (1 + inf_norm(input)); the pivot column list is returned
/// in elimination order.
struct RrefResult {
    CMatrix reduced;
    std::vector<std::size_t> pivot_cols;
    std::size_t rank() const { return pivot_cols.size(); }
};
RrefResult rref(const CMatrix& m, double tol);

std::size_t rank(const CMatrix& m, double tol);

/// Kernel basis of m. Free variables are walked in ascending column order,
/// set to one in turn, pivots back-substituted; the result is deterministic.
/// Empty when m has full column rank.
std::vector<cvec> nullspace(const CMatrix& m, double tol);

/// Particular solution of m y = b with free variables at zero, then the kernel
/// component projected out (minimum-norm representative). Throws
/// structural_error when b is outside the range of m.
cvec solve_min_norm(const CMatrix& m, const cvec& b, double tol);

/// Monic characteristic polynomial of b by the Faddeev-LeVerrier recursion.
/// Coefficients ascending: p(z) = c[0] + c[1] z + ... + c[n] z^n, c[n] = 1.
cvec characteristic_polynomial(const CMatrix& b);

/// All roots of a polynomial (ascending coefficients) by simultaneous
/// Aberth-Ehrlich iteration. Throws numerical_error after max_sweeps
/// non-converged sweeps.
std::vector<cplx> polynomial_roots(const cvec& coeffs, int max_sweeps = 500);

struct EigenvalueInfo {
    cplx value;
    std::size_t algebraic_multiplicity = 0;
    std::vector<std::size_t> divisor_degrees;  // sizes of the Jordan blocks, descending
};

/// Spectral data of one matrix: clustered eigenvalues, elementary divisor
/// degrees from the rank sequence of (B - lambda E)^k, and one Jordan chain
/// per divisor satisfying (B - lambda E) nu^k = k nu^{k-1}.
struct EigenStructure {
    std::vector<EigenvalueInfo> eigenvalues;
    /// chains[i][d] is the chain for divisor d of eigenvalue i, length = divisor degree.
    std::vector<std::vector<std::vector<cvec>>> chains;
    double tolerance_used = 0.0;
    bool clustering_ambiguous = false;

    std::size_t divisor_count() const;
    std::size_t max_divisor_degree() const;
};

EigenStructure eigen_structure(const CMatrix& b, double tol);

/// Extends the eigenvector nu0 of b to a chain [nu^0 .. nu^{s-1}] with
/// (B - lambda E) nu^k = k nu^{k-1}. nu0 is rescaled so its largest-magnitude
/// entry (lowest index among entries within 10% of the max) equals one.
/// Throws input_error when nu0 is not an eigenvector and structural_error,
/// naming the achieved length, when the chain cannot reach s.
std::vector<cvec> jordan_chain(const CMatrix& b, cplx lambda, std::size_t s,
                               const cvec& nu0, double tol);

/// Scale so the leading large entry is exactly one (chain normalization rule).
cvec normalize_leading(const cvec& v);

} // namespace firstint
