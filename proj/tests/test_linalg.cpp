#include <doctest.h>

#include <random>

#include "firstint/linalg.hpp"

using namespace firstint;

namespace {

const CMatrix kFlow32{{1, -2, 0, -1}, {-1, 4, -1, 2}, {0, 2, 1, 1}, {2, -4, 2, -2}};
const CMatrix kFlow317{{4, -1, 0}, {3, 1, -1}, {1, 0, 1}};
const CMatrix kFlow313{{4, -5, 2}, {5, -7, 3}, {6, -9, 4}};

bool collinear(const cvec& a, const cvec& b, double tol = 1e-9) {
    // a = c b for some scalar c
    cplx c(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(b[i]) > 1e-12) {
            c = a[i] / b[i];
            break;
        }
    if (c == cplx(0.0, 0.0)) return inf_norm(a) < tol;
    return inf_norm(a - c * b) <= tol * (1.0 + inf_norm(a));
}

} // namespace

TEST_CASE("nullspace of the zero matrix is the full space") {
    const std::vector<cvec> basis = nullspace(CMatrix::zero(3, 3), 1e-10);
    REQUIRE(basis.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(basis[i][j] == (i == j ? cplx(1.0, 0.0) : cplx(0.0, 0.0)));
    }
}

TEST_CASE("kernel of the transposed four-state system matrix") {
    const CMatrix b = transpose(kFlow32);
    const std::vector<cvec> basis = nullspace(b, 1e-10);
    REQUIRE(basis.size() == 1);
    CHECK(collinear(basis[0], cvec{1, -1, 1, -1}));
    CHECK(inf_norm(matvec(b, basis[0])) < 1e-10 * (1.0 + inf_norm(b)) * inf_norm(basis[0]));
}

TEST_CASE("nullspace of a constructed rank-2 matrix") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    // 5x3 built as u1 v1^T + u2 v2^T
    cvec u1(5), u2(5), v1(3), v2(3);
    for (auto* v : {&u1, &u2})
        for (cplx& e : *v) e = cplx(dist(rng), dist(rng));
    for (auto* v : {&v1, &v2})
        for (cplx& e : *v) e = cplx(dist(rng), dist(rng));
    CMatrix m(5, 3);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) m.at(i, j) = u1[i] * v1[j] + u2[i] * v2[j];
    const std::vector<cvec> basis = nullspace(m, 1e-10);
    REQUIRE(basis.size() == 1);
    CHECK(inf_norm(matvec(m, basis[0])) < 1e-10 * (1.0 + inf_norm(m)) * inf_norm(basis[0]));
}

TEST_CASE("nullspace rejects non-finite input") {
    CMatrix m(2, 2);
    m.at(0, 0) = cplx(std::numeric_limits<double>::infinity(), 0.0);
    CHECK_THROWS_AS(nullspace(m, 1e-10), input_error);
}

TEST_CASE("nullspace basis vectors are linearly independent") {
    // Gram determinant of the basis bounded away from zero.
    const std::vector<cvec> basis = nullspace(CMatrix{{1, 2, 3, 4}}, 1e-10);
    REQUIRE(basis.size() == 3);
    CMatrix gram(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) gram.at(i, j) = dot(conjugated(basis[i]), basis[j]);
    CHECK(rank(gram, 1e-8) == 3);
}

TEST_CASE("characteristic polynomial reconstructs from the spectrum") {
    for (const CMatrix* flow : {&kFlow32, &kFlow317, &kFlow313}) {
        const CMatrix b = transpose(*flow);
        const cvec cp = characteristic_polynomial(b);
        const EigenStructure es = eigen_structure(b, 1e-9);
        cvec product{1.0};
        for (const EigenvalueInfo& ev : es.eigenvalues) {
            for (std::size_t k = 0; k < ev.algebraic_multiplicity; ++k) {
                cvec next(product.size() + 1, cplx(0.0, 0.0));
                for (std::size_t i = 0; i < product.size(); ++i) {
                    next[i + 1] += product[i];
                    next[i] -= ev.value * product[i];
                }
                product = std::move(next);
            }
        }
        REQUIRE(product.size() == cp.size());
        double scale = 0.0;
        for (const cplx& c : cp) scale = std::max(scale, std::abs(c));
        for (std::size_t i = 0; i < cp.size(); ++i)
            CHECK(std::abs(product[i] - cp[i]) <= 1e-6 * scale);
    }
}

TEST_CASE("eigen structure of the transposed four-state matrix") {
    const EigenStructure es = eigen_structure(transpose(kFlow32), 1e-9);
    REQUIRE(es.eigenvalues.size() == 3);
    CHECK(std::abs(es.eigenvalues[0].value - cplx(0.0, 0.0)) < 1e-9);
    CHECK(es.eigenvalues[0].algebraic_multiplicity == 1);
    CHECK(std::abs(es.eigenvalues[1].value - cplx(1.0, 0.0)) < 1e-9);
    CHECK(es.eigenvalues[1].algebraic_multiplicity == 2);
    CHECK(es.eigenvalues[1].divisor_degrees == std::vector<std::size_t>{1, 1});
    CHECK(std::abs(es.eigenvalues[2].value - cplx(2.0, 0.0)) < 1e-9);
}

TEST_CASE("eigen structure detects a cubic elementary divisor") {
    const EigenStructure es = eigen_structure(transpose(kFlow317), 1e-9);
    REQUIRE(es.eigenvalues.size() == 1);
    CHECK(std::abs(es.eigenvalues[0].value - cplx(2.0, 0.0)) < 1e-9);
    CHECK(es.eigenvalues[0].divisor_degrees == std::vector<std::size_t>{3});
}

TEST_CASE("identity matrix splits into unit divisors") {
    const EigenStructure es = eigen_structure(CMatrix::identity(4), 1e-9);
    REQUIRE(es.eigenvalues.size() == 1);
    CHECK(std::abs(es.eigenvalues[0].value - cplx(1.0, 0.0)) < 1e-12);
    CHECK(es.eigenvalues[0].algebraic_multiplicity == 4);
    CHECK(es.eigenvalues[0].divisor_degrees == std::vector<std::size_t>({1, 1, 1, 1}));
}

TEST_CASE("chains from the eigen structure satisfy the k-factor identity") {
    for (const CMatrix* flow : {&kFlow317, &kFlow313}) {
        const CMatrix b = transpose(*flow);
        const EigenStructure es = eigen_structure(b, 1e-9);
        for (std::size_t e = 0; e < es.eigenvalues.size(); ++e) {
            CMatrix shifted = b;
            for (std::size_t i = 0; i < b.rows(); ++i)
                shifted.at(i, i) -= es.eigenvalues[e].value;
            for (const auto& chain : es.chains[e]) {
                CHECK(inf_norm(matvec(shifted, chain[0])) <= 1e-8 * (1.0 + inf_norm(b)));
                for (std::size_t k = 1; k < chain.size(); ++k) {
                    const cvec resid = matvec(shifted, chain[k]) -
                                       cplx(static_cast<double>(k), 0.0) * chain[k - 1];
                    CHECK(inf_norm(resid) <= 1e-8 * (1.0 + inf_norm(b)));
                }
            }
        }
    }
}

TEST_CASE("jordan chain for the zero eigenvalue spans the expected plane") {
    const CMatrix b = transpose(kFlow313);
    const std::vector<cvec> kernel = nullspace(b, 1e-10);
    REQUIRE(kernel.size() == 1);
    const std::vector<cvec> chain = jordan_chain(b, 0.0, 2, kernel[0], 1e-9);
    REQUIRE(chain.size() == 2);
    CHECK(collinear(chain[0], cvec{1, -2, 1}, 1e-8));
    // span{nu0, nu1} equals span{(1,-2,1), (0,-1,1)}
    CMatrix stack(3, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        stack.at(0, j) = chain[0][j];
        stack.at(1, j) = chain[1][j];
        stack.at(2, j) = cvec{0, -1, 1}[j];
    }
    CHECK(rank(stack, 1e-8) == 2);
    const cvec resid = matvec(b, chain[1]) - chain[0];
    CHECK(inf_norm(resid) <= 1e-8 * (1.0 + inf_norm(b)));
}

TEST_CASE("jordan chain of length one returns the eigenvector unchanged") {
    const CMatrix b = transpose(kFlow32);
    const std::vector<cvec> kernel = nullspace(b, 1e-10);
    const std::vector<cvec> chain = jordan_chain(b, 0.0, 1, kernel[0], 1e-9);
    REQUIRE(chain.size() == 1);
    CHECK(collinear(chain[0], kernel[0]));
}

TEST_CASE("jordan chain extends the cubic divisor with the k factor") {
    const CMatrix b = transpose(kFlow317);
    const std::vector<cvec> kernel = nullspace(b - 2.0 * CMatrix::identity(3), 1e-10);
    REQUIRE(kernel.size() == 1);
    const std::vector<cvec> chain = jordan_chain(b, 2.0, 3, kernel[0], 1e-9);
    REQUIRE(chain.size() == 3);
    CMatrix shifted = b;
    for (std::size_t i = 0; i < 3; ++i) shifted.at(i, i) -= 2.0;
    CHECK(inf_norm(matvec(shifted, chain[1]) - chain[0]) < 1e-8);
    CHECK(inf_norm(matvec(shifted, chain[2]) - 2.0 * chain[1]) < 1e-8);
}

TEST_CASE("jordan chain rejects a non-eigenvector") {
    const CMatrix b = transpose(kFlow317);
    CHECK_THROWS_AS(jordan_chain(b, 2.0, 2, cvec{1, 0, 0}, 1e-9), input_error);
}

TEST_CASE("jordan chain reports the achieved length on a rank obstruction") {
    // diag(0,0) has two unit divisors; no order-1 generalized vector exists.
    const CMatrix b = CMatrix::zero(2, 2);
    CHECK_THROWS_AS(jordan_chain(b, 0.0, 2, cvec{1, 0}, 1e-9), structural_error);
}

TEST_CASE("nearly coincident simple eigenvalues set the ambiguity flag") {
    CMatrix b(2, 2);
    b.at(0, 0) = 0.0;
    b.at(1, 1) = 5e-9;
    const EigenStructure es = eigen_structure(b, 1e-9);
    CHECK(es.clustering_ambiguous);
    // well-separated spectra stay unflagged
    const EigenStructure clean = eigen_structure(transpose(kFlow32), 1e-9);
    CHECK(!clean.clustering_ambiguous);
}

TEST_CASE("eigen structure calls are deterministic") {
    const CMatrix b = transpose(kFlow32);
    const EigenStructure a = eigen_structure(b, 1e-9);
    const EigenStructure c = eigen_structure(b, 1e-9);
    REQUIRE(a.eigenvalues.size() == c.eigenvalues.size());
    for (std::size_t i = 0; i < a.eigenvalues.size(); ++i) {
        CHECK(a.eigenvalues[i].value == c.eigenvalues[i].value);
        for (std::size_t d = 0; d < a.chains[i].size(); ++d)
            for (std::size_t k = 0; k < a.chains[i][d].size(); ++k)
                CHECK(inf_norm(a.chains[i][d][k] - c.chains[i][d][k]) == 0.0);
    }
}
