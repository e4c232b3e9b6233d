#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "firstint/expr.hpp"
#include "firstint/spectral.hpp"
#include "firstint/system.hpp"

namespace firstint {

/// A constructed first integral with provenance and domain bookkeeping.
struct FirstIntegral {
    Expr expr;
    bool autonomous = true;
    bool complex_valued = false;      // counts as two real invariants when independent
    std::string route;                // construction family, e.g. "eigen_product"
    std::vector<Expr> excluded_hyperplanes;
    std::vector<std::size_t> provenance;  // tuple indices involved
};

/// Rational chain functions v_1..v_{s-1} for one Jordan chain, with the
/// measured constants mu[theta-1][j] of their Lie derivatives.
struct PsiChainData {
    std::size_t tuple_index = 0;
    std::size_t direction = 0;        // chain owner (the per-eigenvalue pivot)
    std::vector<Expr> v;              // v[theta-1] is v_theta, theta = 1..s-1
    std::vector<cvec> mu;             // mu[theta-1][j], j over direction_count()
    double mu_constant_violation = 0.0;
    bool valid = true;
    bool is_real = false;
};

/// Quadrature accumulator: one integrand per direction, co-integrated along
/// t-paths from the anchor t = 0. Integrands may reference lower accumulators.
struct QuadAccumulator {
    std::size_t id = 0;
    std::vector<Expr> integrands;  // indexed by direction, expressions in t (+ quad refs)
};

struct QuadRegistry {
    std::vector<QuadAccumulator> accumulators;

    std::size_t add(std::vector<Expr> integrands) {
        QuadAccumulator acc;
        acc.id = accumulators.size();
        acc.integrands = std::move(integrands);
        accumulators.push_back(acc);
        return accumulators.size() - 1;
    }
};

/// Accumulator values at t, integrated along the straight segment 0 -> t by RK4.
QuadEnv quad_env_at(const QuadRegistry& registry, const SystemSpec& spec,
                    const std::vector<double>& t, double step = 1e-3);

/// Directional derivatives of every accumulator for the given direction,
/// written into env.derivs (values must already be present).
void fill_quad_derivs(const QuadRegistry& registry, const Point& p, const Direction& dir,
                      QuadEnv& env);

/// First nullspace vector of the exponent system (rows = directions, columns =
/// participating factors), rationalized: when dividing by the smallest-magnitude
/// entry leaves every component within 1e-9 of a (Gaussian) integer bounded by
/// 64, the integer vector is returned.
cvec exponent_solution(const CMatrix& lambda_matrix, bool real_field, double tol);
std::vector<cvec> exponent_solutions(const CMatrix& lambda_matrix, bool real_field, double tol);

/// Random points with every listed form bounded away from zero
/// (|form| > 1e-3 (1 + |x|_inf)); box [-2,2] on both t and x.
std::vector<Point> sample_safe_points(const SystemSpec& spec, const std::vector<Expr>& forms,
                                      std::size_t count, std::mt19937_64& rng);

/// Chain functions from the triangular reconstruction system, with mu constants
/// estimated over the samples and snapped to integers / half-integers.
PsiChainData psi_chain(const TupleChain& chain, const SystemSpec& spec,
                       const std::vector<Point>& samples, double tol);

/// Constructs every candidate first integral the spectral data supports.
class IntegralBuilder {
public:
    IntegralBuilder(const SystemSpec& spec, const CommonEigenData& data, std::uint64_t seed,
                    double tol);

    const std::vector<PsiChainData>& chains() const { return chains_; }
    const std::vector<std::string>& notes() const { return notes_; }
    const QuadRegistry& registry() const { return registry_; }

    /// Autonomous integrals from common eigenvectors and chain functions.
    std::vector<FirstIntegral> build_autonomous();
    /// Time-dependent integrals of the homogeneous system.
    std::vector<FirstIntegral> build_nonautonomous();
    /// Quadrature-carrying integrals of the forced system.
    std::vector<FirstIntegral> build_nonhomogeneous();

private:
    struct Block {
        Expr expr;
        cvec column;        // Lie-derivative coefficient per direction
        bool multiplicative;  // enters as expr^h; otherwise exp(h expr)
        bool linear_form;     // multiplicative block that is a bare linear form
        std::vector<Expr> excluded;
        std::size_t tuple_index;
    };

    void assemble_blocks();
    FirstIntegral integral_from_solution(const cvec& h) const;
    Expr time_offset_expr(const cvec& coefficients) const;  // sum_j c_j t_j over real t

    const SystemSpec& spec_;
    const CommonEigenData& data_;
    double tol_;
    std::mt19937_64 rng_;
    std::vector<Point> samples_;
    std::vector<PsiChainData> chains_;
    std::vector<Block> blocks_;
    std::vector<std::string> notes_;
    QuadRegistry registry_;
    bool blocks_ready_ = false;
};

/// Greedy rank-based selection: autonomous candidates first (until the
/// solvable-system target n - m), then nonautonomous ones up to n total.
/// Rank rows are real gradients at a safe point; complex-valued integrals
/// contribute their real and imaginary parts.
struct AssemblyResult {
    std::vector<FirstIntegral> selected;
    std::size_t independence_rank = 0;   // real rank of the selected rows
    std::size_t autonomous_count = 0;    // selected autonomous integrals
    std::string note;
};

AssemblyResult assemble_general_integral(const std::vector<FirstIntegral>& pool,
                                         const SystemSpec& spec, const QuadRegistry& registry,
                                         std::uint64_t seed, double tol);

/// Real gradient rows of an integral at p (one row, or two for complex-valued).
/// Quadrature-bearing integrals need the registry plus an environment holding
/// the accumulator values at p.t.
std::vector<std::vector<double>> gradient_rows(const FirstIntegral& f, const SystemSpec& spec,
                                               const Point& p, const QuadRegistry* registry,
                                               const QuadEnv* base_env, bool include_time);

double binomial(std::size_t n, std::size_t k);

} // namespace firstint
