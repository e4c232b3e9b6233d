#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "firstint/expr.hpp"
#include "firstint/linalg.hpp"

namespace firstint {

enum class SystemKind { ode, total, rlinear };

std::string to_string(SystemKind k);

/// Forcing along one independent variable: n expressions in the time variables only.
struct ForcingTerm {
    std::vector<Expr> components;
};

struct SolvabilityVerdict {
    bool solvable = true;
    double max_commutator_residual = 0.0;
    std::optional<std::pair<std::size_t, std::size_t>> offending_pair;
    std::optional<double> forcing_residual;
    std::optional<CMatrix> defect_witness;  // flow-matrix commutator [p_j, p_zeta]
};

/// A validated constant-coefficient linear system.
///
/// Conventions:
///  - `flow` holds the matrices of the equations as written, dx = sum_j flow[j] x dt_j
///    (for rlinear these are the transposed embedded matrices acting on gamma = (w, wbar)).
///  - The operator matrices whose eigenvectors produce partial integrals are the
///    transposes of `flow`; `op_matrix(j)` returns them.
///  - For rlinear systems the real coordinates are x = (Re w, Im w) and
///    t = (Re z, Im z); there are 2m real directions, j < m meaning Re z_j and
///    m + j meaning Im z_j.
struct SystemSpec {
    SystemKind kind = SystemKind::ode;
    std::size_t n = 0;  // state dimension as declared (complex count for rlinear)
    std::size_t m = 0;  // independent variables as declared (complex count for rlinear)
    std::vector<CMatrix> flow;          // m matrices (2m of size 2n x 2n for rlinear)
    std::vector<ForcingTerm> forcing;   // empty when homogeneous
    double tol = 1e-9;

    bool real_field() const { return kind != SystemKind::rlinear; }
    bool has_forcing() const { return !forcing.empty(); }

    /// Real state dimension seen by expressions and the integrator.
    std::size_t state_dim() const { return kind == SystemKind::rlinear ? 2 * n : n; }
    /// Real time dimension.
    std::size_t time_dim() const { return kind == SystemKind::rlinear ? 2 * m : m; }
    /// Number of directions carrying eigenvalue data (m, or 2m formal directions for rlinear).
    std::size_t direction_count() const { return kind == SystemKind::rlinear ? 2 * m : m; }

    CMatrix op_matrix(std::size_t j) const { return transpose(flow.at(j)); }
};

/// Parses and validates the JSON system description (see README for the schema).
/// Dimension violations and malformed numbers raise input_error with a JSON
/// pointer to the offending element.
SystemSpec parse_spec(const std::string& json_text);
SystemSpec parse_spec_file(const std::string& path);

/// Raw R-linear description: coefficients a[tau][k][rho] of the 2m directional
/// forms over gamma = (w_1..w_n, conj w_1..conj w_n).
struct RLinearRaw {
    std::size_t n = 0;
    std::size_t m = 0;
    /// a[tau][k][rho], tau < n, k < 2m, rho < 2n.
    std::vector<std::vector<cvec>> coeffs;
};

/// Builds the 2m embedded 2n x 2n matrices of the coefficient-space eigenproblem
/// and the matching flow matrices on gamma.
SystemSpec embed_rlinear(const RLinearRaw& raw, double tol);

/// Pairwise commutator test of the directional generators.
SolvabilityVerdict frobenius_check(const SystemSpec& spec, double tol);

/// Max residual of the mixed-partial forcing condition over the sample grid.
/// Central differences with step 1e-6 (1 + |t|).
double forcing_compat_check(const SystemSpec& spec,
                            const std::vector<std::vector<double>>& sample_grid, double tol);

/// Real-coordinate vector field of direction j at p (forcing included when present).
std::vector<double> direction_field(const SystemSpec& spec, std::size_t j, const Point& p,
                                    bool include_forcing = true);

/// Lie derivative of e along direction j at p by virtue of the system.
cplx lie_derivative(const Expr& e, const SystemSpec& spec, std::size_t j, const Point& p,
                    const QuadEnv* quad = nullptr, bool include_forcing = true);

/// gamma-space linear form as complex coefficients over the real coordinates
/// x = (Re w, Im w); nu has length 2n.
cvec gamma_linform_coeffs(const cvec& nu);

} // namespace firstint
