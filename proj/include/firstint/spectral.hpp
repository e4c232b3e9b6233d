#pragma once

#include <optional>
#include <vector>

#include "firstint/linalg.hpp"
#include "firstint/system.hpp"

namespace firstint {

/// A simultaneous eigenvector of the whole operator family with its
/// per-direction eigenvalues.
struct EigenTuple {
    cvec vector;   // length n (2n for rlinear), leading-one normalized
    cvec lambdas;  // one eigenvalue per direction (2m for rlinear)
    bool is_real = false;
    std::optional<std::size_t> conjugate_partner;
};

/// Jordan chain attached to one tuple in one matrix of the family.
struct TupleChain {
    std::size_t tuple_index = 0;
    std::size_t direction = 0;       // matrix owning the chain
    std::vector<cvec> vectors;       // nu^0 .. nu^{s-1}; nu^0 is the tuple vector
};

struct CommonEigenData {
    std::vector<EigenTuple> tuples;
    std::size_t pivot = 0;  // matrix with the fewest elementary divisors
    std::vector<EigenStructure> per_matrix;
    std::vector<TupleChain> chains;  // at most one per tuple
    bool split_warning = false;      // a degenerate eigenspace resisted full splitting

    const TupleChain* chain_for(std::size_t tuple_index) const;
};

/// Index of the family member with the fewest elementary divisors (ties to the
/// lowest index).
std::size_t select_pivot_matrix(const std::vector<EigenStructure>& eigen);

/// Common eigenvectors of the family: pivot eigenspaces split recursively by
/// the restrictions of the remaining matrices, every returned tuple verified
/// against every member. Chains are attached per tuple from the first matrix
/// (pivot first) whose divisor structure lets the tuple extend.
CommonEigenData common_eigenvectors(const SystemSpec& spec,
                                    const std::vector<EigenStructure>& eigen, double tol);

/// Spectra of all operator matrices of the family.
std::vector<EigenStructure> family_eigen_structures(const SystemSpec& spec, double tol);

/// Chain extension compatible with the whole family: besides the chain
/// identity in the zeta matrix, every other member must act on the chain by
/// the binomial recombination with constant coefficients, which pins the
/// extension gauge. Returns the chain links that satisfy all of it (length 1
/// when no extension exists).
std::vector<cvec> family_chain(const std::vector<CMatrix>& ops, const cvec& lambdas,
                               std::size_t zeta, std::size_t s_max, const cvec& nu0,
                               double tol);

} // namespace firstint
