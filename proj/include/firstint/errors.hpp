#pragma once

#include <stdexcept>
#include <string>

namespace firstint {

/// Malformed or contract-violating input (bad JSON, dimension mismatch, non-finite data).
struct input_error : std::runtime_error {
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

/// An iteration failed to converge; carries the worst residual observed.
struct numerical_error : std::runtime_error {
    double residual;
    numerical_error(const std::string& what, double res)
        : std::runtime_error(what), residual(res) {}
};

/// The requested algebraic structure does not exist (rank obstruction, trivial nullspace, ...).
struct structural_error : std::runtime_error {
    explicit structural_error(const std::string& what) : std::runtime_error(what) {}
};

/// Evaluation left the admissible domain; names the excluded locus when known.
struct domain_error : std::runtime_error {
    explicit domain_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace firstint
