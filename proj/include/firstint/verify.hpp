#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "firstint/builder.hpp"
#include "firstint/system.hpp"

namespace firstint {

/// One integrated trajectory: a polyline in t, the states along it, and the
/// co-integrated quadrature accumulators per step. Aborted at the first
/// hyperplane crossing or state overflow.
struct TrajectorySample {
    std::vector<std::vector<double>> path_t;
    std::vector<std::vector<double>> states;
    std::vector<QuadEnv> quad;  // values only
    std::vector<std::string> domain_events;
    bool overflow = false;

    std::size_t steps() const { return states.size(); }
};

/// Classical fixed-step RK4 along the polyline (forcing included); the watch
/// forms trigger domain events on sign change (real) or on crossing the
/// negative real axis (complex).
TrajectorySample integrate_trajectory(const SystemSpec& spec, const std::vector<double>& x0,
                                      const std::vector<std::vector<double>>& path, double step,
                                      const QuadRegistry& registry,
                                      const std::vector<Expr>& watch_forms);

/// Endpoint mismatch between the axis-ordered polyline and the straight
/// segment from 0 to t_target; small iff the system is completely solvable.
double path_independence_check(const SystemSpec& spec, const std::vector<double>& x0,
                               const std::vector<double>& t_target, double step);

/// max_k |F(t_k, x_k) - F(t_0, x_0)| / (1 + |F(t_0, x_0)|) over the sample.
double constancy_check(const FirstIntegral& f, const TrajectorySample& sample);

/// Max of |lie_derivative| / (1 + |F|) over safe sample points and directions.
double lie_residual_check(const FirstIntegral& f, const SystemSpec& spec,
                          const QuadRegistry& registry, std::size_t n_samples,
                          std::uint64_t seed);

/// Jacobian rank of the set at the point; rows are (t, x) gradients when any
/// member is nonautonomous, x-only otherwise.
std::size_t independence_check(const std::vector<FirstIntegral>& fs, const SystemSpec& spec,
                               const QuadRegistry& registry, const Point& point);

struct IntegralVerification {
    double max_lie_residual = 0.0;
    double max_trajectory_drift = 0.0;
    std::size_t samples_used = 0;
    std::size_t trajectories_used = 0;
    std::size_t domain_events = 0;
};

struct VerifyConfig {
    std::size_t trajectories = 20;
    double step = 1e-3;
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    double solvability_tol = 1e-9;
};

struct VerificationReport {
    SolvabilityVerdict solvability;
    std::vector<IntegralVerification> per_integral;
    std::size_t independence_rank = 0;
    std::size_t autonomous_count = 0;
    std::optional<double> path_independence_gap;
    std::optional<double> forcing_residual;
    std::uint64_t seed = 0;
};

/// Full verification pass over a set of integrals (reproducible per seed).
VerificationReport run_verification(const SystemSpec& spec,
                                    const std::vector<FirstIntegral>& integrals,
                                    const QuadRegistry& registry, const VerifyConfig& config);

/// Uniform grid over [-1,1]^m with points_per_axis nodes per axis.
std::vector<std::vector<double>> unit_grid(std::size_t dims, std::size_t points_per_axis);

/// Random unit-span trajectory drift of one integral (helper shared by the
/// report and the acceptance suite).
IntegralVerification verify_integral(const FirstIntegral& f, const SystemSpec& spec,
                                     const QuadRegistry& registry, const VerifyConfig& config);

/// Same, but reusing a caller-provided safe point set with matching
/// accumulator values (valid for integrals with no excluded hyperplanes).
IntegralVerification verify_integral_shared(const FirstIntegral& f, const SystemSpec& spec,
                                            const QuadRegistry& registry,
                                            const VerifyConfig& config,
                                            const std::vector<Point>* shared_points,
                                            const std::vector<QuadEnv>* shared_envs);

} // namespace firstint
