#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "firstint/builder.hpp"
#include "firstint/spectral.hpp"
#include "firstint/system.hpp"
#include "firstint/verify.hpp"

namespace firstint {

struct AnalysisOptions {
    std::uint64_t seed = 0;
    double tol = 1e-9;
    bool exhaustive = false;  // reserved: the global exponent system already spans all subsets
};

/// Full analysis of one system: solvability, spectra, candidate integrals and
/// the assembled general integral.
struct Analysis {
    SystemSpec spec;
    AnalysisOptions options;
    SolvabilityVerdict solvability;
    std::optional<double> forcing_residual;
    std::vector<EigenStructure> eigen;
    CommonEigenData data;
    bool spectral_ran = false;
    std::vector<PsiChainData> chains;
    std::vector<FirstIntegral> pool;
    AssemblyResult assembly;
    QuadRegistry registry;
    std::vector<std::string> notes;
};

Analysis analyze(const SystemSpec& spec, const AnalysisOptions& options);

nlohmann::ordered_json analysis_json(const Analysis& analysis,
                                     const VerificationReport* verification);

std::string human_summary(const Analysis& analysis, const VerificationReport* verification);

} // namespace firstint
