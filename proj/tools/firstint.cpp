#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "firstint/report.hpp"

namespace {

using firstint::Analysis;
using firstint::AnalysisOptions;
using firstint::VerificationReport;
using firstint::VerifyConfig;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitSolvability = 3;
constexpr int kExitVerification = 4;

void emit_error(const std::string& type, const std::string& message) {
    nlohmann::ordered_json err;
    err["error"]["type"] = type;
    err["error"]["message"] = message;
    std::cerr << err.dump() << "\n";
}

std::size_t thread_budget() {
    const char* env = std::getenv("FIRSTINT_THREADS");
    if (!env) return 1;
    const long v = std::atol(env);
    if (v == 0) return std::max(1u, std::thread::hardware_concurrency());
    return static_cast<std::size_t>(std::max(1l, v));
}

/// Per-integral verification, parallelized over a fixed partition so the
/// report is identical for any thread budget.
VerificationReport verify_parallel(const firstint::SystemSpec& spec, const Analysis& analysis,
                                   const VerifyConfig& config) {
    const std::size_t threads = thread_budget();
    const std::vector<firstint::FirstIntegral>& fs = analysis.assembly.selected;
    if (threads <= 1 || fs.size() <= 1)
        return firstint::run_verification(spec, fs, analysis.registry, config);

    VerificationReport report = firstint::run_verification(spec, {}, analysis.registry, config);
    report.per_integral.resize(fs.size());
    std::vector<std::future<firstint::IntegralVerification>> tasks;
    for (std::size_t i = 0; i < fs.size(); ++i)
        tasks.push_back(std::async(std::launch::async, [&, i] {
            return firstint::verify_integral(fs[i], spec, analysis.registry, config);
        }));
    for (std::size_t i = 0; i < fs.size(); ++i) report.per_integral[i] = tasks[i].get();

    std::vector<firstint::Expr> forms;
    for (const auto& f : fs)
        for (const auto& g : f.excluded_hyperplanes) forms.push_back(g);
    std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dull);
    const firstint::Point p = firstint::sample_safe_points(spec, forms, 1, rng).front();
    report.independence_rank = firstint::independence_check(fs, spec, analysis.registry, p);
    for (const auto& f : fs)
        if (f.autonomous) ++report.autonomous_count;
    return report;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"first integrals of constant-coefficient linear differential systems"};
    app.require_subcommand(1);

    std::string input_path, out_path;
    double tol = 1e-9;
    std::size_t trajectories = 20;
    double step = 1e-3;
    std::uint64_t seed = 0;
    bool exhaustive = false;
    bool require_solvable = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("input", input_path, "system description (JSON)")->required();
        cmd->add_option("--out", out_path, "write the machine report to this file");
        cmd->add_option("--tol", tol, "solvability / construction tolerance");
        cmd->add_option("--trajectories", trajectories, "trajectories per integral");
        cmd->add_option("--step", step, "RK4 step");
        cmd->add_option("--seed", seed, "sampling seed");
        cmd->add_flag("--exhaustive", exhaustive, "exhaustive factor-subset search");
        cmd->add_flag("--require-solvable", require_solvable,
                      "fail when the system is not completely solvable");
    };
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "construct first integrals");
    CLI::App* verify_cmd = app.add_subcommand("verify", "construct and numerically verify");
    CLI::App* emit_cmd = app.add_subcommand("emit", "print the constructed expressions only");
    add_common(analyze_cmd);
    add_common(verify_cmd);
    add_common(emit_cmd);

    CLI11_PARSE(app, argc, argv);

    if (step <= 0.0 || tol <= 0.0) {
        emit_error("input", "numeric flags must be positive");
        return kExitInput;
    }

    try {
        firstint::SystemSpec spec = firstint::parse_spec_file(input_path);
        if (tol != 1e-9) spec.tol = tol;
        AnalysisOptions options;
        options.seed = seed;
        options.tol = std::min(tol, 1e-6);
        options.exhaustive = exhaustive;
        Analysis analysis = firstint::analyze(spec, options);

        const bool is_verify = verify_cmd->parsed();
        const bool is_emit = emit_cmd->parsed();

        if (is_emit) {
            for (const auto& f : analysis.assembly.selected)
                std::cout << firstint::render_expr(f.expr) << "\n";
            return analysis.solvability.solvable || !require_solvable ? kExitOk
                                                                      : kExitSolvability;
        }

        VerificationReport report;
        const VerificationReport* reportp = nullptr;
        if (is_verify) {
            VerifyConfig config;
            config.trajectories = trajectories;
            config.step = step;
            config.seed = seed;
            config.solvability_tol = spec.tol;
            report = verify_parallel(spec, analysis, config);
            reportp = &report;
        }

        std::cout << firstint::human_summary(analysis, reportp);
        const nlohmann::ordered_json doc = firstint::analysis_json(analysis, reportp);
        if (!out_path.empty()) {
            std::ofstream out(out_path);
            if (!out) {
                emit_error("input", "cannot write " + out_path);
                return kExitInput;
            }
            out << doc.dump(2) << "\n";
        } else {
            // no --out: print the machine report after the summary
            std::cout << doc.dump(2) << "\n";
        }

        if (!analysis.solvability.solvable && (is_verify || require_solvable))
            return kExitSolvability;
        if (is_verify) {
            for (const auto& v : report.per_integral)
                if (v.max_lie_residual > 1e-8 || v.max_trajectory_drift > 1e-6)
                    return kExitVerification;
        }
        return kExitOk;
    } catch (const firstint::input_error& e) {
        emit_error("input", e.what());
        return kExitInput;
    } catch (const firstint::domain_error& e) {
        emit_error("domain", e.what());
        return kExitInput;
    } catch (const firstint::structural_error& e) {
        emit_error("structural", e.what());
        return kExitInput;
    } catch (const firstint::numerical_error& e) {
        emit_error("numerical", e.what());
        return kExitVerification;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return kExitInput;
    }
}
