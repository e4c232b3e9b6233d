#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "firstint/report.hpp"

namespace testutil {

using namespace firstint;

inline std::string specs_dir() {
#ifdef FIRSTINT_SPECS_DIR
    return FIRSTINT_SPECS_DIR;
#else
    return "specs";
#endif
}

inline SystemSpec load_fixture(const std::string& name) {
    return parse_spec_file(specs_dir() + "/" + name + ".json");
}

inline Analysis analyze_fixture(const std::string& name, std::uint64_t seed = 0) {
    AnalysisOptions options;
    options.seed = seed;
    return analyze(load_fixture(name), options);
}

/// True when grad g lies in the span of the set's gradients at every point
/// (rank does not grow when the row is appended).
inline bool gradient_in_span(const std::vector<FirstIntegral>& set, const FirstIntegral& g,
                             const SystemSpec& spec, const QuadRegistry& registry,
                             const std::vector<Point>& points, double tol = 1e-6) {
    for (const Point& p : points) {
        QuadEnv env;
        bool need_env = contains_quadrature(g.expr);
        for (const FirstIntegral& f : set) need_env = need_env || contains_quadrature(f.expr);
        if (need_env) env = quad_env_at(registry, spec, p.t);
        bool any_nonauto = !g.autonomous;
        for (const FirstIntegral& f : set) any_nonauto = any_nonauto || !f.autonomous;
        std::vector<std::vector<double>> rows;
        try {
            for (const FirstIntegral& f : set) {
                const auto r = gradient_rows(f, spec, p, &registry, &env, any_nonauto);
                rows.insert(rows.end(), r.begin(), r.end());
            }
        } catch (const domain_error&) {
            continue;
        }
        std::vector<std::vector<double>> g_rows;
        try {
            g_rows = gradient_rows(g, spec, p, &registry, &env, any_nonauto);
        } catch (const domain_error&) {
            continue;
        }
        // scale rows to comparable magnitude before the rank tests
        auto normalized = [](std::vector<std::vector<double>> rs) {
            for (auto& r : rs) {
                double mag = 0.0;
                for (double v : r) mag = std::max(mag, std::abs(v));
                if (mag > 0.0)
                    for (double& v : r) v /= mag;
            }
            return rs;
        };
        rows = normalized(std::move(rows));
        g_rows = normalized(std::move(g_rows));
        bool finite = true;
        for (const auto* group : {&rows, &g_rows})
            for (const auto& r : *group)
                for (double v : r)
                    if (!std::isfinite(v)) finite = false;
        if (!finite) continue;  // sampled too close to a pole
        CMatrix base(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[0].size(); ++c) base.at(r, c) = rows[r][c];
        const std::size_t base_rank = rank(base, tol);
        CMatrix ext(rows.size() + g_rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[0].size(); ++c) ext.at(r, c) = rows[r][c];
        for (std::size_t r = 0; r < g_rows.size(); ++r)
            for (std::size_t c = 0; c < rows[0].size(); ++c)
                ext.at(rows.size() + r, c) = g_rows[r][c];
        if (rank(ext, tol) > base_rank) return false;
    }
    return true;
}

inline FirstIntegral fixture_integral(const std::string& expr_text, bool autonomous = true,
                                      bool complex_valued = false) {
    FirstIntegral f;
    f.expr = parse_expr(expr_text);
    f.autonomous = autonomous;
    f.complex_valued = complex_valued;
    f.route = "fixture";
    return f;
}

/// gamma-space linear form of an R-linear coefficient vector over the real
/// coordinates (Re w, Im w).
inline Expr gamma_form(const cvec& nu) { return make_linform(gamma_linform_coeffs(nu)); }

} // namespace testutil
