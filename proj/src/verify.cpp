#include "firstint/verify.hpp"

#include <algorithm>
#include <cmath>

namespace firstint {

namespace {

constexpr double kOverflowLimit = 1e12;

struct CombinedState {
    std::vector<double> x;
    std::vector<cplx> q;
};

CombinedState rk4_step(const SystemSpec& spec, const QuadRegistry& registry,
                       const std::vector<double>& t_start, const std::vector<double>& u,
                       double s0, double h, const CombinedState& y0) {
    const std::size_t nq = registry.accumulators.size();
    auto rhs = [&](double s, const CombinedState& y) {
        Point p;
        p.t.resize(t_start.size());
        for (std::size_t j = 0; j < t_start.size(); ++j) p.t[j] = t_start[j] + s * u[j];
        p.x = y.x;
        CombinedState d;
        d.x.assign(y.x.size(), 0.0);
        for (std::size_t j = 0; j < u.size(); ++j) {
            if (u[j] == 0.0) continue;
            const std::vector<double> fj = direction_field(spec, j, p);
            for (std::size_t i = 0; i < d.x.size(); ++i) d.x[i] += u[j] * fj[i];
        }
        d.q.assign(nq, cplx(0.0, 0.0));
        if (nq) {
            QuadEnv env;
            for (std::size_t i = 0; i < nq; ++i) env.values[i] = y.q[i];
            for (std::size_t i = 0; i < nq; ++i) {
                const QuadAccumulator& acc = registry.accumulators[i];
                cplx sum(0.0, 0.0);
                for (std::size_t j = 0; j < acc.integrands.size() && j < u.size(); ++j)
                    if (u[j] != 0.0) sum += u[j] * eval_expr(acc.integrands[j], p, &env);
                d.q[i] = sum;
            }
        }
        return d;
    };
    auto axpy = [](const CombinedState& y, double a, const CombinedState& d) {
        CombinedState r = y;
        for (std::size_t i = 0; i < r.x.size(); ++i) r.x[i] += a * d.x[i];
        for (std::size_t i = 0; i < r.q.size(); ++i) r.q[i] += a * d.q[i];
        return r;
    };
    const CombinedState k1 = rhs(s0, y0);
    const CombinedState k2 = rhs(s0 + 0.5 * h, axpy(y0, 0.5 * h, k1));
    const CombinedState k3 = rhs(s0 + 0.5 * h, axpy(y0, 0.5 * h, k2));
    const CombinedState k4 = rhs(s0 + h, axpy(y0, h, k3));
    CombinedState out = y0;
    for (std::size_t i = 0; i < out.x.size(); ++i)
        out.x[i] += (h / 6.0) * (k1.x[i] + 2.0 * k2.x[i] + 2.0 * k3.x[i] + k4.x[i]);
    for (std::size_t i = 0; i < out.q.size(); ++i)
        out.q[i] += (h / 6.0) * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
    return out;
}

} // namespace

TrajectorySample integrate_trajectory(const SystemSpec& spec, const std::vector<double>& x0,
                                      const std::vector<std::vector<double>>& path, double step,
                                      const QuadRegistry& registry,
                                      const std::vector<Expr>& watch_forms) {
    if (path.size() < 2) throw input_error("integrate_trajectory: path needs two points");
    if (x0.size() != spec.state_dim())
        throw input_error("integrate_trajectory: state dimension mismatch");
    if (step <= 0.0) throw input_error("integrate_trajectory: step must be positive");

    TrajectorySample sample;
    CombinedState y;
    y.x = x0;
    y.q.assign(registry.accumulators.size(), cplx(0.0, 0.0));

    auto record = [&](const std::vector<double>& t, const CombinedState& st) {
        sample.path_t.push_back(t);
        sample.states.push_back(st.x);
        QuadEnv env;
        for (std::size_t i = 0; i < st.q.size(); ++i) env.values[i] = st.q[i];
        sample.quad.push_back(std::move(env));
    };

    std::vector<cplx> prev_watch(watch_forms.size(), cplx(0.0, 0.0));
    auto watch_values = [&](const std::vector<double>& t, const std::vector<double>& x) {
        Point p{t, x};
        std::vector<cplx> vals(watch_forms.size());
        for (std::size_t i = 0; i < watch_forms.size(); ++i) vals[i] = eval_expr(watch_forms[i], p);
        return vals;
    };

    record(path[0], y);
    prev_watch = watch_values(path[0], y.x);

    for (std::size_t seg = 0; seg + 1 < path.size(); ++seg) {
        const std::vector<double>& a = path[seg];
        const std::vector<double>& b = path[seg + 1];
        std::vector<double> u(a.size());
        double span = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            u[j] = b[j] - a[j];
            span = std::max(span, std::abs(u[j]));
        }
        const std::size_t steps =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / step)));
        const double h = 1.0 / static_cast<double>(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            y = rk4_step(spec, registry, a, u, static_cast<double>(k) * h, h, y);
            std::vector<double> t_now(a.size());
            for (std::size_t j = 0; j < a.size(); ++j)
                t_now[j] = a[j] + static_cast<double>(k + 1) * h * u[j];
            double xmag = 0.0;
            for (double v : y.x) xmag = std::max(xmag, std::abs(v));
            if (!std::isfinite(xmag) || xmag > kOverflowLimit) {
                sample.overflow = true;
                return sample;
            }
            const std::vector<cplx> now = watch_values(t_now, y.x);
            for (std::size_t i = 0; i < watch_forms.size(); ++i) {
                const cplx before = prev_watch[i], after = now[i];
                bool crossed = false;
                if (std::abs(before.imag()) < 1e-14 && std::abs(after.imag()) < 1e-14) {
                    crossed = before.real() * after.real() < 0.0;
                } else {
                    // branch cut of the principal power/log: negative real axis
                    crossed = before.imag() * after.imag() < 0.0 &&
                              (before.real() < 0.0 || after.real() < 0.0);
                }
                if (crossed) {
                    sample.domain_events.push_back("crossed " + watch_forms[i]->text);
                    return sample;
                }
            }
            prev_watch = now;
            record(t_now, y);
        }
    }
    return sample;
}

double path_independence_check(const SystemSpec& spec, const std::vector<double>& x0,
                               const std::vector<double>& t_target, double step) {
    if (spec.kind == SystemKind::ode)
        throw input_error("path_independence_check: multi-time systems only");
    const std::size_t dims = spec.time_dim();
    if (t_target.size() != dims) throw input_error("path_independence_check: t dimension");
    QuadRegistry empty;

    std::vector<std::vector<double>> axis_path{std::vector<double>(dims, 0.0)};
    for (std::size_t j = 0; j < dims; ++j) {
        std::vector<double> next = axis_path.back();
        next[j] = t_target[j];
        if (next != axis_path.back()) axis_path.push_back(next);
    }
    if (axis_path.size() < 2) return 0.0;
    const std::vector<std::vector<double>> straight{std::vector<double>(dims, 0.0), t_target};

    const TrajectorySample a = integrate_trajectory(spec, x0, axis_path, step, empty, {});
    const TrajectorySample b = integrate_trajectory(spec, x0, straight, step, empty, {});
    if (a.overflow || b.overflow)
        throw numerical_error("path_independence_check: trajectory overflow", kOverflowLimit);
    const std::vector<double>& xa = a.states.back();
    const std::vector<double>& xb = b.states.back();
    double gap = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i) {
        gap = std::max(gap, std::abs(xa[i] - xb[i]));
        mag = std::max(mag, std::abs(xa[i]));
    }
    return gap / (1.0 + mag);
}

double constancy_check(const FirstIntegral& f, const TrajectorySample& sample) {
    if (sample.steps() < 2) throw input_error("constancy_check: sample too short");
    Point p0{sample.path_t[0], sample.states[0]};
    cplx f0;
    try {
        f0 = eval_expr(f.expr, p0, &sample.quad[0]);
    } catch (const domain_error& e) {
        throw domain_error(std::string("constancy_check: start point excluded: ") + e.what());
    }
    double drift = 0.0;
    for (std::size_t k = 1; k < sample.steps(); ++k) {
        Point p{sample.path_t[k], sample.states[k]};
        const cplx fk = eval_expr(f.expr, p, &sample.quad[k]);
        drift = std::max(drift, std::abs(fk - f0));
    }
    return drift / (1.0 + std::abs(f0));
}

namespace {

/// Residual sweep over a fixed point set with prebuilt accumulator values
/// (shared across the integrals of one system).
double lie_residual_over_points(const FirstIntegral& f, const SystemSpec& spec,
                                const QuadRegistry& registry, const std::vector<Point>& points,
                                const std::vector<QuadEnv>* envs) {
    const bool quad_bearing = contains_quadrature(f.expr);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const Point& p = points[pi];
        QuadEnv env;
        if (quad_bearing) env = envs ? (*envs)[pi] : quad_env_at(registry, spec, p.t);
        cplx value;
        try {
            value = eval_expr(f.expr, p, quad_bearing ? &env : nullptr);
        } catch (const domain_error&) {
            continue;
        }
        for (std::size_t j = 0; j < spec.time_dim(); ++j) {
            Direction dir;
            dir.dt.assign(spec.time_dim(), 0.0);
            dir.dt[j] = 1.0;
            dir.dx = direction_field(spec, j, p);
            QuadEnv local;
            const QuadEnv* envp = nullptr;
            if (quad_bearing) {
                local = env;
                fill_quad_derivs(registry, p, dir, local);
                envp = &local;
            }
            cplx deriv;
            try {
                deriv = eval_dual(f.expr, p, dir, envp).deriv;
            } catch (const domain_error&) {
                continue;
            }
            worst = std::max(worst, std::abs(deriv) / (1.0 + std::abs(value)));
        }
    }
    return worst;
}

} // namespace

double lie_residual_check(const FirstIntegral& f, const SystemSpec& spec,
                          const QuadRegistry& registry, std::size_t n_samples,
                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Point> points = sample_safe_points(spec, f.excluded_hyperplanes,
                                                         n_samples, rng);
    const bool quad_bearing = contains_quadrature(f.expr);
    double worst = 0.0;
    for (const Point& p : points) {
        QuadEnv env;
        if (quad_bearing) env = quad_env_at(registry, spec, p.t);
        cplx value;
        try {
            value = eval_expr(f.expr, p, quad_bearing ? &env : nullptr);
        } catch (const domain_error&) {
            continue;
        }
        for (std::size_t j = 0; j < spec.time_dim(); ++j) {
            Direction dir;
            dir.dt.assign(spec.time_dim(), 0.0);
            dir.dt[j] = 1.0;
            dir.dx = direction_field(spec, j, p);
            QuadEnv local;
            const QuadEnv* envp = nullptr;
            if (quad_bearing) {
                local = env;
                fill_quad_derivs(registry, p, dir, local);
                envp = &local;
            }
            cplx deriv;
            try {
                deriv = eval_dual(f.expr, p, dir, envp).deriv;
            } catch (const domain_error&) {
                continue;
            }
            worst = std::max(worst, std::abs(deriv) / (1.0 + std::abs(value)));
        }
    }
    return worst;
}

std::size_t independence_check(const std::vector<FirstIntegral>& fs, const SystemSpec& spec,
                               const QuadRegistry& registry, const Point& point) {
    if (fs.empty()) return 0;
    bool any_nonauto = false;
    for (const FirstIntegral& f : fs) any_nonauto = any_nonauto || !f.autonomous;
    QuadEnv env;
    bool need_env = false;
    for (const FirstIntegral& f : fs) need_env = need_env || contains_quadrature(f.expr);
    if (need_env) env = quad_env_at(registry, spec, point.t);
    std::vector<std::vector<double>> rows;
    for (const FirstIntegral& f : fs) {
        const auto r = gradient_rows(f, spec, point, &registry, &env, any_nonauto);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    CMatrix mat(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double mag = 0.0;
        for (double v : rows[r]) mag = std::max(mag, std::abs(v));
        const double inv = mag > 0.0 && std::isfinite(mag) ? 1.0 / mag : 1.0;
        for (std::size_t c = 0; c < rows[0].size(); ++c) mat.at(r, c) = inv * rows[r][c];
    }
    return rank(mat, 1e-8);
}

std::vector<std::vector<double>> unit_grid(std::size_t dims, std::size_t points_per_axis) {
    std::vector<std::vector<double>> grid;
    std::vector<std::size_t> idx(dims, 0);
    for (;;) {
        std::vector<double> t(dims);
        for (std::size_t j = 0; j < dims; ++j)
            t[j] = points_per_axis == 1
                       ? 0.0
                       : -1.0 + 2.0 * static_cast<double>(idx[j]) /
                                    static_cast<double>(points_per_axis - 1);
        grid.push_back(std::move(t));
        std::size_t j = 0;
        for (; j < dims; ++j) {
            if (++idx[j] < points_per_axis) break;
            idx[j] = 0;
        }
        if (j == dims) break;
    }
    return grid;
}

IntegralVerification verify_integral(const FirstIntegral& f, const SystemSpec& spec,
                                     const QuadRegistry& registry, const VerifyConfig& config) {
    return verify_integral_shared(f, spec, registry, config, nullptr, nullptr);
}

IntegralVerification verify_integral_shared(const FirstIntegral& f, const SystemSpec& spec,
                                            const QuadRegistry& registry,
                                            const VerifyConfig& config,
                                            const std::vector<Point>* shared_points,
                                            const std::vector<QuadEnv>* shared_envs) {
    IntegralVerification v;
    v.samples_used = config.samples;
    if (shared_points && f.excluded_hyperplanes.empty())
        v.max_lie_residual =
            lie_residual_over_points(f, spec, registry, *shared_points, shared_envs);
    else
        v.max_lie_residual = lie_residual_check(f, spec, registry, config.samples, config.seed);

    std::mt19937_64 rng(config.seed ^ 0xda3e39cb94b95bdbull);
    std::uniform_real_distribution<double> dir_dist(-1.0, 1.0);
    std::size_t done = 0;
    while (done < config.trajectories) {
        const Point start = sample_safe_points(spec, f.excluded_hyperplanes, 1, rng).front();
        std::vector<double> u(spec.time_dim());
        double span = 0.0;
        for (double& e : u) {
            e = dir_dist(rng);
            span = std::max(span, std::abs(e));
        }
        if (span < 0.1) continue;
        for (double& e : u) e /= span;  // unit span
        std::vector<std::vector<double>> path{std::vector<double>(spec.time_dim(), 0.0), u};
        TrajectorySample sample;
        try {
            sample = integrate_trajectory(spec, start.x, path, config.step, registry,
                                          f.excluded_hyperplanes);
        } catch (const domain_error&) {
            continue;
        }
        if (sample.overflow || sample.steps() < 2) {
            v.domain_events += sample.domain_events.size();
            ++done;  // discarded sample still consumes the budget (determinism)
            continue;
        }
        v.domain_events += sample.domain_events.size();
        try {
            v.max_trajectory_drift = std::max(v.max_trajectory_drift, constancy_check(f, sample));
        } catch (const domain_error&) {
        }
        ++done;
    }
    v.trajectories_used = done;
    return v;
}

VerificationReport run_verification(const SystemSpec& spec,
                                    const std::vector<FirstIntegral>& integrals,
                                    const QuadRegistry& registry, const VerifyConfig& config) {
    VerificationReport report;
    report.seed = config.seed;
    report.solvability = frobenius_check(spec, config.solvability_tol);
    if (spec.has_forcing()) {
        const double res =
            forcing_compat_check(spec, unit_grid(spec.time_dim(), 5), config.solvability_tol);
        report.forcing_residual = res;
        report.solvability.forcing_residual = res;
        if (res > 1e-6) report.solvability.solvable = false;
    }
    std::vector<Point> shared_points;
    std::vector<QuadEnv> shared_envs;
    const std::vector<Point>* pointsp = nullptr;
    const std::vector<QuadEnv>* envsp = nullptr;
    if (!registry.accumulators.empty()) {
        std::mt19937_64 rng(config.seed);
        shared_points = sample_safe_points(spec, {}, config.samples, rng);
        shared_envs.reserve(shared_points.size());
        for (const Point& p : shared_points)
            shared_envs.push_back(quad_env_at(registry, spec, p.t));
        pointsp = &shared_points;
        envsp = &shared_envs;
    }
    for (const FirstIntegral& f : integrals)
        report.per_integral.push_back(
            verify_integral_shared(f, spec, registry, config, pointsp, envsp));

    if (spec.kind != SystemKind::ode) {
        std::mt19937_64 rng(config.seed ^ 0x853c49e6748fea9bull);
        const Point x0 = sample_safe_points(spec, {}, 1, rng).front();
        std::vector<double> t_target(spec.time_dim());
        const double pattern[4] = {0.5, 0.7, 0.3, 0.6};
        for (std::size_t j = 0; j < t_target.size(); ++j) t_target[j] = pattern[j % 4];
        report.path_independence_gap =
            path_independence_check(spec, x0.x, t_target, config.step);
    }

    if (!integrals.empty()) {
        std::vector<Expr> forms;
        for (const FirstIntegral& f : integrals)
            for (const Expr& g : f.excluded_hyperplanes) forms.push_back(g);
        std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dull);
        const Point p = sample_safe_points(spec, forms, 1, rng).front();
        report.independence_rank = independence_check(integrals, spec, registry, p);
        for (const FirstIntegral& f : integrals)
            if (f.autonomous) ++report.autonomous_count;
    }
    return report;
}

} // namespace firstint
