#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "firstint/report.hpp"
#include "firstint/verify.hpp"

using namespace firstint;
using testutil::analyze_fixture;
using testutil::fixture_integral;
using testutil::load_fixture;

namespace {

const QuadRegistry kNoQuads;

SystemSpec rotation2d() {
    return parse_spec(R"({"kind":"ode","n":2,"m":1,"matrices":[[[0,-1],[1,0]]]})");
}

} // namespace

TEST_CASE("zero field keeps the trajectory constant") {
    const SystemSpec spec =
        parse_spec(R"({"kind":"ode","n":2,"m":1,"matrices":[[[0,0],[0,0]]]})");
    const TrajectorySample s =
        integrate_trajectory(spec, {1.0, -2.0}, {{0.0}, {1.0}}, 1e-2, kNoQuads, {});
    REQUIRE(s.steps() > 2);
    for (const auto& x : s.states) {
        CHECK(x[0] == doctest::Approx(1.0));
        CHECK(x[1] == doctest::Approx(-2.0));
    }
}

TEST_CASE("planar rotation returns to the start after a full turn") {
    const SystemSpec spec = rotation2d();
    const double two_pi = 2.0 * std::acos(-1.0);
    const TrajectorySample s =
        integrate_trajectory(spec, {1.0, 0.0}, {{0.0}, {two_pi}}, 1e-3, kNoQuads, {});
    const auto& last = s.states.back();
    CHECK(std::abs(last[0] - 1.0) < 1e-9);
    CHECK(std::abs(last[1]) < 1e-9);
}

TEST_CASE("halving the step shrinks the endpoint error fourth order") {
    const SystemSpec spec = rotation2d();
    auto endpoint_error = [&](double step) {
        const TrajectorySample s =
            integrate_trajectory(spec, {1.0, 0.0}, {{0.0}, {1.0}}, step, kNoQuads, {});
        const auto& x = s.states.back();
        return std::hypot(x[0] - std::cos(1.0), x[1] - std::sin(1.0));
    };
    const double e1 = endpoint_error(4e-2);
    const double e2 = endpoint_error(2e-2);
    CHECK(e1 / e2 >= 8.0);
}

TEST_CASE("state overflow is reported as an event") {
    const SystemSpec spec =
        parse_spec(R"({"kind":"ode","n":1,"m":1,"matrices":[[[40]]]})");
    const TrajectorySample s =
        integrate_trajectory(spec, {1.0}, {{0.0}, {1.0}}, 1e-3, kNoQuads, {});
    CHECK(s.overflow);
}

TEST_CASE("hyperplane crossing truncates the sample") {
    // x' = -x crosses nothing; x' = 1 field crosses x1 = 0 from -0.5
    const SystemSpec spec =
        parse_spec(R"({"kind":"ode","n":1,"m":1,"matrices":[[[0]]],
                      "forcing":[["1"]]})");
    const TrajectorySample s = integrate_trajectory(spec, {-0.5}, {{0.0}, {1.0}}, 1e-3,
                                                    kNoQuads, {make_linform({1.0})});
    CHECK(!s.domain_events.empty());
    CHECK(s.states.back()[0] < 0.0);
}

TEST_CASE("path independence holds for the commuting pair") {
    const SystemSpec spec = load_fixture("sys_2_3");
    std::mt19937_64 rng(3);
    const Point x0 = sample_safe_points(spec, {}, 1, rng).front();
    const double gap = path_independence_check(spec, x0.x, {0.5, 0.7}, 1e-3);
    CHECK(gap < 1e-6);
}

TEST_CASE("path independence fails for the defective pair") {
    const SystemSpec spec = load_fixture("sys_2_38");
    std::mt19937_64 rng(5);
    const Point x0 = sample_safe_points(spec, {}, 1, rng).front();
    const double gap = path_independence_check(spec, x0.x, {0.5, 0.5}, 1e-3);
    CHECK(gap > 1e-3);
}

TEST_CASE("zero target gives a zero gap") {
    const SystemSpec spec = load_fixture("sys_2_3");
    const double gap = path_independence_check(spec, {1.0, 2.0, 3.0, 4.0}, {0.0, 0.0}, 1e-3);
    CHECK(gap == 0.0);
}

TEST_CASE("constant expressions never drift") {
    const SystemSpec spec = rotation2d();
    const TrajectorySample s =
        integrate_trajectory(spec, {1.0, 0.0}, {{0.0}, {1.0}}, 1e-3, kNoQuads, {});
    CHECK(constancy_check(fixture_integral("5"), s) == 0.0);
}

TEST_CASE("kernel integral stays constant along four-state trajectories") {
    const SystemSpec spec = load_fixture("sys_3_2");
    std::mt19937_64 rng(11);
    const FirstIntegral f = fixture_integral("lin([1,-1,1,-1])");
    for (int i = 0; i < 5; ++i) {
        const Point x0 = sample_safe_points(spec, {}, 1, rng).front();
        const TrajectorySample s =
            integrate_trajectory(spec, x0.x, {{0.0}, {1.0}}, 1e-3, kNoQuads, {});
        CHECK(constancy_check(f, s) < 1e-10);
    }
}

TEST_CASE("rotation-pair integral stays constant on two-time paths") {
    const SystemSpec spec = load_fixture("sys_2_8");
    const FirstIntegral f = fixture_integral(
        "pow(lin([0,0,1]),-2)*pow(pow(lin([1,0,0]),2)+pow(lin([0,1,0]),2),1)"
        "*exp(2*atan2(lin([0,1,0]),lin([1,0,0])))");
    std::mt19937_64 rng(13);
    const std::vector<Expr> guards{make_linform({1, 0, 0}), make_linform({0, 0, 1}),
                                   make_linform({cplx(1, 0), cplx(0, 1), cplx(0, 0)})};
    int used = 0;
    for (int i = 0; i < 10 && used < 5; ++i) {
        const Point x0 = sample_safe_points(spec, guards, 1, rng).front();
        const TrajectorySample s =
            integrate_trajectory(spec, x0.x, {{0.0, 0.0}, {0.6, 0.8}}, 1e-3, kNoQuads, guards);
        if (s.steps() < 100) continue;  // aborted near a hyperplane
        CHECK(constancy_check(f, s) < 1e-6);
        ++used;
    }
    CHECK(used >= 5);
}

TEST_CASE("lie residuals separate integrals from non-integrals") {
    const SystemSpec spec = load_fixture("sys_3_6");
    FirstIntegral good = fixture_integral(
        "pow(pow(lin([1,0,-1]),2)+pow(lin([0,1,0]),2),1)"
        "*exp(-6*atan2(lin([0,1,0]),lin([1,0,-1])))");
    good.excluded_hyperplanes = {make_linform({1, 0, -1})};
    CHECK(lie_residual_check(good, spec, kNoQuads, 200, 0) < 1e-8);

    const FirstIntegral bad = fixture_integral("x1");
    CHECK(lie_residual_check(bad, spec, kNoQuads, 200, 0) > 1e-2);
}

TEST_CASE("six-state chain integral passes the residual test") {
    const SystemSpec spec = load_fixture("sys_2_28");
    // P1 P2^2 exp(-10 phi1 + 8 Re(v) + 6 Im(v)) built from the published closed forms
    const Expr a = make_linform({1, 1, 0, 0, 0, 0});
    const Expr b = make_linform({0, 1, 0, 0, 1, 1});
    const Expr c = make_linform({1, 0, 1, 0, 0, 0});
    const Expr d = make_linform({1, 0, 1, 0, 1, 1});
    const Expr e = make_linform({1, 0, 1, 1, 0, 1});
    const Expr g = make_linform({0, 0, 1, 0, 1, 0});
    const Expr p1 = make_sum({make_pow(a, 2.0), make_pow(b, 2.0)});
    const Expr p2 = make_sum({make_pow(e, 2.0), make_pow(g, 2.0)});
    const Expr vr = make_prod({make_sum({make_prod({a, c}), make_prod({b, d})}),
                               make_pow(p1, cplx(-1.0, 0.0))});
    const Expr vi = make_prod({make_sum({make_prod({a, d}), make_neg(make_prod({c, b}))}),
                               make_pow(p1, cplx(-1.0, 0.0))});
    FirstIntegral f;
    f.expr = make_prod(
        {p1, make_pow(p2, 2.0),
         make_exp(make_sum({make_prod({make_const(-10.0), make_atan2(b, a)}),
                            make_prod({make_const(8.0), vr}),
                            make_prod({make_const(6.0), vi})}))});
    f.route = "fixture";
    f.excluded_hyperplanes = {a, p1};
    CHECK(lie_residual_check(f, spec, kNoQuads, 200, 0) < 1e-7);
}

TEST_CASE("independence ranks match the expected counts") {
    const SystemSpec spec32 = load_fixture("sys_3_2");
    std::mt19937_64 rng(17);
    const std::vector<Expr> guards{make_linform({1, 0, 1, 0}), make_linform({0, 2, 0, 1})};
    const Point p = sample_safe_points(spec32, guards, 1, rng).front();
    const std::vector<FirstIntegral> set{
        fixture_integral("lin([1,-1,1,-1])"),
        fixture_integral("lin([2,2,1,1])*pow(lin([1,0,1,0]),-1)"),
        fixture_integral("pow(lin([2,2,1,1]),2)*pow(lin([0,2,0,1]),-1)")};
    CHECK(independence_check(set, spec32, kNoQuads, p) == 3);

    // functional dependence collapses the rank
    std::vector<FirstIntegral> dep{set[0], set[0]};
    dep[1].expr = make_pow(set[0].expr, 2.0);
    CHECK(independence_check(dep, spec32, kNoQuads, p) == 1);
}

TEST_CASE("six-state general integral reaches full rank") {
    const Analysis a = analyze_fixture("sys_3_20");
    CHECK(a.assembly.autonomous_count >= 5);
    CHECK(a.assembly.independence_rank == 6);
}

TEST_CASE("quadrature integral matches the closed form up to the anchor constant") {
    const Analysis a = analyze_fixture("sys_3_6_forced");
    REQUIRE(!a.pool.empty());
    // (3 x1 - x2 - x3 - 5) e^{-2t} + e^t - 6t, anchored at t = 0
    const FirstIntegral* mine = nullptr;
    for (const FirstIntegral& f : a.pool)
        if (f.route == "forced_linear") mine = &f;
    REQUIRE(mine);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> box(-1.0, 1.0);
    cplx offset;
    bool first = true;
    for (int i = 0; i < 50; ++i) {
        Point p;
        p.t = {box(rng)};
        p.x = {2.0 * box(rng), 2.0 * box(rng), 2.0 * box(rng)};
        const QuadEnv env = quad_env_at(a.registry, a.spec, p.t);
        const cplx val = eval_expr(mine->expr, p, &env);
        const double t = p.t[0];
        const double reference = (3.0 * p.x[0] - p.x[1] - p.x[2] - 5.0) * std::exp(-2.0 * t) +
                             std::exp(t) - 6.0 * t;
        if (first) {
            offset = val - reference;
            first = false;
        }
        CHECK(std::abs(val - reference - offset) < 1e-6);
    }
    CHECK(std::abs(offset - cplx(4.0, 0.0)) < 1e-6);  // antiderivative value at the anchor
}

TEST_CASE("forced verification stays within tolerance") {
    const Analysis a = analyze_fixture("sys_3_17_forced");
    VerifyConfig config;
    config.trajectories = 5;
    config.samples = 50;
    const VerificationReport report =
        run_verification(a.spec, a.assembly.selected, a.registry, config);
    for (const IntegralVerification& v : report.per_integral) {
        CHECK(v.max_lie_residual < 1e-7);
        CHECK(v.max_trajectory_drift < 1e-6);
    }
}

TEST_CASE("forcing a complex-chain system yields a full verified set") {
    // six-state system with a cubic complex divisor, constant forcing: the
    // stacked real/imaginary quadrature recursion must deliver rank 6
    SystemSpec spec = load_fixture("sys_3_20");
    ForcingTerm f;
    f.components = {make_const(1.0), make_const(0.0), make_const(0.0),
                    make_const(0.0), make_const(2.0), make_const(0.0)};
    spec.forcing = {f};
    AnalysisOptions options;
    const Analysis a = analyze(spec, options);
    CHECK(a.assembly.selected.size() == 6);
    CHECK(a.assembly.independence_rank == 6);
    for (const FirstIntegral& g : a.assembly.selected) {
        CHECK(!g.autonomous);
        CHECK(lie_residual_check(g, spec, a.registry, 60, 5) < 1e-7);
    }
}

TEST_CASE("verification reports are reproducible for a fixed seed") {
    const Analysis a = analyze_fixture("sys_2_3");
    VerifyConfig config;
    config.trajectories = 3;
    config.samples = 40;
    config.seed = 42;
    const VerificationReport r1 = run_verification(a.spec, a.assembly.selected, a.registry, config);
    const VerificationReport r2 = run_verification(a.spec, a.assembly.selected, a.registry, config);
    REQUIRE(r1.per_integral.size() == r2.per_integral.size());
    for (std::size_t i = 0; i < r1.per_integral.size(); ++i) {
        CHECK(r1.per_integral[i].max_lie_residual == r2.per_integral[i].max_lie_residual);
        CHECK(r1.per_integral[i].max_trajectory_drift ==
              r2.per_integral[i].max_trajectory_drift);
    }
    CHECK(*r1.path_independence_gap == *r2.path_independence_gap);
}
