#include "doctest.h"
#include "support.hpp"

#include "harnacklab/errors.hpp"
#include "harnacklab/flow.hpp"

#include <cmath>
#include <numbers>

using namespace hlab;

namespace {
constexpr double kPi = std::numbers::pi;

double max_abs_diff(const std::vector<double>& a, double value, int first = 0) {
    double e = 0;
    for (std::size_t i = static_cast<std::size_t>(first); i < a.size(); ++i) e = std::max(e, std::abs(a[i] - value));
    return e;
}

// error of the sphere radius after integrating to `t_end` with fixed steps
double sphere_rk4_error(const SpeedFunction& g, double dt, double t_end) {
    auto p = SupportProfile::sphere(g.n(), 32, 2.0);
    const int steps = static_cast<int>(std::lround(t_end / dt));
    for (int s = 0; s < steps; ++s) p = step(p, g, dt);
    return std::abs(p.h()[5] - exact_sphere(2.0, g, t_end));
}

double roundness(const CurvatureData& d, int i) {
    return std::max(d.lambda_m[i], d.lambda_o[i]) / std::min(d.lambda_m[i], d.lambda_o[i]);
}

// max distance between marker ambient positions and the surface point at the marker angle
double marker_drift(int M) {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    FlowOptions opt;
    opt.until_time = 0.05;
    opt.markers = 7;
    opt.snapshot_interval = 0.01;
    const auto traj = run(SupportProfile::ellipsoid(3, M, 1.5, 1.0), g, opt);
    REQUIRE_FALSE(traj.aborted);
    double e = 0;
    for (const auto& mk : traj.markers)
        for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
            const auto [rho, z] = surface_point(traj.snapshots[s], mk.theta[s]);
            e = std::max(e, std::hypot(rho - mk.rho[s], z - mk.z[s]));
        }
    return e;
}
}  // namespace

TEST_CASE("exact sphere radius") {
    const auto tr2 = SpeedFunction::trace(2);
    CHECK(exact_sphere(2.0, tr2, 0.0) == 2.0);
    CHECK(exact_sphere(2.0, tr2, 0.5) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    const auto kh = SpeedFunction::k_harmonic(3, 2);
    CHECK(exact_sphere(1.0, kh, 0.75) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK_THROWS_AS(exact_sphere(1.0, kh, 0.8), Extinct);
}

TEST_CASE("single steps") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto p = SupportProfile::ellipsoid(3, 64, 1.5, 1.0);
    const auto same = step(p, g, 0.0);
    CHECK(same.h() == p.h());
    CHECK(same.t() == p.t());

    // the sphere stays round and follows the scalar RK4 of ṙ = −γ(𝟙)/r
    const auto s = step(SupportProfile::sphere(3, 64, 1.0), g, 0.01);
    const double c = g.value_at_ones();
    auto f = [c](double r) { return -c / r; };
    const double r0 = 1.0, dt = 0.01;
    const double k1 = f(r0), k2 = f(r0 + dt / 2 * k1), k3 = f(r0 + dt / 2 * k2), k4 = f(r0 + dt * k3);
    const double r1 = r0 + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    CHECK(max_abs_diff(s.h(), r1) <= 1e-14);
    CHECK(s.t() == doctest::Approx(0.01));

    CHECK_THROWS_AS(step(SupportProfile::sphere(3, 64, 1.0), g, 10.0), StepRejected);
    try {
        step(SupportProfile::sphere(3, 64, 1.0), g, 10.0);
    } catch (const StepRejected& e) {
        CHECK(e.suggested_dt() == 5.0);
    }
}

TEST_CASE("RK4 order under dt halving") {
    for (const auto& g : {SpeedFunction::trace(2), SpeedFunction::k_harmonic(3, 2)}) {
        const double e1 = sphere_rk4_error(g, 0.1, 0.8);
        const double e2 = sphere_rk4_error(g, 0.05, 0.8);
        const double ratio = e1 / e2;
        CHECK(ratio >= 8.0);
        CHECK(ratio <= 32.0);
    }
}

TEST_CASE("sphere flow against the exact radius") {
    for (const auto& g : {SpeedFunction::trace(2), SpeedFunction::k_harmonic(3, 2)}) {
        FlowOptions opt;
        opt.until_rmin = 0.5;
        opt.snapshot_stride = 200;
        const auto traj = run(SupportProfile::sphere(g.n(), 256, 2.0), g, opt);
        REQUIRE_FALSE(traj.aborted);
        double worst = 0;
        for (const auto& s : traj.snapshots) {
            const double r = exact_sphere(2.0, g, s.t());
            worst = std::max(worst, max_abs_diff(s.h(), r) / r);
        }
        CHECK(worst <= 1e-4);
        CHECK(traj.snapshots.back().h()[0] <= 0.5);
        const auto times = traj.times();
        for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] > times[i - 1]);
    }
}

TEST_CASE("run bookkeeping") {
    const auto g = SpeedFunction::trace(2);
    FlowOptions opt;
    opt.until_time = 0.0;
    const auto none = run(SupportProfile::sphere(2, 32, 1.0), g, opt);
    CHECK(none.snapshots.size() == 1);
    CHECK(none.steps.empty());

    opt.until_time = 0.1;
    opt.snapshot_interval = 0.025;
    const auto traj = run(SupportProfile::sphere(2, 32, 1.0), g, opt);
    REQUIRE(traj.snapshots.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(traj.snapshots[i].t() == doctest::Approx(0.025 * i).epsilon(1e-15));
    CHECK(traj.snapshots.back().t() == 0.1);
    const std::string csv = traj.csv();
    CHECK(csv.rfind("t,r_min,r_max,G_min,G_max,dt\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == traj.steps.size() + 1);

    FlowOptions bad;
    CHECK_THROWS_AS(run(SupportProfile::sphere(2, 32, 1.0), g, bad), RangeError);
}

TEST_CASE("ellipsoid keeps convexity and rounds off") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    auto p = SupportProfile::ellipsoid(3, 128, 1.5, 1.0);
    for (int s = 0; s < 100; ++s) {
        p = step(p, g, stable_dt(p, g, 0.2));
        REQUIRE(p.strictly_convex());
    }

    FlowOptions opt;
    opt.until_rmin = 0.15;
    opt.snapshot_stride = 500;
    const auto traj = run(SupportProfile::ellipsoid(3, 128, 1.5, 1.0), g, opt);
    REQUIRE_FALSE(traj.aborted);
    const int node = 32;
    const double start = roundness(curvatures_from_support(traj.snapshots.front(), g), node);
    const double end = roundness(curvatures_from_support(traj.snapshots.back(), g), node);
    CHECK(start > 1.3);
    CHECK(end < start);
    CHECK(end < 1.1);
    for (const auto& s : traj.snapshots) {
        const auto d = curvatures_from_support(s, g);
        for (int i = 0; i <= s.M(); ++i) CHECK(g.in_cone(d.lambda(i)));
    }
    for (const auto& r : traj.steps) CHECK(r.margin > 0.0);
}

TEST_CASE("markers follow the normal motion") {
    const double coarse = marker_drift(64);
    const double fine = marker_drift(128);
    CHECK(fine < coarse);
    CHECK(fine <= 1e-4);
}

TEST_CASE("grim reaper translator") {
    const auto g = SpeedFunction::trace(1);
    const auto sol = solve_translator(g, 1, 1.4);
    CHECK(sol.vertex_curvature == doctest::Approx(1.0));
    CHECK(sol.max_radius == 1.4);
    double err = 0;
    for (std::size_t j = 0; j < sol.profile.r.size(); ++j)
        err = std::max(err, std::abs(sol.profile.f[j] + std::log(std::cos(sol.profile.r[j]))));
    CHECK(err <= 1e-6);
}

TEST_CASE("bowl translators") {
    struct Case {
        SpeedFunction g;
        double vertex;
    };
    for (const auto& [g, vertex] : {Case{SpeedFunction::trace(2), 0.5}, Case{SpeedFunction::k_harmonic(3, 2), 1.5}}) {
        const auto sol = solve_translator(g, g.n(), 4.0);
        CHECK(sol.vertex_curvature == doctest::Approx(vertex).epsilon(1e-14));
        CHECK(sol.profile.fpp[0] == doctest::Approx(vertex).epsilon(1e-12));
        const auto d = curvatures_from_graph(sol.profile, g);
        double res = 0;
        for (std::size_t j = 0; j < d.G.size(); ++j) res = std::max(res, std::abs(d.G[j] + d.xi_dot_nu[j]) / d.G[j]);
        CHECK(res <= 1e-6);
    }
    CHECK_THROWS_AS(solve_meridian_curvature(SpeedFunction::trace(2), 2.0, 1.0), BisectionFailure);
}

TEST_CASE("translator support profile and bowl evolution") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const double theta_min = 0.6 * kPi;
    for (int M : {128, 256}) {
        const auto bowl = translator_support(g, M, theta_min, 1.0);
        REQUIRE_FALSE(bowl.closed());
        REQUIRE(bowl.strictly_convex());
        CHECK(bowl.theta(bowl.first()) >= theta_min);
        const auto d = curvatures_from_support(bowl, g);
        double res = 0;
        for (int i = bowl.first() + 1; i <= M; ++i) res = std::max(res, std::abs(d.G[i] + std::cos(d.theta[i])));
        CHECK(res <= 2e4 / (M * M) * 1e-3);  // second-order finite differences of an exact profile
    }

    // support of the graph solution agrees with the Gauss-map integration
    const auto sol = solve_translator(g, 3, 3.0, {6001, 1e-12});
    const auto bowl = translator_support(g, 256, 0.6 * kPi, 1.0);
    const auto& q = sol.profile;
    for (std::size_t j = 50; j < q.r.size(); j += 500) {
        const double w = std::sqrt(1 + q.fp[j] * q.fp[j]);
        const double theta = kPi - std::atan(q.fp[j]);
        if (theta < bowl.theta(bowl.first() + 2)) continue;
        const double h = bowl.grid().lagrange(bowl.h(), theta, Parity::Even);
        CHECK(std::abs(h - (q.r[j] * q.fp[j] - q.f[j] + 1.0) / w) <= 1e-6);
    }

    // the bowl translates: h(θ, t) = h(θ, 0) + t cosθ, up to second-order discretization error
    std::vector<double> errors;
    for (int M : {128, 256}) {
        const auto b = translator_support(g, M, 0.6 * kPi, 1.0);
        FlowOptions opt;
        opt.until_time = 0.05;
        opt.boundary = translator_boundary(b);
        opt.snapshot_interval = 0.05;
        const auto traj = run(b, g, opt);
        REQUIRE_FALSE(traj.aborted);
        const auto& last = traj.snapshots.back();
        double err = 0;
        for (int i = b.first(); i <= b.M(); ++i)
            err = std::max(err, std::abs(last.h()[i] - b.h()[i] - 0.05 * std::cos(b.theta(i))));
        errors.push_back(err);
    }
    CHECK(errors[1] <= 2e-5);
    CHECK(errors[0] / errors[1] >= 3.0);
}
