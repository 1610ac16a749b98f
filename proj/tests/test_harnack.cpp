#include "doctest.h"
#include "support.hpp"

#include "harnacklab/errors.hpp"
#include "harnacklab/harnack.hpp"

#include <cmath>
#include <numbers>

using namespace hlab;

namespace {
constexpr double kPi = std::numbers::pi;

// markers on every other node so refinements share marker sets
FlowTrajectory nested_run(const SpeedFunction& g, const SupportProfile& p, double t_end, double interval) {
    FlowOptions opt;
    opt.until_time = t_end;
    opt.snapshot_interval = interval;
    for (int i = 2; i < p.M(); i += 2) opt.marker_thetas.push_back(i * kPi / p.M());
    auto traj = run(p, g, opt);
    REQUIRE_FALSE(traj.aborted);
    return traj;
}

IdentityResiduals ellipsoid_residuals(int M) {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto traj = nested_run(g, SupportProfile::ellipsoid(3, M, 1.5, 1.0), 0.02, 0.16 / M);
    return identity_residuals(TrajectoryFields(traj, g));
}
}  // namespace

TEST_CASE("centered time weights") {
    const auto w = centered_weights(0.1, 0.3, 0.35);
    auto f = [](double t) { return 2 - 3 * t + 5 * t * t; };
    CHECK(w[0] * f(0.1) + w[1] * f(0.3) + w[2] * f(0.35) == doctest::Approx(-3 + 10 * 0.3).epsilon(1e-12));
    CHECK_THROWS_AS(centered_weights(0.1, 0.1, 0.2), InsufficientResolution);
}

TEST_CASE("sphere Harnack quantity matches the closed form") {
    for (const auto& g : {SpeedFunction::trace(2), SpeedFunction::k_harmonic(3, 2)}) {
        FlowOptions opt;
        opt.until_time = 0.5;
        opt.snapshot_interval = 0.01;
        opt.markers = 17;
        const auto traj = run(SupportProfile::sphere(g.n(), 64, 2.0), g, opt);
        const TrajectoryFields F(traj, g);
        const auto samples = scalar_harnack(F, 0.0);
        REQUIRE(samples.size() == 17 * (F.size() - 2));
        const double c = g.value_at_ones();
        double err = 0;
        for (const auto& s : samples) {
            const double G = c / exact_sphere(2.0, g, s.t);
            const double P = G * G * G / c + G / (2 * s.t);
            err = std::max(err, std::abs(s.P - P) / P);
            CHECK(std::abs(s.G_s) <= 1e-9);
        }
        CHECK(err <= 1e-3);

        const QMinimum q = full_q(samples, g.n(), 7);
        CHECK(q.max_vstar_gap <= 1e-12);
        CHECK(q.orbit_reduction_holds);
        CHECK(q.min_Q == doctest::Approx(q.min_P).epsilon(1e-12));
    }
}

TEST_CASE("Harnack sampling preconditions") {
    const auto g = SpeedFunction::trace(2);
    FlowOptions opt;
    opt.until_time = 0.0;
    opt.markers = 3;
    const auto one = run(SupportProfile::sphere(2, 32, 1.0), g, opt);
    CHECK_THROWS_AS(scalar_harnack(one, g, 0.0), InsufficientResolution);

    opt.until_time = 0.02;
    opt.snapshot_interval = 0.01;
    const auto few = run(SupportProfile::sphere(2, 32, 1.0), g, opt);
    const TrajectoryFields F(few, g);
    CHECK_THROWS_AS(identity_residuals(F), InsufficientResolution);  // 3 markers < M/4
    CHECK_THROWS_AS(prop31_meridional(F, 0.5, 0.0), InsufficientResolution);
    CHECK_THROWS_AS(scalar_harnack(F, -1.0), RangeError);
    CHECK_THROWS_AS(full_q({}, 2, 1), InsufficientResolution);
}

TEST_CASE("Q(v) is a quadratic minimised at v* with value P") {
    HarnackSample s;
    s.t = 0.5;
    s.G = 1.2;
    s.dtG = 0.7;
    s.G_s = -0.4;
    s.lambda_m = 2.0;
    s.lambda_o = 1.5;
    s.P = s.dtG - s.G_s * s.G_s / s.lambda_m + s.G / (2 * s.t);
    const QMinimum q = full_q({s}, 3, 11);
    CHECK(q.v == doctest::Approx(-s.G_s / s.lambda_m).epsilon(1e-12));
    CHECK(q.min_Q == doctest::Approx(s.P).epsilon(1e-14));
    CHECK(q.orbit_reduction_holds);
}

TEST_CASE("sphere evolution identities") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto traj = nested_run(g, SupportProfile::sphere(3, 256, 1.0), 0.01, 5e-4);
    const TrajectoryFields F(traj, g);
    const auto r = identity_residuals(F);
    CHECK(r.scalar <= 1e-6);
    CHECK(r.first_variation <= 1e-6);
    CHECK(r.simons <= 1e-6);
    CHECK(r.gauss_marker <= 1e-6);
    CHECK(prop31_meridional(F, 0.0, 0.1) <= 1e-5);
}

TEST_CASE("ellipsoid evolution identities converge at second order") {
    const auto coarse = ellipsoid_residuals(128);
    const auto fine = ellipsoid_residuals(256);
    for (auto field : {&IdentityResiduals::scalar, &IdentityResiduals::first_variation, &IdentityResiduals::simons,
                       &IdentityResiduals::gauss_marker}) {
        const double ratio = coarse.*field / (fine.*field);
        CHECK(ratio >= 3.0);
        CHECK(ratio <= 5.0);
        CHECK(fine.*field <= 5e-4);
    }
}

TEST_CASE("Q(V) evolution residual decays on the ellipsoid") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    std::vector<double> res;
    for (int M : {64, 128}) {
        FlowOptions opt;
        opt.until_time = 0.02;
        opt.snapshot_interval = 0.16 / M;
        const auto traj = run(SupportProfile::ellipsoid(3, M, 1.5, 1.0), g, opt);
        res.push_back(prop31_meridional(TrajectoryFields(traj, g), 0.5, 0.1));
    }
    CHECK(res[0] / res[1] >= 3.0);
    CHECK(res[0] / res[1] <= 5.0);
    CHECK(res[1] <= 5e-3);
}

TEST_CASE("Harnack inequality across the catalog") {
    const ToleranceModel tol;
    for (const auto& g : testing::catalog()) {
        for (bool ellipsoid : {false, true}) {
            FlowOptions opt;
            opt.until_time = 0.05;
            opt.snapshot_interval = 0.0025;
            opt.markers = 15;
            const auto p0 = ellipsoid ? SupportProfile::ellipsoid(g.n(), 64, 1.5, 1.0)
                                      : SupportProfile::sphere(g.n(), 64, 1.0);
            const auto traj = run(p0, g, opt);
            REQUIRE_FALSE(traj.aborted);
            const auto q = full_q(scalar_harnack(TrajectoryFields(traj, g), 0.0), g.n(), 3);
            CHECK(q.min_P / q.scale >= -tol(64, 0.0025));
            CHECK(q.min_Q >= q.min_P - 1e-10 * q.scale);
            CHECK(q.orbit_reduction_holds);
        }
    }
}

TEST_CASE("integrated Harnack") {
    SUBCASE("sphere, same marker") {
        const auto g = SpeedFunction::k_harmonic(3, 2);
        FlowOptions opt;
        opt.until_time = 0.5;
        opt.snapshot_interval = 0.01;
        opt.markers = 5;
        const auto traj = run(SupportProfile::sphere(3, 64, 2.0), g, opt);
        const TrajectoryFields F(traj, g);
        const auto ih = integrated_harnack(F, 2, 2, 0.1, 0.5, 0.0);
        const double c = g.value_at_ones();
        const double t0 = F.time(ih.snap0), t1 = F.time(ih.snap1);
        CHECK(t0 == doctest::Approx(0.1));
        CHECK(t1 == doctest::Approx(0.5));
        CHECK(ih.path_cost == 0.0);
        CHECK(ih.lhs == doctest::Approx(c / exact_sphere(2.0, g, t1)).epsilon(1e-3));
        CHECK(ih.rhs == doctest::Approx(std::sqrt(t0 / t1) * c / exact_sphere(2.0, g, t0)).epsilon(1e-3));
        CHECK(ih.margin >= 0.0);
    }
    SUBCASE("ellipsoid, antipodal markers") {
        const auto g = SpeedFunction::k_harmonic(3, 2);
        FlowOptions opt;
        opt.until_time = 0.1;
        opt.snapshot_interval = 0.002;
        opt.markers = 9;
        const auto traj = run(SupportProfile::ellipsoid(3, 64, 1.5, 1.0), g, opt);
        const TrajectoryFields F(traj, g);
        const auto ih = integrated_harnack(F, 0, 8, 0.02, 0.1, 0.0);
        CHECK(ih.path_cost > 0.0);
        CHECK(std::isfinite(ih.path_cost));
        CHECK(ih.margin >= -5e-3);
        CHECK_THROWS_AS(integrated_harnack(F, 0, 8, 0.096, 0.1, 0.0), InsufficientResolution);
        CHECK_THROWS_AS(integrated_harnack(F, 0, 9, 0.02, 0.1, 0.0), RangeError);
    }
}

TEST_CASE("translators realise equality") {
    struct Case {
        SpeedFunction g;
        double r_max;
    };
    for (const auto& [g, r_max] : {Case{SpeedFunction::trace(1), 1.4}, Case{SpeedFunction::trace(2), 3.0},
                                   Case{SpeedFunction::k_harmonic(3, 2), 3.0}}) {
        const auto e = translator_equality(solve_translator(g, g.n(), r_max), g);
        CHECK(e.soliton <= 1e-6);
        CHECK(e.equality <= 5e-3);
        CHECK(e.xi <= 1e-4);
        const auto j = to_json(e);
        CHECK(j.contains("equality_residual"));
    }

    // the sphere is not a translator
    CHECK(translation_spread(SupportProfile::sphere(3, 64, 1.0), SpeedFunction::k_harmonic(3, 2)) >= 0.1);
    const auto g = SpeedFunction::k_harmonic(3, 2);
    CHECK(translation_spread(translator_support(g, 128, 0.6 * kPi, 1.0), g) <= 1e-2);
}

TEST_CASE("ancient limit on the translating bowl") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto bowl = translator_support(g, 128, 0.6 * kPi, 1.0);
    FlowOptions opt;
    opt.until_time = 0.05;
    opt.boundary = translator_boundary(bowl);
    opt.snapshot_interval = 0.005;
    for (int i = 80; i < 128; i += 8) opt.marker_thetas.push_back(i * kPi / 128);
    const auto traj = run(bowl, g, opt);
    REQUIRE_FALSE(traj.aborted);
    const TrajectoryFields F(traj, g);
    const auto sweep = ancient_sweep(F, {1, 10, 100}, 1e-6);
    CHECK(sweep.monotone);
    CHECK(sweep.approaching);
    CHECK(std::abs(sweep.min_P_free) <= 5e-3);
    REQUIRE(sweep.min_P.size() == 3);
    // the gap is led by G/(2(t+T₀)), so it shrinks about tenfold per decade of T₀
    const double gap10 = sweep.min_P[1] - sweep.min_P_free, gap100 = sweep.min_P[2] - sweep.min_P_free;
    CHECK(gap10 / gap100 >= 5.0);
    CHECK(gap10 / gap100 <= 15.0);

    const auto gd = gradient_diagnostics(F);
    CHECK(gd.t.size() == F.size());
    for (std::size_t k = 0; k < gd.t.size(); ++k) {
        CHECK(std::isfinite(gd.first[k]));
        CHECK(std::isfinite(gd.second[k]));
    }
}

TEST_CASE("gradient diagnostics vanish on the sphere") {
    const auto g = SpeedFunction::trace(3);
    FlowOptions opt;
    opt.until_time = 0.05;
    opt.snapshot_interval = 0.01;
    const auto traj = run(SupportProfile::sphere(3, 64, 1.0), g, opt);
    const auto gd = gradient_diagnostics(TrajectoryFields(traj, g));
    for (std::size_t k = 0; k < gd.t.size(); ++k) {
        CHECK(gd.first[k] <= 1e-8);
        CHECK(gd.second[k] <= 1e-8);
    }
}

TEST_CASE("report on an ellipsoid run") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto traj = nested_run(g, SupportProfile::ellipsoid(3, 64, 1.5, 1.0), 0.05, 0.0025);
    const TrajectoryFields F(traj, g);
    ReportOptions opt;
    opt.identity_tolerance = 1e-1;  // M = 64 residuals sit near 1e-2
    const auto r = harnack_report(F, "ellipsoid", opt);
    for (const auto& f : r.failures) MESSAGE(f);
    CHECK(r.pass);
    CHECK(r.failures.empty());
    CHECK(r.identities_checked);
    CHECK(r.prop31_checked);
    CHECK(r.M == 64);
    CHECK(r.snapshots == F.size());
    CHECK(r.max_dt == doctest::Approx(0.0025));
    const auto j = to_json(r);
    CHECK(j["pass"] == true);
    CHECK(j["identities"]["simons"].get<double>() == r.identities.simons);

    opt.identity_tolerance = 1e-9;
    const auto strict = harnack_report(F, "ellipsoid", opt);
    CHECK_FALSE(strict.pass);
    CHECK_FALSE(strict.failures.empty());
}
