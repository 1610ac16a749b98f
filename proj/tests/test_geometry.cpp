#include "doctest.h"
#include "support.hpp"

#include "harnacklab/errors.hpp"
#include "harnacklab/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace hlab;

namespace {
constexpr double kPi = std::numbers::pi;

// max error of nodal curvatures against the closed-form ellipsoid
std::pair<double, double> ellipsoid_errors(int M, double a, double c) {
    const auto p = SupportProfile::ellipsoid(3, M, a, c);
    const auto d = curvatures_from_support(p, SpeedFunction::k_harmonic(3, 2));
    double em = 0, eo = 0;
    for (int i = 0; i <= M; ++i) {
        const double th = p.theta(i);
        const double h = std::sqrt(a * a * std::sin(th) * std::sin(th) + c * c * std::cos(th) * std::cos(th));
        em = std::max(em, std::abs(d.lambda_m[i] - h * h * h / (a * a * c * c)));
        eo = std::max(eo, std::abs(d.lambda_o[i] - h / (a * a)));
    }
    return {em, eo};
}
}  // namespace

TEST_CASE("round sphere") {
    const auto tr = SpeedFunction::trace(2);
    for (int M : {32, 100, 512}) {
        const auto d = curvatures_from_support(SupportProfile::sphere(2, M, 2.0), tr);
        for (int i = 0; i <= M; ++i) {
            CHECK(std::abs(d.lambda_m[i] - 0.5) <= 1e-10);
            CHECK(std::abs(d.lambda_o[i] - 0.5) <= 1e-10);
            CHECK(std::abs(d.G[i] - 1.0) <= 1e-10);
            CHECK(std::abs(d.G_s[i]) <= 1e-10);
            CHECK(std::abs(d.lap_G[i]) <= 1e-10);
            CHECK(d.H[i] == doctest::Approx(d.lambda_m[i] + d.lambda_o[i]));
        }
    }
    const auto d4 = curvatures_from_support(SupportProfile::sphere(2, 64, 4.0), tr);
    CHECK(d4.lambda_m[10] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("ellipsoid curvatures converge at second order") {
    const auto e1 = ellipsoid_errors(64, 1.0, 2.0);
    const auto e2 = ellipsoid_errors(128, 1.0, 2.0);
    const auto e3 = ellipsoid_errors(256, 1.0, 2.0);
    CHECK(e1.first / e2.first > 3.5);
    CHECK(e1.first / e2.first < 4.5);
    CHECK(e2.first / e3.first > 3.5);
    CHECK(e2.first / e3.first < 4.5);
    CHECK(e2.second / e3.second > 3.5);
    CHECK(e2.second / e3.second < 4.5);
    CHECK(e3.first < 1e-3);
}

TEST_CASE("umbilic poles and reflection symmetry") {
    double prev = 0;
    for (int M : {64, 128, 256}) {
        const auto raw = SupportProfile::ellipsoid(3, M, 1.5, 1.0);
        std::vector<double> h = raw.h();
        for (int i = 0; i <= M / 2; ++i) h[M - i] = h[i];  // bit-exact mirror image
        const auto p = raw.with_values(h, 0.0);
        const auto d = curvatures_from_support(p, SpeedFunction::k_harmonic(3, 2));
        double lap_scale = 0;
        for (double v : d.lap_G) lap_scale = std::max(lap_scale, std::abs(v));
        const double gap = std::max(std::abs(d.lambda_m[0] - d.lambda_o[0]), std::abs(d.lambda_m[M] - d.lambda_o[M]));
        if (prev > 0) CHECK(prev / gap > 3.5);
        prev = gap;
        for (int i = 0; i <= M; ++i) {
            CHECK(std::abs(d.G[i] - d.G[M - i]) <= 1e-12 * d.G[i]);
            CHECK(std::abs(d.lap_G[i] - d.lap_G[M - i]) <= 1e-12 * lap_scale);
            CHECK(std::abs(d.G_s[i] + d.G_s[M - i]) <= 1e-12);
        }
    }
}

TEST_CASE("scaling halves curvatures") {
    const auto g = SpeedFunction::k_harmonic(3, 2);
    const auto p = SupportProfile::ellipsoid(3, 64, 1.0, 1.7);
    std::vector<double> h2 = p.h();
    for (auto& x : h2) x *= 2;
    const auto d1 = curvatures_from_support(p, g);
    const auto d2 = curvatures_from_support(p.with_values(h2, 0.0), g);
    for (int i = 0; i <= 64; ++i) {
        CHECK(d2.lambda_m[i] == doctest::Approx(d1.lambda_m[i] / 2).epsilon(1e-12));
        CHECK(d2.lambda_o[i] == doctest::Approx(d1.lambda_o[i] / 2).epsilon(1e-12));
    }
}

TEST_CASE("surface operators") {
    const auto tr2 = SpeedFunction::trace(2);
    const auto p = SupportProfile::sphere(2, 64, 1.5);
    const auto d = curvatures_from_support(p, tr2);
    const auto zero = surface_operators(p, d, std::vector<double>(65, 3.0));
    for (int i = 0; i <= 64; ++i) {
        CHECK(zero.d_s[i] == 0.0);
        CHECK(zero.lap[i] == 0.0);
    }
    // first spherical harmonic: Δu = −n/r²·u
    for (int n : {2, 3}) {
        double prev = 0;
        for (int M : {64, 128, 256}) {
            const auto ps = SupportProfile::sphere(n, M, 1.5);
            const auto ds = curvatures_from_support(ps, SpeedFunction::trace(n));
            std::vector<double> u(M + 1);
            for (int i = 0; i <= M; ++i) u[i] = std::cos(ps.theta(i));
            const auto ops = surface_operators(ps, ds, u);
            double err = 0;
            for (int i = 0; i <= M; ++i) err = std::max(err, std::abs(ops.lap[i] + n / (1.5 * 1.5) * u[i]));
            if (prev > 0) {
                CHECK(prev / err > 3.5);
                CHECK(prev / err < 4.5);
            }
            prev = err;
        }
        CHECK(prev < 1e-4);
    }
}

TEST_CASE("convexity monitor") {
    auto p = SupportProfile::sphere(2, 64, 1.0);
    std::vector<double> h = p.h();
    h[20] += 0.05;  // a spike makes h_θθ + h negative next to it
    const auto bad = p.with_values(h, 0.0);
    CHECK_FALSE(bad.strictly_convex());
    CHECK_THROWS_AS(curvatures_from_support(bad, SpeedFunction::trace(2)), ConvexityLost);
    CHECK(p.strictly_convex());
    CHECK(p.convexity_margin() == doctest::Approx(1.0));
}

TEST_CASE("graph curvatures") {
    const auto tr = SpeedFunction::trace(2);
    GraphProfile par{2, {}, {}, {}, {}, 1.0};
    for (int j = 0; j <= 400; ++j) {
        const double r = j * 0.05;
        par.r.push_back(r);
        par.f.push_back(r * r / 2);
        par.fp.push_back(r);
    }
    const auto d = curvatures_from_graph(par, tr);
    CHECK(d.lambda_m[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.lambda_o[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.lambda_o[400] * 20.0 == doctest::Approx(1.0).epsilon(2e-3));

    const auto line = SpeedFunction::trace(1);
    GraphProfile gr{1, {}, {}, {}, {}, 1.0};
    for (int j = 0; j <= 140; ++j) {
        const double x = j * 0.01;
        gr.r.push_back(x);
        gr.f.push_back(-std::log(std::cos(x)));
        gr.fp.push_back(std::tan(x));
        gr.fpp.push_back(1.0 / (std::cos(x) * std::cos(x)));
    }
    const auto dg = curvatures_from_graph(gr, line);
    for (int j = 0; j <= 140; ++j) {
        CHECK(std::abs(dg.lambda_m[j] - std::cos(gr.r[j])) <= 1e-12);
        CHECK(std::abs(dg.G[j] + dg.xi_dot_nu[j]) <= 1e-10);
    }
}

TEST_CASE("interpolation") {
    const PolarGrid grid(0, 32, kPi / 32);
    std::vector<double> cub(33), cosv(33), sinv(33);
    for (int i = 0; i <= 32; ++i) {
        const double x = i * kPi / 32;
        cub[i] = 1 + x - 0.3 * x * x + 0.05 * x * x * x;
        cosv[i] = std::cos(x);
        sinv[i] = std::sin(x);
    }
    for (double x : {0.7, 1.234, 2.5}) {
        CHECK(grid.lagrange(cub, x, Parity::Even) == doctest::Approx(1 + x - 0.3 * x * x + 0.05 * x * x * x).epsilon(1e-13));
        CHECK(grid.lagrange(cosv, x, Parity::Even) == doctest::Approx(std::cos(x)).epsilon(1e-6));
        CHECK(grid.monotone(cosv, x, Parity::Even) == doctest::Approx(std::cos(x)).epsilon(1e-3));
    }
    // reflection at the poles
    CHECK(grid.lagrange(cosv, 0.01, Parity::Even) == doctest::Approx(std::cos(0.01)).epsilon(1e-5));
    CHECK(grid.lagrange(sinv, 0.01, Parity::Odd) == doctest::Approx(std::sin(0.01)).epsilon(1e-4));
    CHECK(grid.lagrange(sinv, kPi - 0.01, Parity::Odd) == doctest::Approx(std::sin(0.01)).epsilon(1e-4));
    // overshoot-free on step data
    std::vector<double> step(33, 0.0);
    for (int i = 17; i <= 32; ++i) step[i] = 1.0;
    for (int k = 0; k <= 1000; ++k) {
        const double v = grid.monotone(step, k * kPi / 1000, Parity::Even);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("snapshot round trip") {
    auto p = SupportProfile::ellipsoid(3, 64, 1.0, 1.3).with_values(SupportProfile::ellipsoid(3, 64, 1.0, 1.3).h(), 0.123456789);
    std::stringstream ss;
    write_snapshot(ss, p, "kharmonic:n=3,k=2");
    const Snapshot s = read_snapshot(ss);
    REQUIRE(s.support.has_value());
    CHECK(s.speed_key == "kharmonic:n=3,k=2");
    CHECK(s.support->t() == p.t());
    CHECK(s.support->h() == p.h());

    GraphProfile g{2, {0.0, 0.1, 0.2, 0.3}, {0.0, 1.0 / 3.0, 0.2, 0.7}, {0.0, 0.1, std::sqrt(2.0), 1e-300}, {}, 1.0};
    std::stringstream gs;
    write_snapshot(gs, g, "trace:n=2");
    const Snapshot sg = read_snapshot(gs);
    REQUIRE(sg.graph.has_value());
    CHECK(sg.graph->f == g.f);
    CHECK(sg.graph->fp == g.fp);

    std::stringstream broken("harnacklab-snapshot 1\nkind support\n# theta h\n");
    CHECK_THROWS_AS(read_snapshot(broken), ParseError);
}

TEST_CASE("noncollapsing diagnostic") {
    const auto p = SupportProfile::sphere(2, 64, 1.0);
    const auto d = curvatures_from_support(p, SpeedFunction::trace(2));
    CHECK(noncollapsing_alpha(p, d) == doctest::Approx(2.0).epsilon(1e-9));
    const auto e = SupportProfile::ellipsoid(2, 128, 1.0, 2.0);
    const auto de = curvatures_from_support(e, SpeedFunction::trace(2));
    const double alpha = noncollapsing_alpha(e, de);
    CHECK(alpha > 0.0);
    CHECK(alpha < 2.0);
}

TEST_CASE("surface point") {
    const auto p = SupportProfile::ellipsoid(2, 128, 1.0, 2.0);
    for (double th : {0.0, 0.3, 1.0, 2.0, kPi}) {
        const auto [rho, z] = surface_point(p, th);
        CHECK(rho * rho + z * z / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
    }
}
