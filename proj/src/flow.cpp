#include "harnacklab/flow.hpp"

#include "harnacklab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <tuple>

namespace hlab {

namespace {

constexpr double kPi = std::numbers::pi;

std::pair<double, double> node_trig(int i, int M) {
    if (2 * i <= M) {
        const double th = i * kPi / M;
        return {std::sin(th), std::cos(th)};
    }
    const double th = (M - i) * kPi / M;
    return {std::sin(th), -std::cos(th)};
}

// sin/cos at the nodes of a grid, cached per M
struct NodeTrig {
    int M = -1;
    std::vector<double> s, c;
};

const NodeTrig& node_trig_table(int M) {
    thread_local NodeTrig table;
    if (table.M != M) {
        table.M = M;
        table.s.resize(static_cast<std::size_t>(M + 1));
        table.c.resize(static_cast<std::size_t>(M + 1));
        for (int i = 0; i <= M; ++i) std::tie(table.s[i], table.c[i]) = node_trig(i, M);
    }
    return table;
}

// Nodal G and R1 (and optionally max γ̇ and min Δs) without the full CurvatureData.
struct SpeedField {
    std::vector<double> G, r1;
    double c_est = 0.0;
    double ds_min = std::numeric_limits<double>::infinity();
    double margin = std::numeric_limits<double>::infinity();
};

// Returns false (leaving G unset) when the values are not strictly convex.
bool speed_field(const std::vector<double>& h, int n, int first, const SpeedFunction& gamma, SpeedField& out,
                 bool with_gradient) {
    const int M = static_cast<int>(h.size()) - 1;
    const NodeTrig& trig = node_trig_table(M);
    const double d = kPi / M;
    const double inv_d2 = 1.0 / (d * d), inv_2d = 1.0 / (2 * d);
    out.G.resize(h.size());
    out.r1.resize(h.size());
    out.c_est = 0.0;
    out.ds_min = std::numeric_limits<double>::infinity();
    out.margin = std::numeric_limits<double>::infinity();
    const bool closed = first == 0;
    Vec lambda(n);
    auto value = [&](int i) { return i < 0 ? h[static_cast<std::size_t>(-i)] : i > M ? h[static_cast<std::size_t>(2 * M - i)] : h[static_cast<std::size_t>(i)]; };
    for (int i = first; i <= M; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        double h1, h2;
        if (!closed && i == first) {
            const double a = h[k], b = h[k + 1], c = h[k + 2], e = h[k + 3];
            h1 = (-3 * a + 4 * b - c) * inv_2d;
            h2 = (2 * a - 5 * b + 4 * c - e) * inv_d2;
        } else {
            const double lo = value(i - 1), hi = value(i + 1);
            h1 = (hi - lo) * inv_2d;
            h2 = (hi - 2 * h[k] + lo) * inv_d2;
        }
        const bool pole = (i == 0 && closed) || i == M;
        const double r1 = h2 + h[k];
        const double r2 = pole ? r1 : h[k] + h1 * trig.c[k] / trig.s[k];
        out.margin = std::min({out.margin, r1, r2});
        if (closed) out.margin = std::min(out.margin, h[k]);
        if (!(out.margin > 0.0)) return false;
        lambda.setConstant(1.0 / r2);
        lambda(0) = 1.0 / r1;
        const SpeedJet jet = gamma.jet(lambda, with_gradient ? 1 : 0);
        out.G[k] = jet.value;
        out.r1[k] = r1;
        if (with_gradient) {
            out.c_est = std::max(out.c_est, jet.grad.maxCoeff());
            out.ds_min = std::min(out.ds_min, std::min(r1, r2) * d);
        }
    }
    return true;
}

void speed_field(const SupportProfile& p, const SpeedFunction& gamma, SpeedField& out, bool with_gradient) {
    if (!speed_field(p.h(), p.n(), p.first(), gamma, out, with_gradient))
        throw ConvexityLost("profile is not strictly convex");
}

// RK4 given the speed field at the current state.
SupportProfile rk4(const SupportProfile& p, const SpeedFunction& gamma, double dt, const std::vector<double>& G0,
                   const BoundaryValue& boundary) {
    if (!p.closed() && !boundary) throw RangeError("open profile evolution needs boundary data");
    const auto& h = p.h();
    const std::size_t size = h.size();
    const int first = p.first();
    const double t = p.t();
    SpeedField f;
    std::vector<double> stage(size), acc(size);
    for (std::size_t i = 0; i < size; ++i) acc[i] = G0[i];
    auto evaluate = [&](const std::vector<double>& G, double scale, double ts) {
        for (std::size_t i = 0; i < size; ++i) stage[i] = h[i] - scale * G[i];
        if (first > 0) stage[static_cast<std::size_t>(first)] = boundary(ts);
        if (!speed_field(stage, p.n(), first, gamma, f, false))
            throw StepRejected("stage lost strict convexity (margin " + std::to_string(f.margin) + ")", dt / 2);
    };
    evaluate(G0, 0.5 * dt, t + 0.5 * dt);
    for (std::size_t i = 0; i < size; ++i) acc[i] += 2 * f.G[i];
    std::vector<double> G = f.G;
    evaluate(G, 0.5 * dt, t + 0.5 * dt);
    for (std::size_t i = 0; i < size; ++i) acc[i] += 2 * f.G[i];
    G = f.G;
    evaluate(G, dt, t + dt);
    for (std::size_t i = 0; i < size; ++i) acc[i] = (acc[i] + f.G[i]) / 6.0;
    std::vector<double> next(size);
    for (std::size_t i = 0; i < size; ++i) next[i] = h[i] - dt * acc[i];
    if (first > 0) next[static_cast<std::size_t>(first)] = boundary(t + dt);
    SupportProfile q = p.with_values(std::move(next), t + dt);
    if (!q.strictly_convex())
        throw StepRejected("step lost strict convexity (margin " + std::to_string(q.convexity_margin()) + ")",
                           dt / 2);
    return q;
}

}  // namespace

SupportProfile step(const SupportProfile& p, const SpeedFunction& gamma, double dt, const BoundaryValue& boundary) {
    if (!p.strictly_convex()) throw ConvexityLost("step needs a strictly convex profile");
    if (gamma.n() != p.n()) throw RangeError("speed dimension does not match the profile");
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw RangeError("time step must be finite and non-negative");
    if (dt == 0.0) return p;
    SpeedField f;
    speed_field(p, gamma, f, false);
    return rk4(p, gamma, dt, f.G, boundary);
}

double stable_dt(const SupportProfile& p, const SpeedFunction& gamma, double safety) {
    SpeedField f;
    speed_field(p, gamma, f, true);
    return safety * f.ds_min * f.ds_min / (2.0 * f.c_est * p.n());
}

std::vector<double> FlowTrajectory::times() const {
    std::vector<double> out;
    out.reserve(snapshots.size());
    for (const auto& s : snapshots) out.push_back(s.t());
    return out;
}

std::string FlowTrajectory::csv() const {
    std::ostringstream out;
    out << "t,r_min,r_max,G_min,G_max,dt\n";
    for (const auto& r : steps)
        out << format_double(r.t) << ',' << format_double(r.r_min) << ',' << format_double(r.r_max) << ','
            << format_double(r.g_min) << ',' << format_double(r.g_max) << ',' << format_double(r.dt) << '\n';
    return out.str();
}

namespace {

struct MarkerState {
    double theta, rho, z;
};

// Marker velocity pieces at a state: θ̇ = G_θ/R1 and G itself.
struct MarkerField {
    std::vector<double> v, G;
    PolarGrid grid{0, 8, 1.0};
};

MarkerField marker_field(const SupportProfile& p, const SpeedField& f) {
    MarkerField m;
    m.grid = p.grid();
    std::vector<double> g1;
    theta_derivatives(m.grid, f.G, Parity::Even, &g1, nullptr);
    m.v.assign(f.G.size(), 0.0);
    for (int i = p.first(); i <= p.M(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        m.v[k] = g1[k] / f.r1[k];
    }
    m.G = f.G;
    return m;
}

double clamp_theta(const SupportProfile& p, double th) {
    return std::clamp(th, p.theta(p.first()), kPi);
}

}  // namespace

FlowTrajectory run(const SupportProfile& initial, const SpeedFunction& gamma, const FlowOptions& opt) {
    if (!initial.strictly_convex()) throw ConvexityLost("initial profile is not strictly convex");
    if (gamma.n() != initial.n()) throw RangeError("speed dimension does not match the profile");
    if (!opt.until_time && !opt.until_rmin) throw RangeError("run needs a stopping time or a minimum radius");
    if (!(opt.safety > 0.0 && opt.safety <= 1.0)) throw RangeError("safety must lie in (0, 1]");
    if (opt.snapshot_stride < 1) throw RangeError("snapshot stride must be positive");
    if (!initial.closed() && !opt.boundary) throw RangeError("open profile evolution needs boundary data");

    FlowTrajectory traj;
    traj.speed_key = gamma.key();
    traj.snapshots.push_back(initial);

    std::vector<MarkerState> markers;
    std::vector<double> thetas = opt.marker_thetas;
    if (thetas.empty() && opt.markers > 0) {
        const double lo = initial.theta(initial.first());
        for (int j = 0; j < opt.markers; ++j) thetas.push_back(lo + (j + 1) * (kPi - lo) / (opt.markers + 1));
    }
    for (double th : thetas) {
        const auto [rho, z] = surface_point(initial, th);
        markers.push_back({th, rho, z});
        traj.markers.push_back(MarkerTrack{{th}, {rho}, {z}});
    }

    auto record_markers = [&] {
        for (std::size_t j = 0; j < markers.size(); ++j) {
            traj.markers[j].theta.push_back(markers[j].theta);
            traj.markers[j].rho.push_back(markers[j].rho);
            traj.markers[j].z.push_back(markers[j].z);
        }
    };

    SupportProfile current = initial;
    SpeedField field;
    speed_field(current, gamma, field, true);

    auto min_h = [](const SupportProfile& p) {
        return *std::min_element(p.h().begin() + p.first(), p.h().end());
    };
    auto done = [&](const SupportProfile& p) {
        if (opt.until_time && p.t() >= *opt.until_time) return true;
        if (opt.until_rmin && min_h(p) <= *opt.until_rmin) return true;
        return false;
    };

    long snapshot_index = 1;
    auto snapshot_target = [&] {
        double t = initial.t() + static_cast<double>(snapshot_index) * opt.snapshot_interval;
        if (opt.until_time && t > *opt.until_time - 1e-9 * opt.snapshot_interval) t = *opt.until_time;
        return t;
    };
    // open profiles translate rather than shrink, and their support values may have either sign
    const double extinction_h = initial.closed() ? opt.extinction_ratio * min_h(initial) : -1e300;
    long steps = 0;
    while (!done(current)) {
        if (steps >= opt.max_steps) {
            traj.aborted = true;
            traj.diagnostic = "step budget exhausted at t = " + format_double(current.t());
            break;
        }
        if (min_h(current) < extinction_h) {
            traj.aborted = true;
            traj.diagnostic = "extinct: min h = " + format_double(min_h(current)) + " at t = " + format_double(current.t());
            break;
        }
        double dt = opt.safety * field.ds_min * field.ds_min / (2.0 * field.c_est * current.n());
        bool snapshot_due = false;
        double target = 0.0;
        if (opt.snapshot_interval > 0.0) {
            target = snapshot_target();
            const double remaining = target - current.t();
            const double count = std::ceil(remaining / dt * (1.0 - 1e-12));
            dt = remaining / std::max(count, 1.0);
            snapshot_due = count <= 1.0;
        } else if (opt.until_time && current.t() + dt >= *opt.until_time) {
            dt = *opt.until_time - current.t();
        }

        std::optional<SupportProfile> next;
        std::string failure;
        for (int attempt = 0; attempt <= opt.max_halvings; ++attempt) {
            try {
                next = rk4(current, gamma, dt, field.G, opt.boundary);
                break;
            } catch (const StepRejected& e) {
                failure = e.what();
            } catch (const ConeViolation& e) {
                failure = e.what();
            }
            dt /= 2;
            snapshot_due = false;
            ++traj.halvings;
        }
        if (!next) {
            traj.aborted = true;
            traj.diagnostic = "step rejected after " + std::to_string(opt.max_halvings) +
                              " halvings at t = " + format_double(current.t()) + ": " + failure;
            break;
        }
        if (snapshot_due) next = next->with_values(next->h(), target);  // remove roundoff in the time stamp

        SpeedField next_field;
        try {
            speed_field(*next, gamma, next_field, true);
        } catch (const ConeViolation& e) {
            traj.aborted = true;
            traj.diagnostic = std::string("curvature left the cone after the step: ") + e.what();
            break;
        }

        if (!markers.empty()) {
            const MarkerField m0 = marker_field(current, field);
            const MarkerField m1 = marker_field(*next, next_field);
            for (auto& mk : markers) {
                const double v0 = m0.grid.lagrange(m0.v, mk.theta, Parity::Odd);
                const double g0 = m0.grid.lagrange(m0.G, mk.theta, Parity::Even);
                const double pred = clamp_theta(current, mk.theta + dt * v0);
                const double v1 = m1.grid.lagrange(m1.v, pred, Parity::Odd);
                const double g1 = m1.grid.lagrange(m1.G, pred, Parity::Even);
                mk.rho -= 0.5 * dt * (g0 * std::sin(mk.theta) + g1 * std::sin(pred));
                mk.z -= 0.5 * dt * (g0 * std::cos(mk.theta) + g1 * std::cos(pred));
                mk.theta = clamp_theta(current, mk.theta + 0.5 * dt * (v0 + v1));
            }
        }

        current = std::move(*next);
        field = std::move(next_field);
        ++steps;

        StepRecord rec;
        rec.t = current.t();
        rec.dt = dt;
        rec.margin = current.convexity_margin();
        rec.r_min = min_h(current);
        rec.r_max = *std::max_element(current.h().begin() + current.first(), current.h().end());
        rec.g_min = *std::min_element(field.G.begin() + current.first(), field.G.end());
        rec.g_max = *std::max_element(field.G.begin() + current.first(), field.G.end());
        traj.steps.push_back(rec);

        bool keep;
        if (opt.snapshot_interval > 0.0) {
            keep = snapshot_due;
            if (keep) ++snapshot_index;
        } else {
            keep = steps % opt.snapshot_stride == 0;
        }
        if (!keep && done(current)) keep = true;
        if (keep) {
            traj.snapshots.push_back(current);
            record_markers();
        }
    }
    return traj;
}

double exact_sphere(double r0, const SpeedFunction& gamma, double t) {
    if (!(r0 > 0.0)) throw RangeError("sphere radius must be positive");
    const double r2 = r0 * r0 - 2.0 * gamma.value_at_ones() * t;
    // exact extinction time is allowed up to rounding
    if (r2 < -1e-14 * r0 * r0) throw Extinct("sphere of radius " + format_double(r0) + " is extinct by t = " +
                                             format_double(t));
    return std::sqrt(std::max(r2, 0.0));
}

// ---------------------------------------------------------------------------

double solve_meridian_curvature(const SpeedFunction& gamma, double lambda_o, double target) {
    if (!(target > 0.0) || !std::isfinite(target)) throw BisectionFailure("target speed must be positive");
    Vec l = Vec::Constant(gamma.n(), lambda_o);
    auto value = [&](double lm) -> double {
        l(0) = lm;
        if (!gamma.in_cone(l)) return -std::numeric_limits<double>::infinity();
        return gamma.value(l);
    };
    double lo = 0.0;
    if (value(lo) >= target)
        throw BisectionFailure("speed already reaches the target with zero meridian curvature");
    double hi = std::max(target, std::abs(lambda_o));
    int grow = 0;
    while (value(hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 200) throw BisectionFailure("no upper bracket for the meridian curvature");
    }
    for (int it = 0; it < 200 && hi - lo > 2e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (value(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

namespace {

using State = std::array<double, 2>;

// Dormand–Prince 5(4) from x0 to x1 (either direction); `step` carries the step size between calls.
template <class Rhs>
int dopri(Rhs&& f, double x0, State& y, double x1, double tol, double& step) {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    const double dir = x1 >= x0 ? 1.0 : -1.0;
    double x = x0;
    int count = 0;
    step = std::abs(step);
    while (dir * (x1 - x) > 0.0) {
        double hs = std::min(step, std::abs(x1 - x));
        const double hd = dir * hs;
        auto add = [&](std::initializer_list<std::pair<double, const State*>> terms) {
            State r = y;
            for (const auto& [a, k] : terms)
                for (int i = 0; i < 2; ++i) r[i] += hd * a * (*k)[i];
            return r;
        };
        const State k1 = f(x, y);
        const State k2 = f(x + c2 * hd, add({{a21, &k1}}));
        const State k3 = f(x + c3 * hd, add({{a31, &k1}, {a32, &k2}}));
        const State k4 = f(x + c4 * hd, add({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
        const State k5 = f(x + c5 * hd, add({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
        const State k6 = f(x + hd, add({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
        const State y5 = add({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
        const State k7 = f(x + hd, y5);
        double err = 0.0;
        for (int i = 0; i < 2; ++i) {
            const double e = hd * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            err = std::max(err, std::abs(e) / (tol + tol * std::max(std::abs(y[i]), std::abs(y5[i]))));
        }
        if (!std::isfinite(err)) throw BisectionFailure("translator ODE produced a non-finite state");
        if (err <= 1.0) {
            x = (hs == std::abs(x1 - x)) ? x1 : x + hd;
            y = y5;
            ++count;
        }
        const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        step = hs * factor;
        if (step < 1e-14 * std::max(1.0, std::abs(x))) throw BisectionFailure("translator ODE step underflow");
        if (count > 10'000'000) throw BisectionFailure("translator ODE step budget exhausted");
    }
    return count;
}

}  // namespace

TranslatorSolution solve_translator(const SpeedFunction& gamma, int n, double r_max, const TranslatorOptions& opt) {
    if (gamma.n() != n) throw RangeError("speed dimension does not match n");
    if (!(r_max > 0.0)) throw RangeError("R_max must be positive");
    if (opt.nodes < 4) throw RangeError("translator grid needs at least 4 nodes");
    const double vertex = 1.0 / gamma.value_at_ones();

    auto rhs = [&](double r, const State& y) -> State {
        const double p = y[1];
        const double w2 = 1.0 + p * p, w = std::sqrt(w2);
        const double lo = r > 0.0 ? p / (r * w) : vertex;
        const double lm = n == 1 ? 1.0 / w : solve_meridian_curvature(gamma, lo, 1.0 / w);
        return {p, lm * w2 * w};
    };

    TranslatorSolution sol;
    sol.vertex_curvature = vertex;
    GraphProfile& g = sol.profile;
    g.n = n;
    const int N = opt.nodes;
    const double dr = r_max / (N - 1);
    State y{0.0, 0.0};
    double h = dr / 4;
    double r = 0.0;
    for (int j = 0; j < N; ++j) {
        const double rj = j == N - 1 ? r_max : j * dr;
        if (j > 0) {
            sol.ode_steps += dopri(rhs, r, y, rj, opt.tolerance, h);
        }
        r = rj;
        const State d = rhs(r, y);
        if (!(d[1] > 0.0)) throw ConvexityLost("translator profile lost convexity at r = " + format_double(r));
        g.r.push_back(r);
        g.f.push_back(y[0]);
        g.fp.push_back(y[1]);
        g.fpp.push_back(d[1]);
        sol.max_radius = r;
    }
    return sol;
}

SupportProfile translator_support(const SpeedFunction& gamma, int M, double theta_min, double offset,
                                  double tolerance) {
    const int n = gamma.n();
    if (!(theta_min > kPi / 2 && theta_min < kPi)) throw RangeError("translator angle range must lie in (π/2, π)");
    if (!(offset > 0.0)) throw RangeError("origin offset must be positive");
    const double d = kPi / M;
    const int first = static_cast<int>(std::ceil(theta_min / d - 1e-12));
    if (first > M - 4) throw RangeError("translator angle range too small for the grid");

    const double R = gamma.value_at_ones();
    const double a = R - offset;  // h_θθ at the vertex
    // state (h, h_θ) as a function of θ, integrated downward from the vertex
    auto rhs = [&](double th, const State& y) -> State {
        const double s = std::sin(th), c = std::cos(th);
        const double r2 = y[0] + y[1] * c / s;
        if (!(r2 > 0.0)) throw ConvexityLost("translator support lost convexity at θ = " + format_double(th));
        const double lm = n == 1 ? -c : solve_meridian_curvature(gamma, 1.0 / r2, -c);
        return {y[1], 1.0 / lm - y[0]};
    };
    const double u0 = 1e-5;
    State y{offset + 0.5 * a * u0 * u0, -a * u0};
    double x = kPi - u0;
    double step = d / 8;
    std::vector<double> h(static_cast<std::size_t>(M + 1), 0.0);
    h[static_cast<std::size_t>(M)] = offset;
    for (int i = M - 1; i >= first; --i) {
        const double th = i * d;
        dopri(rhs, x, y, th, tolerance, step);
        x = th;
        h[static_cast<std::size_t>(i)] = y[0];
    }
    return SupportProfile(n, std::move(h), 0.0, first);
}

BoundaryValue translator_boundary(const SupportProfile& bowl) {
    if (bowl.closed()) throw RangeError("translator boundary data needs an open profile");
    const double h0 = bowl.h()[static_cast<std::size_t>(bowl.first())];
    const double c = std::cos(bowl.theta(bowl.first()));
    const double t0 = bowl.t();
    return [h0, c, t0](double t) { return h0 + (t - t0) * c; };
}

}  // namespace hlab
