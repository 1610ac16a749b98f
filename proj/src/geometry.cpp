#include "harnacklab/geometry.hpp"

#include "harnacklab/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace hlab {

namespace {

constexpr double kPi = std::numbers::pi;

// sin/cos of θᵢ = iπ/M, mirrored so that node M−i is the exact reflection of node i
std::pair<double, double> node_trig(int i, int M) {
    if (2 * i <= M) {
        const double th = i * kPi / M;
        return {std::sin(th), std::cos(th)};
    }
    const double th = (M - i) * kPi / M;
    return {std::sin(th), -std::cos(th)};
}

std::vector<double> r1_r2(const PolarGrid& grid, const std::vector<double>& h, std::vector<double>* r2,
                          std::vector<double>* h1_out = nullptr) {
    std::vector<double> h1, h2;
    theta_derivatives(grid, h, Parity::Even, &h1, &h2);
    std::vector<double> r1(h.size(), 0.0);
    r2->assign(h.size(), 0.0);
    for (int i = grid.first(); i <= grid.last(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const auto [s, c] = node_trig(i, grid.last());
        r1[k] = h2[k] + h[k];
        const bool pole = (i == 0 && grid.first() == 0) || i == grid.last();
        (*r2)[k] = pole ? h[k] + h2[k] : h[k] + h1[k] * c / s;
    }
    if (h1_out) *h1_out = std::move(h1);
    return r1;
}

}  // namespace

// ---------------------------------------------------------------------------

SupportProfile::SupportProfile(int n, std::vector<double> h, double t, int first)
    : n_(n), h_(std::move(h)), t_(t), first_(first) {
    if (n < 1 || n > kMaxDim) throw RangeError("profile dimension outside [1, 8]");
    const int m = M();
    if (m < 8) throw RangeError("support profile needs at least 8 cells");
    if (first < 0 || first > m - 4) throw RangeError("open-profile boundary index out of range");
    if (!std::isfinite(t)) throw RangeError("non-finite time stamp");

    bool finite = true;
    for (int i = first_; i <= m; ++i) finite = finite && std::isfinite(h_[static_cast<std::size_t>(i)]);
    if (!finite) {
        convex_ = false;
        margin_ = -std::numeric_limits<double>::infinity();
        return;
    }
    std::vector<double> r2;
    const std::vector<double> r1 = r1_r2(grid(), h_, &r2);
    margin_ = std::numeric_limits<double>::infinity();
    for (int i = first_; i <= m; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        margin_ = std::min({margin_, r1[k], r2[k]});
        if (closed() && !(h_[k] > 0.0)) margin_ = std::min(margin_, h_[k]);
    }
    convex_ = margin_ > 0.0;
}

double SupportProfile::dtheta() const { return kPi / M(); }

SupportProfile SupportProfile::sphere(int n, int M, double radius) {
    if (!(radius > 0.0)) throw RangeError("sphere radius must be positive");
    return SupportProfile(n, std::vector<double>(static_cast<std::size_t>(M + 1), radius));
}

SupportProfile SupportProfile::ellipsoid(int n, int M, double a, double c) {
    if (!(a > 0.0) || !(c > 0.0)) throw RangeError("ellipsoid semi-axes must be positive");
    std::vector<double> h(static_cast<std::size_t>(M + 1));
    for (int i = 0; i <= M; ++i) {
        const auto [s, co] = node_trig(i, M);
        h[static_cast<std::size_t>(i)] = std::sqrt(a * a * s * s + c * c * co * co);
    }
    return SupportProfile(n, std::move(h));
}

// ---------------------------------------------------------------------------

void theta_derivatives(const PolarGrid& grid, const std::vector<double>& u, Parity parity, std::vector<double>* u1,
                       std::vector<double>* u2) {
    const double d = grid.spacing();
    const std::size_t size = static_cast<std::size_t>(grid.last() + 1);
    if (u1) u1->assign(size, 0.0);
    if (u2) u2->assign(size, 0.0);
    for (int i = grid.first(); i <= grid.last(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        if (i == grid.first() && grid.first() > 0) {
            const double a = u[k], b = u[k + 1], c = u[k + 2], e = u[k + 3];
            if (u1) (*u1)[k] = (-3 * a + 4 * b - c) / (2 * d);
            if (u2) (*u2)[k] = (2 * a - 5 * b + 4 * c - e) / (d * d);
            continue;
        }
        const double lo = grid.at(u, i - 1, parity), mid = u[k], hi = grid.at(u, i + 1, parity);
        if (u1) (*u1)[k] = (hi - lo) / (2 * d);
        if (u2) (*u2)[k] = (hi - 2 * mid + lo) / (d * d);
    }
}

void fill_pole_values(const CurvatureData& d, std::vector<double>& f) {
    if (d.first == 0) f[0] = (4 * f[1] - f[2]) / 3;
    const std::size_t m = static_cast<std::size_t>(d.last);
    f[m] = (4 * f[m - 1] - f[m - 2]) / 3;
}

Vec CurvatureData::lambda(int i) const {
    Vec l = Vec::Constant(n, lambda_o[static_cast<std::size_t>(i)]);
    l(0) = lambda_m[static_cast<std::size_t>(i)];
    return l;
}

namespace {

void fill_speed_fields(CurvatureData& d, const SpeedFunction& gamma, int i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const Vec l = d.lambda(i);
    SpeedJet jet = gamma.jet(l, 2);
    d.G[k] = jet.value;
    d.g_m[k] = jet.grad(0);
    d.g_o[k] = d.n > 1 ? jet.grad(1) : 0.0;
    d.norm2_A[k] = d.g_m[k] * d.lambda_m[k] * d.lambda_m[k] + (d.n - 1) * d.g_o[k] * d.lambda_o[k] * d.lambda_o[k];
    d.H[k] = d.lambda_m[k] + (d.n - 1) * d.lambda_o[k];
    d.jets[k] = std::move(jet);
}

void allocate(CurvatureData& d, std::size_t size) {
    for (auto* v : {&d.theta, &d.r1, &d.r2, &d.lambda_m, &d.lambda_o, &d.G, &d.g_m, &d.g_o, &d.ds, &d.G_s, &d.norm2_A,
                    &d.lap_G, &d.H, &d.rho, &d.rho_s, &d.z, &d.phi})
        v->assign(size, 0.0);
    d.jets.assign(size, SpeedJet{});
}

}  // namespace

CurvatureData curvatures_from_support(const SupportProfile& p, const SpeedFunction& gamma) {
    if (!p.strictly_convex())
        throw ConvexityLost("support profile lost strict convexity (margin " + std::to_string(p.convexity_margin()) +
                            ")");
    if (gamma.n() != p.n()) throw RangeError("speed dimension does not match the profile");

    CurvatureData d;
    d.n = p.n();
    d.first = p.first();
    d.last = p.M();
    d.dtheta = p.dtheta();
    allocate(d, static_cast<std::size_t>(d.last + 1));

    std::vector<double> h1;
    d.r1 = r1_r2(p.grid(), p.h(), &d.r2, &h1);
    const auto& h = p.h();
    for (int i = d.first; i <= d.last; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double th = p.theta(i);
        d.theta[k] = th;
        d.lambda_m[k] = 1.0 / d.r1[k];
        d.lambda_o[k] = 1.0 / d.r2[k];
        d.ds[k] = d.r1[k] * d.dtheta;
        const auto [s, c] = node_trig(i, d.last);
        d.rho[k] = d.is_pole(i) ? 0.0 : h[k] * s + h1[k] * c;
        d.z[k] = h[k] * c - h1[k] * s;
        d.rho_s[k] = c;
        if (d.is_pole(i)) {
            d.phi[k] = std::numeric_limits<double>::quiet_NaN();
        } else {
            if (d.rho[k] < 1e-12)
                throw PoleSingularity("orbit radius " + std::to_string(d.rho[k]) + " at interior node " +
                                      std::to_string(i));
            d.phi[k] = c / d.rho[k];
        }
        fill_speed_fields(d, gamma, i);
    }
    const SurfaceDerivatives ops = surface_operators(d, d.G);
    d.G_s = ops.d_s;
    d.lap_G = ops.lap;
    return d;
}

SurfaceDerivatives surface_operators(const CurvatureData& d, const std::vector<double>& u) {
    if (d.r1.empty() || d.dtheta == 0.0) throw RangeError("surface operators need a support-function state");
    const PolarGrid grid = d.grid();
    std::vector<double> u1, u2, r1_theta;
    theta_derivatives(grid, u, Parity::Even, &u1, &u2);
    theta_derivatives(grid, d.r1, Parity::Even, &r1_theta, nullptr);

    SurfaceDerivatives out;
    const std::size_t size = static_cast<std::size_t>(d.last + 1);
    out.d_s.assign(size, 0.0);
    out.lap.assign(size, 0.0);
    out.u_ss.assign(size, 0.0);
    out.hess_oo.assign(size, 0.0);
    for (int i = d.first; i <= d.last; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double r1 = d.r1[k];
        out.d_s[k] = u1[k] / r1;
        out.u_ss[k] = (u2[k] - u1[k] * r1_theta[k] / r1) / (r1 * r1);
        out.hess_oo[k] = d.is_pole(i) ? u2[k] / (r1 * d.r2[k]) : d.phi[k] * out.d_s[k];
        out.lap[k] = d.g_m[k] * out.u_ss[k] + (d.n - 1) * d.g_o[k] * out.hess_oo[k];
    }
    return out;
}

SurfaceDerivatives surface_operators(const SupportProfile& p, const CurvatureData& d, const std::vector<double>& u) {
    if (p.M() != d.last || p.first() != d.first) throw RangeError("curvature data does not belong to this profile");
    if (!p.strictly_convex()) throw ConvexityLost("surface operators on a non-convex state");
    return surface_operators(d, u);
}

// ---------------------------------------------------------------------------

CurvatureData curvatures_from_graph(const GraphProfile& q, const SpeedFunction& gamma) {
    const std::size_t size = q.r.size();
    if (size < 4 || q.f.size() != size || q.fp.size() != size)
        throw RangeError("graph profile arrays must have equal length ≥ 4");
    if (!q.fpp.empty() && q.fpp.size() != size) throw RangeError("graph second-derivative array has wrong length");
    if (q.r.front() != 0.0) throw RangeError("graph grid must start at r = 0");
    if (gamma.n() != q.n) throw RangeError("speed dimension does not match the graph");

    const double dr = q.r[1] - q.r[0];
    std::vector<double> fpp = q.fpp;
    if (fpp.empty()) {
        fpp.assign(size, 0.0);
        fpp[0] = q.fp[1] / dr;  // f′ is odd in r
        for (std::size_t j = 1; j + 1 < size; ++j) fpp[j] = (q.fp[j + 1] - q.fp[j - 1]) / (2 * dr);
        fpp[size - 1] = (3 * q.fp[size - 1] - 4 * q.fp[size - 2] + q.fp[size - 3]) / (2 * dr);
    }

    CurvatureData d;
    d.n = q.n;
    d.first = 0;
    d.last = static_cast<int>(size) - 1;
    allocate(d, size);
    d.xi_dot_nu.assign(size, 0.0);
    for (std::size_t j = 0; j < size; ++j) {
        const double w = std::sqrt(1.0 + q.fp[j] * q.fp[j]);
        d.theta[j] = kPi - std::atan(q.fp[j]);
        d.lambda_m[j] = fpp[j] / (w * w * w);
        d.lambda_o[j] = j == 0 ? fpp[0] : q.fp[j] / (q.r[j] * w);
        if (!(d.lambda_m[j] > 0.0) || (q.n > 1 && !(d.lambda_o[j] > 0.0)))
            throw ConvexityLost("graph profile is not strictly convex at r = " + std::to_string(q.r[j]));
        d.r1[j] = 1.0 / d.lambda_m[j];
        d.r2[j] = 1.0 / d.lambda_o[j];
        d.ds[j] = w * dr;
        d.rho[j] = q.r[j];
        d.z[j] = q.f[j];
        d.rho_s[j] = -1.0 / w;
        d.phi[j] = j == 0 ? std::numeric_limits<double>::quiet_NaN() : -1.0 / (q.r[j] * w);
        d.xi_dot_nu[j] = -1.0 / w;
        fill_speed_fields(d, gamma, static_cast<int>(j));
    }
    // s increases toward the vertex (increasing θ), opposite to r
    for (std::size_t j = 0; j < size; ++j) {
        double g_r;
        if (j == 0)
            g_r = 0.0;
        else if (j + 1 < size)
            g_r = (d.G[j + 1] - d.G[j - 1]) / (2 * dr);
        else
            g_r = (3 * d.G[j] - 4 * d.G[j - 1] + d.G[j - 2]) / (2 * dr);
        d.G_s[j] = -g_r / std::sqrt(1.0 + q.fp[j] * q.fp[j]);
    }
    d.lap_G.clear();
    return d;
}

// ---------------------------------------------------------------------------

double noncollapsing_alpha(const SupportProfile& p, const CurvatureData& d) {
    if (!p.closed()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i <= d.last; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        pts.emplace_back(d.rho[k], d.z[k]);
        if (!d.is_pole(i)) pts.emplace_back(-d.rho[k], d.z[k]);
    }
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= d.last; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double nu_r = std::sin(d.theta[k]), nu_z = std::cos(d.theta[k]);
        double r_in = std::min(d.r1[k], d.r2[k]);
        for (const auto& [yr, yz] : pts) {
            const double dx = d.rho[k] - yr, dz = d.z[k] - yz;
            const double along = dx * nu_r + dz * nu_z;
            if (along > 1e-14) r_in = std::min(r_in, (dx * dx + dz * dz) / (2 * along));
        }
        alpha = std::min(alpha, r_in * d.G[k]);
    }
    return alpha;
}

std::pair<double, double> surface_point(const SupportProfile& p, double theta) {
    std::vector<double> h1;
    theta_derivatives(p.grid(), p.h(), Parity::Even, &h1, nullptr);
    const PolarGrid grid = p.grid();
    const double h = grid.lagrange(p.h(), theta, Parity::Even);
    const double ht = grid.lagrange(h1, theta, Parity::Odd);
    const double s = std::sin(theta), c = std::cos(theta);
    return {h * s + ht * c, h * c - ht * s};
}

// ---------------------------------------------------------------------------

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double x = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ParseError("not a number: '" + text + "'");
    return x;
}

void write_snapshot(std::ostream& out, const SupportProfile& p, const std::string& speed_key) {
    out << "harnacklab-snapshot 1\n"
        << "kind support\n"
        << "speed " << speed_key << "\n"
        << "n " << p.n() << "\n"
        << "M " << p.M() << "\n"
        << "first " << p.first() << "\n"
        << "t " << format_double(p.t()) << "\n"
        << "# theta h\n";
    for (int i = p.first(); i <= p.M(); ++i)
        out << format_double(p.theta(i)) << ' ' << format_double(p.h()[static_cast<std::size_t>(i)]) << '\n';
}

void write_snapshot(std::ostream& out, const GraphProfile& q, const std::string& speed_key) {
    const bool with_fpp = !q.fpp.empty();
    out << "harnacklab-snapshot 1\n"
        << "kind graph\n"
        << "speed " << speed_key << "\n"
        << "n " << q.n << "\n"
        << "N " << q.r.size() << "\n"
        << "fpp " << (with_fpp ? 1 : 0) << "\n"
        << "# r f fp" << (with_fpp ? " fpp" : "") << "\n";
    for (std::size_t j = 0; j < q.r.size(); ++j) {
        out << format_double(q.r[j]) << ' ' << format_double(q.f[j]) << ' ' << format_double(q.fp[j]);
        if (with_fpp) out << ' ' << format_double(q.fpp[j]);
        out << '\n';
    }
}

Snapshot read_snapshot(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "harnacklab-snapshot 1") throw ParseError("not a snapshot (bad header)");
    std::map<std::string, std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') break;
        const auto space = line.find(' ');
        if (space == std::string::npos) throw ParseError("malformed snapshot header line '" + line + "'");
        header[line.substr(0, space)] = line.substr(space + 1);
    }
    auto field = [&](const std::string& key) {
        const auto it = header.find(key);
        if (it == header.end()) throw ParseError("snapshot header lacks '" + key + "'");
        return it->second;
    };
    auto integer = [&](const std::string& key) {
        const std::string v = field(key);
        int x = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ParseError("bad integer for " + key);
        return x;
    };
    auto row = [&](int columns) {
        if (!std::getline(in, line)) throw ParseError("snapshot truncated");
        std::istringstream ls(line);
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) vals.push_back(parse_double(tok));
        if (static_cast<int>(vals.size()) != columns) throw ParseError("snapshot row has wrong column count");
        return vals;
    };

    Snapshot snap;
    snap.speed_key = field("speed");
    const std::string kind = field("kind");
    const int n = integer("n");
    if (kind == "support") {
        const int m = integer("M");
        const int first = integer("first");
        const double t = parse_double(field("t"));
        if (m < 8 || first < 0 || first > m) throw ParseError("snapshot grid fields out of range");
        std::vector<double> h(static_cast<std::size_t>(m + 1), 0.0);
        for (int i = first; i <= m; ++i) h[static_cast<std::size_t>(i)] = row(2)[1];
        snap.support.emplace(n, std::move(h), t, first);
    } else if (kind == "graph") {
        const int count = integer("N");
        const bool with_fpp = integer("fpp") != 0;
        GraphProfile q;
        q.n = n;
        for (int j = 0; j < count; ++j) {
            const auto vals = row(with_fpp ? 4 : 3);
            q.r.push_back(vals[0]);
            q.f.push_back(vals[1]);
            q.fp.push_back(vals[2]);
            if (with_fpp) q.fpp.push_back(vals[3]);
        }
        snap.graph = std::move(q);
    } else {
        throw ParseError("unknown snapshot kind '" + kind + "'");
    }
    return snap;
}

}  // namespace hlab
