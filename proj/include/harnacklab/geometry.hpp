#pragma once

#include "harnacklab/interp.hpp"
#include "harnacklab/speed.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hlab {

/// Rotationally symmetric convex hypersurface in ℝⁿ⁺¹ through its support
/// function h(θ), θ the angle between the outward normal and the +z axis
/// (ν = (sinθ, cosθ) in the (ρ, z) meridian plane), on θᵢ = iπ/M.
///
/// Closed profiles use nodes 0..M with poles at both ends. Open profiles
/// (a translating bowl) use nodes first..M; node `first` is a boundary node.
class SupportProfile {
public:
    SupportProfile(int n, std::vector<double> h, double t = 0.0, int first = 0);

    static SupportProfile sphere(int n, int M, double radius);
    /// Ellipsoid of revolution, equatorial semi-axis a, polar semi-axis c.
    static SupportProfile ellipsoid(int n, int M, double a, double c);

    int n() const { return n_; }
    int M() const { return static_cast<int>(h_.size()) - 1; }
    int first() const { return first_; }
    bool closed() const { return first_ == 0; }
    double t() const { return t_; }
    double dtheta() const;
    double theta(int i) const { return i * dtheta(); }
    const std::vector<double>& h() const { return h_; }
    PolarGrid grid() const { return PolarGrid(first_, M(), dtheta()); }

    /// Set on construction: R1, R2 > 0 at every node (and h > 0 when closed).
    bool strictly_convex() const { return convex_; }
    /// min over nodes of min(R1, R2)
    double convexity_margin() const { return margin_; }

    SupportProfile with_values(std::vector<double> h, double t) const {
        return SupportProfile(n_, std::move(h), t, first_);
    }

private:
    int n_;
    std::vector<double> h_;
    double t_;
    int first_;
    bool convex_ = false;
    double margin_ = 0.0;
};

/// Nodal fields of a rotationally symmetric state. Entries below `first` are unused.
/// λ = (λ_m, λ_o, …, λ_o) with λ_o repeated n−1 times.
struct CurvatureData {
    int n = 0;
    int first = 0;
    int last = 0;
    double dtheta = 0.0;
    std::vector<double> theta;
    std::vector<double> r1, r2;           // radii of curvature (support states)
    std::vector<double> lambda_m, lambda_o;
    std::vector<double> G;
    std::vector<double> g_m, g_o;         // γ̇ in the meridian / orbit slots
    std::vector<SpeedJet> jets;
    std::vector<double> ds;               // arclength per unit index step, R1·Δθ
    std::vector<double> G_s;              // ∂ₛG
    std::vector<double> norm2_A;          // |A|²_γ
    std::vector<double> lap_G;            // Δ_γ G
    std::vector<double> H;
    std::vector<double> rho, rho_s, z;    // orbit radius, ∂ₛρ, height
    std::vector<double> phi;              // ∂ₛρ/ρ = cotθ/R2; NaN at poles
    std::vector<double> xi_dot_nu;        // graph states: ⟨ξ, ν⟩ with ξ = +e_z

    bool is_pole(int i) const { return (i == 0 && first == 0) || i == last; }
    PolarGrid grid() const { return PolarGrid(first, last, dtheta); }
    Vec lambda(int i) const;
};

CurvatureData curvatures_from_support(const SupportProfile& p, const SpeedFunction& gamma);

struct SurfaceDerivatives {
    std::vector<double> d_s;  // ∂ₛu
    std::vector<double> lap;  // Δ_γ u
    std::vector<double> u_ss;
    std::vector<double> hess_oo;  // orbit Hessian component (∂ₛρ/ρ)·∂ₛu
};

/// ∂ₛu and Δ_γu for a rotationally symmetric field u (even at the poles).
SurfaceDerivatives surface_operators(const SupportProfile& p, const CurvatureData& d, const std::vector<double>& u);
SurfaceDerivatives surface_operators(const CurvatureData& d, const std::vector<double>& u);

/// Second-order θ-derivatives with reflection at poles and one-sided stencils at an open boundary.
void theta_derivatives(const PolarGrid& grid, const std::vector<double>& u, Parity parity, std::vector<double>* u1,
                       std::vector<double>* u2);

/// Replaces pole entries by the even extrapolation (4f₁ − f₂)/3 of interior values.
void fill_pole_values(const CurvatureData& d, std::vector<double>& f);

/// Rotational graph z = f(r) over [0, R] on a uniform grid, convex and opening upward.
struct GraphProfile {
    int n = 0;
    std::vector<double> r;
    std::vector<double> f;
    std::vector<double> fp;
    std::vector<double> fpp;  // optional; finite differences of fp when empty
    double speed_scale = 1.0;
};

CurvatureData curvatures_from_graph(const GraphProfile& q, const SpeedFunction& gamma);

/// Inscribed-ball noncollapsing ratio α = min over x of r_in(x)·G(x) (diagnostic).
double noncollapsing_alpha(const SupportProfile& p, const CurvatureData& d);

/// Surface point X(θ) = hν + h_θ ν_θ in (ρ, z) at an arbitrary θ by interpolation of h.
std::pair<double, double> surface_point(const SupportProfile& p, double theta);

// Plain-text snapshots; doubles are written in shortest round-trip form.
void write_snapshot(std::ostream& out, const SupportProfile& p, const std::string& speed_key);
void write_snapshot(std::ostream& out, const GraphProfile& q, const std::string& speed_key);
struct Snapshot {
    std::string speed_key;
    std::optional<SupportProfile> support;
    std::optional<GraphProfile> graph;
};
Snapshot read_snapshot(std::istream& in);

std::string format_double(double x);
double parse_double(const std::string& text);

}  // namespace hlab
