#pragma once

#include "harnacklab/geometry.hpp"
#include "harnacklab/speed.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hlab {

/// Prescribed support value at the boundary node of an open profile, as a function of time.
using BoundaryValue = std::function<double(double t)>;

/// One RK4 step of ∂ₜh = −G. Throws StepRejected (suggesting dt/2) when a stage
/// loses strict convexity, ConeViolation when λ leaves Γ.
SupportProfile step(const SupportProfile& p, const SpeedFunction& gamma, double dt, const BoundaryValue& boundary = {});

/// Parabolic step heuristic safety·Δs_min²/(2·C_est·n), C_est = max γ̇ over nodes.
double stable_dt(const SupportProfile& p, const SpeedFunction& gamma, double safety);

struct FlowOptions {
    double safety = 0.2;
    std::optional<double> until_time;   // absolute time stamp
    std::optional<double> until_rmin;   // stop once min h ≤ this
    int markers = 0;                    // evenly spaced in θ, excluding the poles
    std::vector<double> marker_thetas;  // explicit marker angles (override `markers`)
    int snapshot_stride = 1;            // keep every k-th step
    double snapshot_interval = 0.0;     // > 0: snapshots exactly at multiples of this spacing
    long max_steps = 50'000'000;
    int max_halvings = 20;
    double extinction_ratio = 1e-3;     // closed profiles: abort once min h falls below this fraction of its initial value
    BoundaryValue boundary;             // required for open profiles
};

struct MarkerTrack {
    std::vector<double> theta;  // per snapshot
    std::vector<double> rho;    // ambient position, integrated along −Gν
    std::vector<double> z;
};

struct StepRecord {
    double t = 0.0;  // time after the step
    double dt = 0.0;
    double margin = 0.0;
    double r_min = 0.0, r_max = 0.0;
    double g_min = 0.0, g_max = 0.0;
};

struct FlowTrajectory {
    std::string speed_key;
    std::vector<SupportProfile> snapshots;
    std::vector<MarkerTrack> markers;
    std::vector<StepRecord> steps;
    int halvings = 0;
    bool aborted = false;
    std::string diagnostic;

    std::vector<double> times() const;
    std::string csv() const;  // t, r_min, r_max, G_min, G_max, dt
};

FlowTrajectory run(const SupportProfile& initial, const SpeedFunction& gamma, const FlowOptions& options);

/// √(r0² − 2γ(𝟙)t); Extinct when the radius would be imaginary.
double exact_sphere(double r0, const SpeedFunction& gamma, double t);

struct TranslatorOptions {
    int nodes = 1401;       // output grid on [0, R_max]
    double tolerance = 1e-12;
};

struct TranslatorSolution {
    GraphProfile profile;
    std::array<double, 2> xi{0.0, 1.0};  // (ρ, z) components
    double vertex_curvature = 0.0;       // f″(0)
    double max_radius = 0.0;
    int ode_steps = 0;
};

/// Rotationally symmetric translator with unit speed in +z: graph ODE from the vertex,
/// f″ recovered from γ(λ_m, λ_o𝟙) = (1+f′²)^{-1/2} by bisection.
TranslatorSolution solve_translator(const SpeedFunction& gamma, int n, double r_max, const TranslatorOptions& opt = {});

/// λ_m with γ(λ_m, λ_o, …, λ_o) = target (bracket [0, λ_hi], λ_hi grown geometrically).
double solve_meridian_curvature(const SpeedFunction& gamma, double lambda_o, double target);

/// Support function of the unit translator on nodes θᵢ = iπ/M with θᵢ ≥ θ_min,
/// origin placed at height `offset` above the vertex. Integrates the soliton
/// equation γ(1/R1, 1/R2) = −cosθ in θ from the vertex.
SupportProfile translator_support(const SpeedFunction& gamma, int M, double theta_min, double offset = 1.0,
                                  double tolerance = 1e-12);

/// Dirichlet data of the translating bowl: h(θ_first) + t·cosθ_first.
BoundaryValue translator_boundary(const SupportProfile& bowl);

}  // namespace hlab
