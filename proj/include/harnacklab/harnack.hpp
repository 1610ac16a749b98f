#pragma once

#include "harnacklab/flow.hpp"
#include "harnacklab/geometry.hpp"
#include "harnacklab/speed.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hlab {

// Nodal fields of one snapshot used by the identity checks. Pole entries of
// fields that contain φ = ∂ₛρ/ρ are filled by even extrapolation.
struct SnapshotFields {
    CurvatureData d;
    std::vector<double> g_theta;          // ∂θG
    std::vector<double> p_s, q_s;         // ∂ₛλ_m, ∂ₛλ_o
    std::vector<double> lap_p, lap_q;     // Δ_γ of λ_m, λ_o as scalars
    std::vector<double> G_ss, G_oo;       // Hessian of G, meridian and orbit components
    std::vector<double> phi2_pq;          // φ²(λ_m − λ_o)
    std::vector<double> ddot_ss, ddot_aa; // γ̈[∇ₛA, ∇ₛA], γ̈[∇ₐA, ∇ₐA]
};

class TrajectoryFields {
public:
    TrajectoryFields(const FlowTrajectory& traj, const SpeedFunction& gamma, int threads = 1);
    // the trajectory is referenced, not copied
    TrajectoryFields(FlowTrajectory&&, const SpeedFunction&, int = 1) = delete;

    const FlowTrajectory& trajectory() const { return *traj_; }
    const SpeedFunction& speed() const { return gamma_; }
    const SnapshotFields& at(std::size_t k) const { return fields_[k]; }
    std::size_t size() const { return fields_.size(); }
    int M() const { return fields_.front().d.last; }
    double time(std::size_t k) const;

    /// Field value at marker j on snapshot k (four-point Lagrange interpolation).
    double sample(int marker, std::size_t k, std::vector<double> SnapshotFields::*field,
                  Parity parity = Parity::Even) const;
    double sample(int marker, std::size_t k, std::vector<double> CurvatureData::*field,
                  Parity parity = Parity::Even) const;

    /// d/dt along marker j at interior snapshot k (nonuniform three-point rule).
    double marker_rate(int marker, std::size_t k, std::vector<double> CurvatureData::*field,
                       Parity parity = Parity::Even) const;

    /// ∂ₜ along the normal motion at node i of snapshot k: fixed-θ difference plus ∂ₛf·∂ₛG/λ_m.
    double gauss_rate(std::size_t k, int i, std::vector<double> CurvatureData::*field) const;

private:
    const FlowTrajectory* traj_;
    SpeedFunction gamma_;
    std::vector<SnapshotFields> fields_;
};

/// Weights of the three-point derivative at the middle of (t₋, t₀, t₊).
std::array<double, 3> centered_weights(double tm, double t0, double tp);

struct HarnackSample {
    int marker = 0;
    int snapshot = 0;
    double t = 0.0;  // time stamp including the origin offset
    double theta = 0.0;
    double G = 0.0, dtG = 0.0, G_s = 0.0;
    double lambda_m = 0.0, lambda_o = 0.0;
    double P = 0.0;
};

/// P = ∂ₜG − (∂ₛG)²/λ_m + G/(2(t+T₀)) along markers; the last term is dropped when `time_term` is false.
std::vector<HarnackSample> scalar_harnack(const TrajectoryFields& f, double T0, bool time_term = true);
std::vector<HarnackSample> scalar_harnack(const FlowTrajectory& traj, const SpeedFunction& gamma, double T0,
                                          bool time_term = true);

struct QMinimum {
    double min_Q = 0.0;
    double min_P = 0.0;
    int sample = -1;
    double v = 0.0;                   // meridional component at the minimum
    double max_vstar_gap = 0.0;       // max |Q(v*) − P| / scale
    bool orbit_reduction_holds = true;
    double scale = 1.0;
};

/// Minimises Q(V) = ∂ₜG + 2⟨∇G,V⟩ + A(V,V) + G/(2t) over V per sample (meridional grid around v*,
/// plus random orbit components checked against the meridional value).
QMinimum full_q(const std::vector<HarnackSample>& samples, int n, std::uint64_t seed, bool time_term = true);

struct IdentityResiduals {
    double scalar = 0.0;          // (∂ₜ − Δ_γ)G − |A|²_γ G
    double first_variation = 0.0; // ∇ₜA − ∇²G − GA²
    double simons = 0.0;          // (∇ₜ − Δ_γ)A − |A|²_γ A − γ̈(∇A, ∇A)
    double gauss_marker = 0.0;    // ∂ₜG along markers versus the fixed-θ derivative plus A⁻¹(∇G, ∇G)
};

/// Residual maxima over markers and interior snapshots, normalised by the snapshot's max G³.
IdentityResiduals identity_residuals(const TrajectoryFields& f);

/// Residual of the evolution equation of Q(V) for V = c·sinθ·eₛ, at nodes at least three cells from a
/// pole or open edge, on snapshots with two neighbours on each side, normalised by max G³.
double prop31_meridional(const TrajectoryFields& f, double c, double T0);

struct IntegratedHarnack {
    double lhs = 0.0;
    double rhs = 0.0;
    double path_cost = 0.0;
    double margin = 0.0;  // lhs/rhs − 1
    int node0 = 0, node1 = 0;
    std::size_t snap0 = 0, snap1 = 0;
};

/// G(x₁,t₁) against (t₀/t₁)^{1/2}·exp(−¼·inf∫A(γ̇,γ̇)/G)·G(x₀,t₀), path infimum by dynamic programming
/// over snapshot levels with moves of at most three cells.
IntegratedHarnack integrated_harnack(const TrajectoryFields& f, int marker0, int marker1, double t0, double t1,
                                     double T0);

struct TranslatorEquality {
    double soliton = 0.0;   // max |G + ⟨ξ,ν⟩|/G
    double equality = 0.0;  // max |∂ₜG − (∂ₛG)²/λ_m| / max G³
    double xi = 0.0;        // max |ξ̂ − ξ| / |ξ|
};

TranslatorEquality translator_equality(const TranslatorSolution& sol, const SpeedFunction& gamma);

/// Spread of ξ̂ = −Gν − ∂θG·eₛ about its mean, relative to max |ξ̂| (zero for a translator, O(1) otherwise).
/// Open profiles skip the two nodes next to the boundary.
double translation_spread(const SupportProfile& p, const SpeedFunction& gamma);

struct GradientDiagnostics {
    std::vector<double> t;
    std::vector<double> first;   // sup G⁻²|∇A|
    std::vector<double> second;  // sup G⁻³|∇²A|, meridional components
};

GradientDiagnostics gradient_diagnostics(const TrajectoryFields& f);

struct AncientSweep {
    std::vector<double> T0;
    std::vector<double> min_P;
    double min_P_free = 0.0;  // without the time term
    bool monotone = false;
    bool approaching = false;
};

AncientSweep ancient_sweep(const TrajectoryFields& f, const std::vector<double>& T0s, double slack = 1e-6);

/// tol = c₁M⁻² + c₂dt² in units of G³.
struct ToleranceModel {
    double c1 = 40.0;
    double c2 = 10.0;
    double operator()(int M, double dt) const { return c1 / (double(M) * M) + c2 * dt * dt; }
};

struct HarnackReport {
    std::string trajectory;
    std::string speed;
    int M = 0;
    std::size_t snapshots = 0;
    double max_dt = 0.0;
    double T0 = 0.0;
    double min_P = 0.0;
    double min_Q = 0.0;
    double tolerance = 0.0;
    IdentityResiduals identities;
    bool identities_checked = false;
    double prop31 = 0.0;
    bool prop31_checked = false;
    double grad_first = 0.0, grad_second = 0.0;
    std::vector<IntegratedHarnack> integrated;
    bool pass = false;
    std::vector<std::string> failures;
};

struct ReportOptions {
    double T0 = 0.0;
    ToleranceModel tolerance;
    double identity_tolerance = 1e-3;  // <= 0: four times the Harnack tolerance
    std::uint64_t seed = 1;
};

HarnackReport harnack_report(const TrajectoryFields& f, const std::string& id, const ReportOptions& opt);

nlohmann::json to_json(const HarnackReport& r);
nlohmann::json to_json(const TranslatorEquality& e);

}  // namespace hlab
