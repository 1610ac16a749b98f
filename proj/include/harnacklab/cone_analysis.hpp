#pragma once

#include "harnacklab/errors.hpp"
#include "harnacklab/linalg.hpp"
#include "harnacklab/speed.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace hlab {

/// Threshold separating strict inverse-concavity from null directions
/// (normalized units |A| = |S| = 1).
inline constexpr double kStrictThreshold = 1e-6;

/// Index m of the facet union Γ₊^m, 0 ≤ m ≤ n.
class FacetIndex {
public:
    FacetIndex(int m, int n);
    int m() const { return m_; }

private:
    int m_;
};

/// Distance from λ/|λ| to the closure of Γ₊^m. Requires λ ≥ 0, λ ≠ 0.
double dist_to_facet(const EigenvalueVector& lambda, FacetIndex m);

/// Least m with (0,…,0,1,…,1) (m ones) inside the cone.
int compute_mstar(const ConeSpec& cone);
int compute_mstar(const Cone& cone);

/// Lower estimate of dist(λ/|λ|, ∂Γ). Exact for the linear cone generators,
/// numerical (directional exit search) for the Gårding generator.
double dist_to_cone_boundary(const Cone& cone, const Vec& lambda);

/// A recorded extremum that can be re-evaluated.
struct Witness {
    std::string label;
    Vec lambda;     // spectrum of A
    Mat a;          // A itself
    Mat s;          // direction S, |S| = 1 (empty when unused)
    double value = 0.0;
};

/// Emits unit vectors in the ρ-uniformly k-positive cone
///   {λ ≥ 0 : (sum of the k smallest λᵢ) ≥ ρ·trace(λ)}.
/// Sample i depends only on (seed, i).
class ConeSampler {
public:
    enum class Region {
        Interior,      // uniform on the trace simplex, rejected to the ρ-cone
        NearBoundary,  // strictly positive, within 10⁻¹…10⁻⁶ (relative) of the cone boundary
        ZeroFace,      // 1 … k−1 exactly zero entries
    };

    ConeSampler(int n, int k, double rho, std::uint64_t seed, int count);

    int n() const { return n_; }
    int k() const { return k_; }
    double rho() const { return rho_; }
    std::uint64_t seed() const { return seed_; }
    int count() const { return count_; }
    ConeSampler with_seed(std::uint64_t seed) const { return ConeSampler(n_, k_, rho_, seed, count_); }
    ConeSampler with_count(int count) const { return ConeSampler(n_, k_, rho_, seed_, count); }

    Vec sample(std::size_t index, Region region) const;
    // Alternates Interior / NearBoundary: strictly positive spectra.
    Vec positive_sample(std::size_t index) const;
    // Cycles through all three regions.
    Vec mixed_sample(std::size_t index) const;

    /// (sum of the k smallest entries) / trace
    double ratio(const Vec& lambda) const;
    bool admits(const Vec& lambda, bool strictly_positive) const;

private:
    int n_;
    int k_;
    double rho_;
    std::uint64_t seed_;
    int count_;
};

// Thrown when the inverse-concavity modulus is not positive; carries the witness.
class NonPositiveKappa : public Error {
public:
    NonPositiveKappa(const std::string& detail, Witness witness)
        : Error(ErrorKind::NonPositiveKappa, detail), witness_(std::move(witness)) {}
    const Witness& witness() const noexcept { return witness_; }

private:
    Witness witness_;
};

/// Exact minimum over |S| = 1 of γ̈(λ)[S,S] + 2Σ γ̇ⁱ S̃ᵢⱼ²/(λⱼ + shift) in the eigenframe of A.
struct FormMinimum {
    double value = 0.0;
    Mat s_rot;
};
FormMinimum min_form_over_unit_s(const SpeedJet& jet, const Vec& lambda, double shift);

struct AnalysisOptions {
    int threads = 1;
    int refine_starts = 10;
    int refine_steps = 200;
};

/// Minimum of γ(A)·ic_form(A,S) over |A| = |S| = 1 with cond(A) ≤ 10, by sampling
/// N random (A,S) pairs followed by descent.
struct IcScan {
    double sample_min = 0.0;  // over the random pairs only
    double refined_min = 0.0; // after descent
    Witness witness;
};
IcScan scan_inverse_concavity(const SpeedFunction& gamma, int samples, std::uint64_t seed,
                              const AnalysisOptions& opt = {});

struct MicResult {
    int m_star = 0;
    int m_ic = 0;
    std::vector<double> level_minimum;  // indexed by m; NaN below m_star
};
MicResult estimate_mIC(const SpeedFunction& gamma, int samples, std::uint64_t seed,
                       const AnalysisOptions& opt = {});

struct EllipticityResult {
    double c = 1.0;
    Witness witness;
};
EllipticityResult certify_ellipticity(const SpeedFunction& gamma, const ConeSampler& sampler,
                                      const AnalysisOptions& opt = {});

struct KappaResult {
    double kappa = 0.0;
    double sample_min = 0.0;
    Witness witness;
};
// Throws NonPositiveKappa when κ ≤ kStrictThreshold.
KappaResult estimate_kappa(const SpeedFunction& gamma, const ConeSampler& sampler,
                           const AnalysisOptions& opt = {});

struct EpsilonResult {
    double epsilon = 0.0;
    double analytic = 0.0;
    double empirical = 0.0;
    bool empirical_hit_grid_max = false;
    std::string chosen;  // "analytic" or "empirical"
    double min_form = 0.0;  // min pert form at the returned ε on the search samples
    Witness witness;
};
EpsilonResult find_epsilon(const SpeedFunction& gamma, const ConeSampler& sampler, double kappa, double c,
                           const AnalysisOptions& opt = {});

/// Minimum of the perturbed form over the sampler's mixed samples (with descent).
struct PertValidation {
    double min_form = 0.0;
    int rank_deficient = 0;
    Witness witness;
};
PertValidation validate_epsilon(const SpeedFunction& gamma, const ConeSampler& sampler, double epsilon,
                                const AnalysisOptions& opt = {});

struct FacetSumReport {
    int k = 0;
    std::vector<double> delta;      // per sample: min facet distance over m < m_IC
    std::vector<double> rho_hat;    // per sample: normalized k smallest sum
    double min_delta = 0.0;
    double min_rho_hat = 0.0;
    double rank_correlation = 0.0;  // Spearman ρ between delta and rho_hat
    int sign_disagreements = 0;
};
FacetSumReport check_lemma24(const std::vector<Vec>& family, int k);
/// λ = (t,…,t, 1,…,1) (k copies of t), t decreasing geometrically toward 0.
std::vector<Vec> facet_approach_family(int n, int k, int steps);

struct Certificate {
    std::string speed;
    int n = 0;
    int k = 0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    int samples = 0;
    double c = 1.0;
    double kappa = 0.0;
    double epsilon = 0.0;
    std::string epsilon_source;
    double epsilon_analytic = 0.0;
    double epsilon_empirical = 0.0;
    double delta = 0.0;
    double boundary_floor = 0.0;
    int m_star = 0;
    int m_ic = 0;
    bool statistical = true;
    std::vector<Witness> witnesses;
};

/// Runs m*, m_IC, C, κ, ε and δ for one speed and sampler.
Certificate certify_speed(const SpeedFunction& gamma, const ConeSampler& sampler, const AnalysisOptions& opt = {});

nlohmann::json to_json(const Witness& w);
nlohmann::json to_json(const Certificate& c);

}  // namespace hlab
