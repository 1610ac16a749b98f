#pragma once

#include "harnacklab/linalg.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace hlab {

/// One generator of an admissible cone. Every variant is an open, symmetric,
/// convex cone containing the positive cone.
struct ConeSpec {
    enum class Kind {
        Positive,      // all λᵢ > 0
        KPositive,     // sum of the k smallest entries > 0 (sorted route)
        GardingSigma,  // σ_j(λ) > 0 for every j ≤ k
        HalfSpaceSum,  // every k-subset sum > 0 (enumerated route)
    };

    Kind kind = Kind::Positive;
    int n = 0;
    int k = 1;

    bool contains(const Vec& lambda) const;
    std::string describe() const;
};

/// Intersection of cone generators (a composite speed lives on the intersection).
struct Cone {
    std::vector<ConeSpec> parts;

    bool contains(const Vec& lambda) const;
    int n() const { return parts.empty() ? 0 : parts.front().n; }
};

/// Value and eigenvalue derivatives of a speed at one point.
struct SpeedJet {
    double value = 0.0;
    Vec grad;  // γ̇ⁱ
    Mat hess;  // γ̈ⁱʲ
};

namespace detail {
class SpeedModel;
}

/// Symmetric, 1-homogeneous, monotone speed γ on its admissible cone.
/// Cheap to copy; the underlying model is immutable and shared.
class SpeedFunction {
public:
    static SpeedFunction trace(int n);
    static SpeedFunction k_harmonic(int n, int k);
    static SpeedFunction sigma_ratio(int n, int k);
    static SpeedFunction harmonic_composite(const SpeedFunction& first, const SpeedFunction& second);
    /// γ_m(μ) = γ(0, …, 0, μ) on the m-dimensional facet.
    static SpeedFunction facet_restriction(const SpeedFunction& base, int m);

    /// Parses keys such as "kharmonic:n=3,k=2" or "hcomp:trace:n=3|sigmaratio:n=3,k=2".
    static SpeedFunction parse(std::string_view key);

    std::string key() const;
    int n() const;
    const Cone& cone() const;
    bool in_cone(const Vec& lambda) const;

    // order 0: value only; 1: + gradient; 2: + Hessian. Throws ConeViolation off Γ.
    SpeedJet jet(const Vec& lambda, int order) const;

    double value(const Vec& lambda) const { return jet(lambda, 0).value; }
    Vec gradient(const Vec& lambda) const { return jet(lambda, 1).grad; }
    Mat hessian(const Vec& lambda) const { return jet(lambda, 2).hess; }

    /// γ(1, …, 1)
    double value_at_ones() const;

private:
    explicit SpeedFunction(std::shared_ptr<const detail::SpeedModel> model);
    std::shared_ptr<const detail::SpeedModel> model_;
};

double eval(const SpeedFunction& gamma, const EigenvalueVector& lambda);
Vec grad_eigen(const SpeedFunction& gamma, const EigenvalueVector& lambda);
SymMatrix hess_eigen(const SpeedFunction& gamma, const EigenvalueVector& lambda);

/// γ̇^{ij}(A) = U·diag(γ̇(λ))·Uᵀ.
SymMatrix dgamma_matrix(const SpeedFunction& gamma, const SymMatrix& a);

/// γ(A) evaluated through the spectrum of A.
double eval_matrix(const SpeedFunction& gamma, const SymMatrix& a);

/// γ̈^{ij,kl}(A)·S_ij·S_kl via the spectral formula; near-repeated eigenvalues
/// (|λᵢ−λⱼ| < 1e-8·|λ|) use the analytic limit γ̈ⁱⁱ − γ̈ⁱʲ.
double d2gamma_contract(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s);

/// (γ̈^{ij,kl}(A) + 2γ̇^{ik}(A)A⁻¹_{jl})·S_ij·S_kl for positive-definite A.
double ic_form(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s);

/// Same form with A⁻¹ replaced by (A + εγ(A)I)⁻¹; A may be singular.
double pert_ic_form(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s, double epsilon);

// Spectral-frame variants used by the sampling loops: `lambda` are the
// eigenvalues of A and `s_rot` is S expressed in the eigenbasis of A.
double d2gamma_contract_spectral(const SpeedJet& jet, const Vec& lambda, const Mat& s_rot);
double pert_ic_form_spectral(const SpeedFunction& gamma, const Vec& lambda, const Mat& s_rot,
                             double epsilon);

}  // namespace hlab
