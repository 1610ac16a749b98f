#pragma once

#include "harnacklab/linalg.hpp"
#include "harnacklab/speed.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace hlab::testing {

inline std::vector<SpeedFunction> catalog() {
    return {
        SpeedFunction::trace(3),
        SpeedFunction::k_harmonic(3, 2),
        SpeedFunction::k_harmonic(4, 2),
        SpeedFunction::k_harmonic(4, 3),
        SpeedFunction::sigma_ratio(3, 2),
        SpeedFunction::sigma_ratio(4, 2),
        SpeedFunction::parse("hcomp:kharmonic:n=4,k=2|sigmaratio:n=4,k=2"),
    };
}

// Random point well inside Γ; entries may be slightly negative when Γ allows it.
inline Vec interior_point(const SpeedFunction& gamma, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> entry(-0.3, 2.0);
    for (;;) {
        Vec lambda(gamma.n());
        for (int i = 0; i < gamma.n(); ++i) lambda(i) = entry(rng);
        // keep a margin from ∂Γ so finite differences stay inside
        const Vec shrunk = lambda - 0.05 * lambda.norm() * Vec::Ones(gamma.n());
        if (gamma.in_cone(lambda) && gamma.in_cone(shrunk)) return lambda;
    }
}

inline SymMatrix matrix_with_spectrum(const Vec& lambda, std::mt19937_64& rng) {
    const Mat q = random_orthogonal(static_cast<int>(lambda.size()), rng);
    return SymMatrix::diagonal(lambda).conjugate(q);
}

// Second derivative of s ↦ f(s) at 0 by the 5-point stencil.
template <class F>
double second_derivative_5pt(F&& f, double h) {
    return (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h);
}

inline double rel_err(double a, double b, double scale) { return std::abs(a - b) / scale; }

}  // namespace hlab::testing
