#pragma once

#include <vector>

namespace hlab {

enum class Parity { Even, Odd };

/// Nodal data on θᵢ = i·Δ, i = first..last, with reflection across θ = 0
/// (when first == 0) and across θ = last·Δ (always a pole).
class PolarGrid {
public:
    PolarGrid(int first, int last, double spacing) : first_(first), last_(last), d_(spacing) {}

    int first() const { return first_; }
    int last() const { return last_; }
    double spacing() const { return d_; }

    /// u at any integer index, reflected across the poles with the given parity.
    double at(const std::vector<double>& u, int i, Parity parity) const;

    /// Four-point Lagrange interpolation (fourth order).
    double lagrange(const std::vector<double>& u, double theta, Parity parity) const;

    /// Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Butland slopes).
    double monotone(const std::vector<double>& u, double theta, Parity parity) const;

private:
    int first_;
    int last_;
    double d_;
};

}  // namespace hlab
