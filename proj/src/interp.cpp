#include "harnacklab/interp.hpp"

#include "harnacklab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hlab {

double PolarGrid::at(const std::vector<double>& u, int i, Parity parity) const {
    const double sign = parity == Parity::Even ? 1.0 : -1.0;
    if (i < 0 && first_ == 0) return sign * u[static_cast<std::size_t>(-i)];
    if (i > last_) return sign * u[static_cast<std::size_t>(2 * last_ - i)];
    if (i < first_) throw RangeError("interpolation stencil leaves the open profile");
    return u[static_cast<std::size_t>(i)];
}

namespace {

int cell_of(double theta, double d, int first, int last) {
    const int i = static_cast<int>(std::floor(theta / d));
    return std::clamp(i, first, last - 1);
}

}  // namespace

double PolarGrid::lagrange(const std::vector<double>& u, double theta, Parity parity) const {
    const int i = cell_of(theta, d_, first_, last_);
    int lo = i - 1;
    if (first_ > 0 && lo < first_) lo = first_;
    const double x = theta / d_ - lo;  // position in units of Δ relative to node lo
    double sum = 0.0;
    for (int a = 0; a < 4; ++a) {
        double w = 1.0;
        for (int b = 0; b < 4; ++b)
            if (b != a) w *= (x - b) / (a - b);
        sum += w * at(u, lo + a, parity);
    }
    return sum;
}

double PolarGrid::monotone(const std::vector<double>& u, double theta, Parity parity) const {
    const int i = cell_of(theta, d_, first_, last_);
    auto secant = [&](int j) { return (at(u, j + 1, parity) - at(u, j, parity)) / d_; };
    auto slope = [&](int j) {
        if (first_ > 0 && j == first_) return secant(j);
        const double a = secant(j - 1), b = secant(j);
        if (a * b <= 0.0) return 0.0;
        return 2.0 / (1.0 / a + 1.0 / b);
    };
    const double y0 = at(u, i, parity), y1 = at(u, i + 1, parity);
    const double m0 = slope(i), m1 = slope(i + 1);
    const double s = theta / d_ - i;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * d_ * m0 + (-2 * s3 + 3 * s2) * y1 +
           (s3 - s2) * d_ * m1;
}

}  // namespace hlab
