#include "harnacklab/linalg.hpp"

#include "harnacklab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hlab {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConeViolation: return "ConeViolation";
        case ErrorKind::EigenFailure: return "EigenFailure";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::NegativeEntry: return "NegativeEntry";
        case ErrorKind::NoStrictLevel: return "NoStrictLevel";
        case ErrorKind::NonPositiveKappa: return "NonPositiveKappa";
        case ErrorKind::NoEpsilonFound: return "NoEpsilonFound";
        case ErrorKind::ConvexityLost: return "ConvexityLost";
        case ErrorKind::PoleSingularity: return "PoleSingularity";
        case ErrorKind::StepRejected: return "StepRejected";
        case ErrorKind::Extinct: return "Extinct";
        case ErrorKind::BisectionFailure: return "BisectionFailure";
        case ErrorKind::DegenerateCurvature: return "DegenerateCurvature";
        case ErrorKind::InsufficientResolution: return "InsufficientResolution";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::RangeError: return "RangeError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Vec to_vec(std::span<const double> values) {
    Vec v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
    return v;
}

EigenvalueVector::EigenvalueVector(const Vec& values) : values_(values) {
    if (values_.size() < 1 || values_.size() > kMaxDim)
        throw RangeError("eigenvalue vector dimension " + std::to_string(values_.size()) +
                         " outside [1, 8]");
    for (Eigen::Index i = 0; i < values_.size(); ++i)
        if (!std::isfinite(values_(i))) throw RangeError("non-finite eigenvalue");
    std::sort(values_.data(), values_.data() + values_.size());
}

EigenvalueVector::EigenvalueVector(std::initializer_list<double> values)
    : EigenvalueVector(to_vec(std::span<const double>(values.begin(), values.size()))) {}

SymMatrix::SymMatrix(const Mat& m) : m_(m) {
    if (m_.rows() != m_.cols()) throw RangeError("symmetric matrix must be square");
    const Eigen::Index n = m_.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (m_(i, j) + m_(j, i));
            m_(i, j) = avg;
            m_(j, i) = avg;
        }
    }
}

SymMatrix SymMatrix::diagonal(const Vec& d) {
    Mat m = Mat::Zero(d.size(), d.size());
    m.diagonal() = d;
    return SymMatrix(m);
}

SymMatrix SymMatrix::identity(int n) { return SymMatrix(Mat(Mat::Identity(n, n))); }

SymMatrix SymMatrix::conjugate(const Mat& q) const { return SymMatrix(Mat(q * m_ * q.transpose())); }

SpectralDecomposition decompose(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Mat> solver(a.matrix());
    if (solver.info() != Eigen::Success)
        throw EigenFailure("symmetric eigensolver did not converge");
    SpectralDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
    if (!out.values.allFinite()) throw EigenFailure("non-finite eigenvalues");
    return out;
}

Mat random_orthogonal(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    const Mat r = qr.matrixQR();
    for (int j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

SymMatrix random_unit_symmetric(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            s(i, j) = normal(rng);
            s(j, i) = s(i, j);
        }
    const double norm = s.norm();
    return SymMatrix(Mat(s / norm));
}

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over the combined key
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return std::mt19937_64(z);
}

}  // namespace hlab
