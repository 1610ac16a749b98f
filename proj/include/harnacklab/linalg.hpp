#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>

namespace hlab {

// Dimensions stay at desk scale; fixed maximum sizes keep Eigen off the heap.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

Vec to_vec(std::span<const double> values);

/// Ordered spectrum λ₁ ≤ … ≤ λₙ. Construction sorts and rejects non-finite entries.
class EigenvalueVector {
public:
    explicit EigenvalueVector(const Vec& values);
    EigenvalueVector(std::initializer_list<double> values);

    int n() const { return static_cast<int>(values_.size()); }
    const Vec& values() const { return values_; }
    double operator[](int i) const { return values_(i); }
    double norm() const { return values_.norm(); }

private:
    Vec values_;
};

/// Dense symmetric matrix. Entry (i,j) and (j,i) are bit-identical after construction.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Mat& m);

    static SymMatrix diagonal(const Vec& d);
    static SymMatrix identity(int n);

    int n() const { return static_cast<int>(m_.rows()); }
    const Mat& matrix() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }
    double norm() const { return m_.norm(); }

    SymMatrix operator+(const SymMatrix& o) const { return SymMatrix(Mat(m_ + o.m_)); }
    SymMatrix operator-(const SymMatrix& o) const { return SymMatrix(Mat(m_ - o.m_)); }
    SymMatrix operator*(double s) const { return SymMatrix(Mat(m_ * s)); }

    /// Q·this·Qᵀ for orthogonal Q.
    SymMatrix conjugate(const Mat& q) const;

private:
    Mat m_;
};

struct SpectralDecomposition {
    Vec values;   // ascending
    Mat vectors;  // columns are eigenvectors
};

// Throws EigenFailure when the symmetric eigensolver does not converge.
SpectralDecomposition decompose(const SymMatrix& a);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
Mat random_orthogonal(int n, std::mt19937_64& rng);

/// Symmetric matrix with i.i.d. Gaussian entries, scaled to unit Frobenius norm.
SymMatrix random_unit_symmetric(int n, std::mt19937_64& rng);

// Order-independent stream derivation: the generator for item `index` depends
// only on (seed, index), never on which worker draws it.
std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t index);

}  // namespace hlab
