#include "harnacklab/speed.hpp"

#include "harnacklab/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace hlab {

namespace {

// Elementary symmetric polynomials σ_0..σ_n of the given entries.
Vec elementary_symmetric(const double* x, int n) {
    Vec e = Vec::Zero(n + 1);
    e(0) = 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j >= 1; --j) e(j) += x[i] * e(j - 1);
    return e;
}

double sigma(const Vec& e, int j) { return (j < 0 || j >= e.size()) ? 0.0 : e(j); }

std::vector<unsigned> k_subsets(int n, int k) {
    std::vector<unsigned> out;
    for (unsigned mask = 0; mask < (1u << n); ++mask)
        if (std::popcount(mask) == k) out.push_back(mask);
    return out;
}

double subset_sum(const Vec& lambda, unsigned mask) {
    double s = 0.0;
    for (int i = 0; i < lambda.size(); ++i)
        if (mask & (1u << i)) s += lambda(i);
    return s;
}

// Neumaier-compensated accumulator.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            carry += (sum - t) + x;
        else
            carry += (x - t) + sum;
        sum = t;
    }
    double result() const { return sum + carry; }
};

}  // namespace

bool ConeSpec::contains(const Vec& lambda) const {
    if (lambda.size() != n) return false;
    switch (kind) {
        case Kind::Positive:
            return (lambda.array() > 0.0).all();
        case Kind::KPositive:
        case Kind::HalfSpaceSum: {
            // every k-subset sum is positive iff the k smallest entries sum to a positive number
            Vec sorted = lambda;
            std::sort(sorted.data(), sorted.data() + sorted.size());
            return sorted.head(k).sum() > 0.0;
        }
        case Kind::GardingSigma: {
            const Vec e = elementary_symmetric(lambda.data(), n);
            for (int j = 1; j <= k; ++j)
                if (!(e(j) > 0.0)) return false;
            return true;
        }
    }
    return false;
}

std::string ConeSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Positive: os << "positive"; break;
        case Kind::KPositive: os << "kpositive"; break;
        case Kind::GardingSigma: os << "garding"; break;
        case Kind::HalfSpaceSum: os << "halfspacesum"; break;
    }
    os << "(n=" << n << ",k=" << k << ")";
    return os.str();
}

bool Cone::contains(const Vec& lambda) const {
    for (const auto& part : parts)
        if (!part.contains(lambda)) return false;
    return true;
}

namespace detail {

class SpeedModel {
public:
    SpeedModel(int n, Cone cone) : n_(n), cone_(std::move(cone)) {}
    virtual ~SpeedModel() = default;

    virtual std::string key() const = 0;
    // Callers have already checked dimension, finiteness and cone membership.
    virtual SpeedJet jet(const Vec& lambda, int order) const = 0;

    int n() const { return n_; }
    const Cone& cone() const { return cone_; }

private:
    int n_;
    Cone cone_;
};

namespace {

class TraceModel final : public SpeedModel {
public:
    explicit TraceModel(int n) : SpeedModel(n, Cone{{{ConeSpec::Kind::HalfSpaceSum, n, n}}}) {}

    std::string key() const override { return "trace:n=" + std::to_string(n()); }

    SpeedJet jet(const Vec& lambda, int order) const override {
        SpeedJet j;
        j.value = lambda.sum();
        if (order >= 1) j.grad = Vec::Ones(n());
        if (order >= 2) j.hess = Mat::Zero(n(), n());
        return j;
    }
};

// γ = (Σ_{|I|=k} 1/λ_I)⁻¹ with λ_I the k-subset sums.
class KHarmonicModel final : public SpeedModel {
public:
    KHarmonicModel(int n, int k)
        : SpeedModel(n, Cone{{{ConeSpec::Kind::HalfSpaceSum, n, k}}}), k_(k), subsets_(k_subsets(n, k)) {}

    std::string key() const override {
        return "kharmonic:n=" + std::to_string(n()) + ",k=" + std::to_string(k_);
    }

    SpeedJet jet(const Vec& lambda, int order) const override {
        const double floor = 1e-12 * lambda.norm();
        std::array<double, 70> sums;  // C(8, 4) subsets at most
        CompensatedSum reciprocal;
        for (std::size_t s = 0; s < subsets_.size(); ++s) {
            sums[s] = subset_sum(lambda, subsets_[s]);
            if (!(sums[s] > floor))
                throw ConeViolation(key() + ": k-subset sum " + std::to_string(sums[s]) +
                                    " at or below the boundary tolerance");
            reciprocal.add(1.0 / sums[s]);
        }
        SpeedJet j;
        const double g = 1.0 / reciprocal.result();
        j.value = g;
        if (order < 1) return j;

        const int n = this->n();
        Vec a = Vec::Zero(n);
        Mat b3 = Mat::Zero(n, n);
        for (std::size_t s = 0; s < subsets_.size(); ++s) {
            const double inv2 = 1.0 / (sums[s] * sums[s]);
            const double inv3 = inv2 / sums[s];
            for (int i = 0; i < n; ++i) {
                if (!(subsets_[s] & (1u << i))) continue;
                a(i) += inv2;
                if (order >= 2)
                    for (int m = 0; m < n; ++m)
                        if (subsets_[s] & (1u << m)) b3(i, m) += inv3;
            }
        }
        j.grad = g * g * a;
        if (order >= 2) j.hess = 2.0 * g * g * g * (a * a.transpose()) - 2.0 * g * g * b3;
        return j;
    }

private:
    int k_;
    std::vector<unsigned> subsets_;
};

// γ = σ_k / σ_{k-1} on the Gårding cone.
class SigmaRatioModel final : public SpeedModel {
public:
    SigmaRatioModel(int n, int k) : SpeedModel(n, Cone{{{ConeSpec::Kind::GardingSigma, n, k}}}), k_(k) {}

    std::string key() const override {
        return "sigmaratio:n=" + std::to_string(n()) + ",k=" + std::to_string(k_);
    }

    SpeedJet jet(const Vec& lambda, int order) const override {
        const int n = this->n();
        const Vec e = elementary_symmetric(lambda.data(), n);
        const double p = sigma(e, k_);
        const double q = sigma(e, k_ - 1);
        SpeedJet j;
        j.value = p / q;
        if (order < 1) return j;

        // σ_j(λ | i) and σ_j(λ | i, m): λ with entries removed.
        Vec pi(n), qi(n);
        std::array<double, kMaxDim> rest{};
        for (int i = 0; i < n; ++i) {
            int c = 0;
            for (int m = 0; m < n; ++m)
                if (m != i) rest[c++] = lambda(m);
            const Vec ei = elementary_symmetric(rest.data(), c);
            pi(i) = sigma(ei, k_ - 1);
            qi(i) = sigma(ei, k_ - 2);
        }
        j.grad = (pi * q - p * qi) / (q * q);
        if (order < 2) return j;

        Mat pij = Mat::Zero(n, n), qij = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            for (int m = i + 1; m < n; ++m) {
                int c = 0;
                for (int r = 0; r < n; ++r)
                    if (r != i && r != m) rest[c++] = lambda(r);
                const Vec eim = elementary_symmetric(rest.data(), c);
                pij(i, m) = pij(m, i) = sigma(eim, k_ - 2);
                qij(i, m) = qij(m, i) = sigma(eim, k_ - 3);
            }
        }
        j.hess = pij / q - (pi * qi.transpose() + qi * pi.transpose()) / (q * q) - p * qij / (q * q) +
                 2.0 * p * (qi * qi.transpose()) / (q * q * q);
        return j;
    }

private:
    int k_;
};

Cone intersect(const Cone& a, const Cone& b) {
    Cone out = a;
    out.parts.insert(out.parts.end(), b.parts.begin(), b.parts.end());
    return out;
}

// h(a, b) = 2ab/(a+b) applied to two speeds of the same dimension.
class HarmonicCompositeModel final : public SpeedModel {
public:
    HarmonicCompositeModel(SpeedFunction first, SpeedFunction second)
        : SpeedModel(first.n(), intersect(first.cone(), second.cone())),
          first_(std::move(first)),
          second_(std::move(second)) {}

    std::string key() const override { return "hcomp:" + first_.key() + "|" + second_.key(); }

    SpeedJet jet(const Vec& lambda, int order) const override {
        const SpeedJet ja = first_.jet(lambda, order);
        const SpeedJet jb = second_.jet(lambda, order);
        const double a = ja.value, b = jb.value, s = a + b;
        SpeedJet j;
        j.value = 2.0 * a * b / s;
        if (order < 1) return j;
        const double ha = 2.0 * b * b / (s * s);
        const double hb = 2.0 * a * a / (s * s);
        j.grad = ha * ja.grad + hb * jb.grad;
        if (order < 2) return j;
        const double s3 = s * s * s;
        const double haa = -4.0 * b * b / s3;
        const double hbb = -4.0 * a * a / s3;
        const double hab = 4.0 * a * b / s3;
        j.hess = haa * (ja.grad * ja.grad.transpose()) + hbb * (jb.grad * jb.grad.transpose()) +
                 hab * (ja.grad * jb.grad.transpose() + jb.grad * ja.grad.transpose()) + ha * ja.hess +
                 hb * jb.hess;
        return j;
    }

private:
    SpeedFunction first_;
    SpeedFunction second_;
};

// Cone seen by μ ↦ (0^{n-m}, μ). Returns false when the facet misses Γ.
bool induced_facet_cone(const Cone& base, int m, Cone& out) {
    out.parts.clear();
    for (const auto& part : base.parts) {
        const int zeros = part.n - m;
        ConeSpec spec = part;
        spec.n = m;
        switch (part.kind) {
            case ConeSpec::Kind::Positive:
                if (zeros > 0) return false;
                break;
            case ConeSpec::Kind::KPositive:
            case ConeSpec::Kind::HalfSpaceSum:
                spec.k = part.k - zeros;
                if (spec.k < 1) return false;
                break;
            case ConeSpec::Kind::GardingSigma:
                if (part.k > m) return false;
                break;
        }
        out.parts.push_back(spec);
    }
    return true;
}

class FacetRestrictionModel final : public SpeedModel {
public:
    FacetRestrictionModel(SpeedFunction base, int m, Cone cone)
        : SpeedModel(m, std::move(cone)), base_(std::move(base)) {}

    std::string key() const override { return "facet:m=" + std::to_string(n()) + "|" + base_.key(); }

    SpeedJet jet(const Vec& mu, int order) const override {
        const int full = base_.n();
        const int zeros = full - n();
        Vec lambda = Vec::Zero(full);
        lambda.tail(n()) = mu;
        SpeedJet jb = base_.jet(lambda, order);
        SpeedJet j;
        j.value = jb.value;
        if (order >= 1) j.grad = jb.grad.tail(n());
        if (order >= 2) j.hess = jb.hess.bottomRightCorner(n(), n());
        (void)zeros;
        return j;
    }

private:
    SpeedFunction base_;
};

void check_dims(int n, int k, const char* what) {
    if (n < 1 || n > kMaxDim)
        throw RangeError(std::string(what) + ": n=" + std::to_string(n) + " outside [1, 8]");
    if (k < 1 || k > n)
        throw RangeError(std::string(what) + ": k=" + std::to_string(k) + " outside [1, n]");
}

std::map<std::string, int> parse_params(std::string_view text, std::string_view key) {
    std::map<std::string, int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view item = text.substr(pos, comma - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("speed key '" + std::string(key) + "': expected name=value, got '" +
                             std::string(item) + "'");
        int value = 0;
        const std::string_view digits = item.substr(eq + 1);
        const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (res.ec != std::errc() || res.ptr != digits.data() + digits.size())
            throw ParseError("speed key '" + std::string(key) + "': bad integer '" + std::string(digits) + "'");
        if (!out.emplace(std::string(item.substr(0, eq)), value).second)
            throw ParseError("speed key '" + std::string(key) + "': duplicate parameter");
        pos = comma + 1;
    }
    return out;
}

int require_param(const std::map<std::string, int>& params, const std::string& name, std::string_view key) {
    const auto it = params.find(name);
    if (it == params.end())
        throw ParseError("speed key '" + std::string(key) + "': missing parameter " + name);
    return it->second;
}

}  // namespace
}  // namespace detail

SpeedFunction::SpeedFunction(std::shared_ptr<const detail::SpeedModel> model) : model_(std::move(model)) {}

SpeedFunction SpeedFunction::trace(int n) {
    detail::check_dims(n, 1, "trace");
    return SpeedFunction(std::make_shared<detail::TraceModel>(n));
}

SpeedFunction SpeedFunction::k_harmonic(int n, int k) {
    detail::check_dims(n, k, "kharmonic");
    return SpeedFunction(std::make_shared<detail::KHarmonicModel>(n, k));
}

SpeedFunction SpeedFunction::sigma_ratio(int n, int k) {
    detail::check_dims(n, k, "sigmaratio");
    return SpeedFunction(std::make_shared<detail::SigmaRatioModel>(n, k));
}

SpeedFunction SpeedFunction::harmonic_composite(const SpeedFunction& first, const SpeedFunction& second) {
    if (first.n() != second.n())
        throw RangeError("hcomp: component dimensions differ (" + std::to_string(first.n()) + " vs " +
                         std::to_string(second.n()) + ")");
    return SpeedFunction(std::make_shared<detail::HarmonicCompositeModel>(first, second));
}

SpeedFunction SpeedFunction::facet_restriction(const SpeedFunction& base, int m) {
    if (m < 1 || m > base.n())
        throw RangeError("facet: m=" + std::to_string(m) + " outside [1, n]");
    Cone cone;
    if (!detail::induced_facet_cone(base.cone(), m, cone))
        throw RangeError("facet: the " + std::to_string(m) + "-dimensional facets of the positive cone lie outside Γ of " +
                         base.key());
    return SpeedFunction(std::make_shared<detail::FacetRestrictionModel>(base, m, std::move(cone)));
}

SpeedFunction SpeedFunction::parse(std::string_view key) {
    const std::size_t colon = key.find(':');
    if (colon == std::string_view::npos) throw ParseError("speed key '" + std::string(key) + "' has no ':'");
    const std::string_view name = key.substr(0, colon);
    const std::string_view rest = key.substr(colon + 1);

    if (name == "hcomp") {
        const std::size_t bar = rest.find('|');
        if (bar == std::string_view::npos) throw ParseError("hcomp key needs two components separated by '|'");
        return harmonic_composite(parse(rest.substr(0, bar)), parse(rest.substr(bar + 1)));
    }
    if (name == "facet") {
        const std::size_t bar = rest.find('|');
        if (bar == std::string_view::npos) throw ParseError("facet key needs 'm=<m>|<speed>'");
        const auto params = detail::parse_params(rest.substr(0, bar), key);
        return facet_restriction(parse(rest.substr(bar + 1)), detail::require_param(params, "m", key));
    }

    const auto params = detail::parse_params(rest, key);
    const int n = detail::require_param(params, "n", key);
    if (name == "trace") {
        if (params.size() != 1) throw ParseError("trace key takes only n");
        return trace(n);
    }
    if (params.size() != 2) throw ParseError("speed key '" + std::string(key) + "' expects n and k");
    const int k = detail::require_param(params, "k", key);
    if (name == "kharmonic") return k_harmonic(n, k);
    if (name == "sigmaratio") return sigma_ratio(n, k);
    throw ParseError("unknown speed '" + std::string(name) + "'");
}

std::string SpeedFunction::key() const { return model_->key(); }
int SpeedFunction::n() const { return model_->n(); }
const Cone& SpeedFunction::cone() const { return model_->cone(); }

bool SpeedFunction::in_cone(const Vec& lambda) const {
    return lambda.size() == n() && lambda.allFinite() && model_->cone().contains(lambda);
}

SpeedJet SpeedFunction::jet(const Vec& lambda, int order) const {
    if (lambda.size() != n())
        throw RangeError(key() + ": expected " + std::to_string(n()) + " eigenvalues, got " +
                         std::to_string(lambda.size()));
    if (!in_cone(lambda)) {
        std::ostringstream os;
        os << key() << ": λ = (" << lambda.transpose() << ") outside the admissible cone";
        throw ConeViolation(os.str());
    }
    SpeedJet j = model_->jet(lambda, order);
    if (order >= 2) j.hess = (0.5 * (j.hess + j.hess.transpose())).eval();
    return j;
}

double SpeedFunction::value_at_ones() const { return value(Vec::Ones(n())); }

double eval(const SpeedFunction& gamma, const EigenvalueVector& lambda) { return gamma.value(lambda.values()); }

Vec grad_eigen(const SpeedFunction& gamma, const EigenvalueVector& lambda) {
    return gamma.gradient(lambda.values());
}

SymMatrix hess_eigen(const SpeedFunction& gamma, const EigenvalueVector& lambda) {
    return SymMatrix(gamma.hessian(lambda.values()));
}

double eval_matrix(const SpeedFunction& gamma, const SymMatrix& a) { return gamma.value(decompose(a).values); }

SymMatrix dgamma_matrix(const SpeedFunction& gamma, const SymMatrix& a) {
    const SpectralDecomposition spec = decompose(a);
    const Vec g = gamma.gradient(spec.values);
    return SymMatrix(Mat(spec.vectors * g.asDiagonal() * spec.vectors.transpose()));
}

double d2gamma_contract_spectral(const SpeedJet& jet, const Vec& lambda, const Mat& s_rot) {
    const int n = static_cast<int>(lambda.size());
    const Vec d = s_rot.diagonal();
    double total = d.dot(jet.hess * d);
    const double tol = 1e-8 * lambda.norm();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double gap = lambda(i) - lambda(j);
            const double quotient = std::abs(gap) < tol ? jet.hess(i, i) - jet.hess(i, j)
                                                        : (jet.grad(i) - jet.grad(j)) / gap;
            total += quotient * s_rot(i, j) * s_rot(i, j);
        }
    }
    return total;
}

double d2gamma_contract(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s) {
    if (s.n() != a.n()) throw RangeError("d2gamma_contract: dimension mismatch");
    const SpectralDecomposition spec = decompose(a);
    const SpeedJet jet = gamma.jet(spec.values, 2);
    const Mat s_rot = spec.vectors.transpose() * s.matrix() * spec.vectors;
    return d2gamma_contract_spectral(jet, spec.values, s_rot);
}

namespace {

double ic_spectral(const SpeedJet& jet, const Vec& lambda, const Mat& s_rot, double shift) {
    double first_order = 0.0;
    const int n = static_cast<int>(lambda.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) first_order += jet.grad(i) * s_rot(i, j) * s_rot(i, j) / (lambda(j) + shift);
    return d2gamma_contract_spectral(jet, lambda, s_rot) + 2.0 * first_order;
}

}  // namespace

double pert_ic_form_spectral(const SpeedFunction& gamma, const Vec& lambda, const Mat& s_rot, double epsilon) {
    if (!(epsilon >= 0.0)) throw RangeError("pert_ic_form: ε must be nonnegative");
    const SpeedJet jet = gamma.jet(lambda, 2);
    const double shift = epsilon * jet.value;
    if (!((lambda.array() + shift) > 0.0).all())
        throw NotPositiveDefinite("A + εγ(A)I is not positive definite");
    return ic_spectral(jet, lambda, s_rot, shift);
}

double pert_ic_form(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s, double epsilon) {
    if (s.n() != a.n()) throw RangeError("pert_ic_form: dimension mismatch");
    const SpectralDecomposition spec = decompose(a);
    const Mat s_rot = spec.vectors.transpose() * s.matrix() * spec.vectors;
    return pert_ic_form_spectral(gamma, spec.values, s_rot, epsilon);
}

double ic_form(const SpeedFunction& gamma, const SymMatrix& a, const SymMatrix& s) {
    if (s.n() != a.n()) throw RangeError("ic_form: dimension mismatch");
    const SpectralDecomposition spec = decompose(a);
    if (!(spec.values(0) > 0.0)) throw NotPositiveDefinite("ic_form requires positive-definite A");
    const Mat s_rot = spec.vectors.transpose() * s.matrix() * spec.vectors;
    const SpeedJet jet = gamma.jet(spec.values, 2);
    return ic_spectral(jet, spec.values, s_rot, 0.0);
}

}  // namespace hlab
