#include "harnacklab/cone_analysis.hpp"

#include "harnacklab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hlab {

namespace {

constexpr double kFormFloor = -1e-9;

Vec sorted_copy(const Vec& v) {
    Vec s = v;
    std::sort(s.data(), s.data() + s.size());
    return s;
}

Mat as_diag(const Vec& v) { return Mat(v.asDiagonal()); }

// Indices of the `count` smallest values (ties broken by index).
std::vector<std::size_t> worst_indices(const std::vector<double>& values, int count) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return values[a] < values[b] || (values[a] == values[b] && a < b);
                      });
    idx.resize(keep);
    return idx;
}

std::size_t argmin(const std::vector<double>& values) {
    return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

// Multiplicative coordinate descent on |λ| = 1, restricted to `admissible`.
template <class Objective, class Admissible>
std::pair<Vec, double> coordinate_descent(Vec lambda, Objective&& f, Admissible&& admissible, int steps) {
    double best = f(lambda);
    double step = 0.25;
    for (int it = 0; it < steps && step > 1e-10; ++it) {
        bool improved = false;
        for (int i = 0; i < lambda.size(); ++i) {
            if (lambda(i) == 0.0) continue;  // stay on the face
            for (double sign : {-1.0, 1.0}) {
                Vec trial = lambda;
                trial(i) *= std::exp(sign * step);
                trial /= trial.norm();
                if (!admissible(trial)) continue;
                double value;
                try {
                    value = f(trial);
                } catch (const ConeViolation&) {
                    continue;
                }
                if (value < best) {
                    best = value;
                    lambda = trial;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return {lambda, best};
}

}  // namespace

FacetIndex::FacetIndex(int m, int n) : m_(m) {
    if (m < 0 || m > n) throw RangeError("facet index m=" + std::to_string(m) + " outside [0, " + std::to_string(n) + "]");
}

double dist_to_facet(const EigenvalueVector& lambda, FacetIndex m) {
    const Vec& v = lambda.values();
    if (v(0) < 0.0) throw NegativeEntry("dist_to_facet requires λ ≥ 0, smallest entry " + std::to_string(v(0)));
    const double norm = v.norm();
    if (norm == 0.0) throw RangeError("dist_to_facet requires λ ≠ 0");
    if (m.m() > lambda.n()) throw RangeError("facet index exceeds dimension");
    return v.head(lambda.n() - m.m()).norm() / norm;
}

int compute_mstar(const Cone& cone) {
    const int n = cone.n();
    for (int m = 1; m <= n; ++m) {
        Vec p = Vec::Zero(n);
        p.tail(m).setOnes();
        if (cone.contains(p)) return m;
    }
    return n + 1;
}

int compute_mstar(const ConeSpec& cone) { return compute_mstar(Cone{{cone}}); }

double dist_to_cone_boundary(const Cone& cone, const Vec& lambda) {
    if (!cone.contains(lambda)) return 0.0;
    const Vec u = lambda / lambda.norm();
    const int n = static_cast<int>(u.size());
    double dist = std::numeric_limits<double>::infinity();
    for (const auto& part : cone.parts) {
        switch (part.kind) {
            case ConeSpec::Kind::Positive:
                dist = std::min(dist, u.minCoeff());
                break;
            case ConeSpec::Kind::KPositive:
            case ConeSpec::Kind::HalfSpaceSum: {
                const Vec s = sorted_copy(u);
                dist = std::min(dist, s.head(part.k).sum() / std::sqrt(static_cast<double>(part.k)));
                break;
            }
            case ConeSpec::Kind::GardingSigma: {
                // exit distance along coordinate, pair and diagonal directions
                const Cone single{{part}};
                auto exit = [&](const Vec& d) {
                    double lo = 0.0, hi = 2.0;
                    if (single.contains(u + hi * d)) return hi;
                    for (int it = 0; it < 50; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        (single.contains(u + mid * d) ? lo : hi) = mid;
                    }
                    return lo;
                };
                std::vector<Vec> dirs;
                dirs.push_back(-Vec::Ones(n) / std::sqrt(static_cast<double>(n)));
                for (int i = 0; i < n; ++i) {
                    Vec e = Vec::Zero(n);
                    e(i) = -1.0;
                    dirs.push_back(e);
                    for (int j = 0; j < n; ++j) {
                        if (j == i) continue;
                        Vec d = Vec::Zero(n);
                        d(i) = -1.0 / std::sqrt(2.0);
                        d(j) = 1.0 / std::sqrt(2.0);
                        dirs.push_back(d);
                    }
                }
                double best = 2.0;
                for (const Vec& d : dirs) best = std::min(best, exit(d));
                dist = std::min(dist, best);
                break;
            }
        }
    }
    return dist;
}

// ---------------------------------------------------------------------------

ConeSampler::ConeSampler(int n, int k, double rho, std::uint64_t seed, int count)
    : n_(n), k_(k), rho_(rho), seed_(seed), count_(count) {
    if (n < 1 || n > kMaxDim) throw RangeError("sampler dimension outside [1, 8]");
    if (k < 1 || k > n) throw RangeError("sampler k outside [1, n]");
    if (!(rho > 0.0) || rho > 1.0 / k)
        throw RangeError("sampler ρ=" + std::to_string(rho) + " outside (0, 1/k]");
    if (!(rho < static_cast<double>(k) / n))
        throw RangeError("sampler ρ=" + std::to_string(rho) + " leaves an empty cone (need ρ < k/n)");
    if (count < 1) throw RangeError("sampler needs at least one sample");
}

double ConeSampler::ratio(const Vec& lambda) const {
    const Vec s = sorted_copy(lambda);
    return s.head(k_).sum() / s.sum();
}

bool ConeSampler::admits(const Vec& lambda, bool strictly_positive) const {
    if (lambda.size() != n_ || !lambda.allFinite()) return false;
    const double lo = lambda.minCoeff();
    if (strictly_positive ? !(lo > 0.0) : lo < 0.0) return false;
    return ratio(lambda) >= rho_ * (1.0 - 1e-12);
}

namespace {

// Largest t with base + t·d inside {λ ≥ 0, ratio ≥ ρ}; base must be inside.
double ray_exit(const ConeSampler& s, const Vec& base, const Vec& d) {
    auto inside = [&](double t) {
        const Vec p = base + t * d;
        return p.minCoeff() >= 0.0 && s.ratio(p) >= s.rho();
    };
    double lo = 0.0, hi = 1.0;
    while (inside(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) return lo;
    }
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (inside(mid) ? lo : hi) = mid;
    }
    return lo;
}

Vec tangent_direction(int free, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec d(free);
    for (;;) {
        for (int i = 0; i < free; ++i) d(i) = normal(rng);
        d.array() -= d.mean();
        const double norm = d.norm();
        if (norm > 1e-8) return d / norm;
    }
}

}  // namespace

Vec ConeSampler::sample(std::size_t index, Region region) const {
    const std::uint64_t salt = 0x5851f42d4c957f2dULL * (static_cast<std::uint64_t>(region) + 1);
    std::mt19937_64 rng = stream_for(seed_ ^ salt, index);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);

    auto finish = [](Vec v) {
        v = sorted_copy(v);
        return Vec(v / v.norm());
    };

    if (region == Region::ZeroFace && k_ >= 2) {
        std::uniform_int_distribution<int> pick(1, k_ - 1);
        int zeros = pick(rng);
        // reduce the number of zeros until the face meets the ρ-cone
        while (zeros > 0 && !(static_cast<double>(k_ - zeros) / (n_ - zeros) > rho_)) --zeros;
        if (zeros > 0) {
            const int free = n_ - zeros;
            Vec v = Vec::Zero(n_);
            for (int tries = 0; tries < 1000; ++tries) {
                for (int i = 0; i < free; ++i) v(zeros + i) = expo(rng);
                v /= v.sum();
                if (ratio(v) >= rho_) return finish(v);
            }
            Vec base = Vec::Zero(n_);
            base.tail(free).setConstant(1.0 / free);
            Vec d = Vec::Zero(n_);
            d.tail(free) = tangent_direction(free, rng);
            const double t = ray_exit(*this, base, d) * uniform(rng);
            return finish(base + t * d);
        }
    }

    if (region == Region::Interior) {
        Vec v(n_);
        for (int tries = 0; tries < 1000; ++tries) {
            for (int i = 0; i < n_; ++i) v(i) = expo(rng);
            v /= v.sum();
            if (ratio(v) >= rho_) return finish(v);
        }
    }

    // near-boundary ray from the centre, or the interior fallback
    const Vec base = Vec::Constant(n_, 1.0 / n_);
    if (n_ == 1) return Vec::Ones(1);
    const Vec d = tangent_direction(n_, rng);
    const double t_max = ray_exit(*this, base, d);
    double fraction;
    if (region == Region::Interior) {
        fraction = std::pow(uniform(rng), 1.0 / (n_ - 1));
    } else {
        const double digits = 1.0 + 5.0 * uniform(rng);
        fraction = 1.0 - std::pow(10.0, -digits);
    }
    return finish(base + fraction * t_max * d);
}

Vec ConeSampler::positive_sample(std::size_t index) const {
    return sample(index, index % 2 == 0 ? Region::Interior : Region::NearBoundary);
}

Vec ConeSampler::mixed_sample(std::size_t index) const {
    static constexpr Region order[] = {Region::Interior, Region::NearBoundary, Region::ZeroFace};
    return sample(index, order[index % 3]);
}

// ---------------------------------------------------------------------------

FormMinimum min_form_over_unit_s(const SpeedJet& jet, const Vec& lambda, double shift) {
    const int n = static_cast<int>(lambda.size());
    const Vec denom = lambda.array() + shift;
    if (!(denom.array() > 0.0).all()) throw NotPositiveDefinite("A + shift·I is not positive definite");

    Mat diag_block = jet.hess;
    for (int i = 0; i < n; ++i) diag_block(i, i) += 2.0 * jet.grad(i) / denom(i);
    Eigen::SelfAdjointEigenSolver<Mat> solver(diag_block);
    if (solver.info() != Eigen::Success) throw EigenFailure("diagonal block eigensolve failed");

    FormMinimum out;
    out.value = solver.eigenvalues()(0);
    out.s_rot = as_diag(solver.eigenvectors().col(0));

    const double tol = 1e-8 * lambda.norm();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double gap = lambda(i) - lambda(j);
            const double quotient = std::abs(gap) < tol ? jet.hess(i, i) - jet.hess(i, j)
                                                        : (jet.grad(i) - jet.grad(j)) / gap;
            const double value = quotient + jet.grad(i) / denom(j) + jet.grad(j) / denom(i);
            if (value < out.value) {
                out.value = value;
                out.s_rot = Mat::Zero(n, n);
                out.s_rot(i, j) = out.s_rot(j, i) = 1.0 / std::sqrt(2.0);
            }
        }
    }
    return out;
}

IcScan scan_inverse_concavity(const SpeedFunction& gamma, int samples, std::uint64_t seed,
                              const AnalysisOptions& opt) {
    const int n = gamma.n();
    struct Draw {
        Vec lambda;
        Mat a, s;
        double value;
    };
    const auto draws = parallel_map<Draw>(static_cast<std::size_t>(samples), opt.threads, [&](std::size_t i) {
        std::mt19937_64 rng = stream_for(seed, i);
        std::uniform_real_distribution<double> entry(0.1, 1.0);
        Vec lambda(n);
        for (int j = 0; j < n; ++j) lambda(j) = entry(rng);
        lambda = sorted_copy(lambda);
        lambda /= lambda.norm();
        const Mat q = random_orthogonal(n, rng);
        const SymMatrix a = SymMatrix::diagonal(lambda).conjugate(q);
        const SymMatrix s = random_unit_symmetric(n, rng);
        const double value = eval_matrix(gamma, a) * ic_form(gamma, a, s);
        return Draw{lambda, a.matrix(), s.matrix(), value};
    });

    std::vector<double> values(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) values[i] = draws[i].value;
    const std::size_t best_sample = argmin(values);

    IcScan out;
    out.sample_min = values[best_sample];
    out.refined_min = out.sample_min;
    out.witness = Witness{"ic_sample", draws[best_sample].lambda, draws[best_sample].a, draws[best_sample].s,
                          out.sample_min};

    auto objective = [&](const Vec& l) {
        const SpeedJet jet = gamma.jet(l, 2);
        return jet.value * min_form_over_unit_s(jet, l, 0.0).value;
    };
    auto admissible = [](const Vec& l) { return l.minCoeff() > 0.0 && l.maxCoeff() <= 10.0 * l.minCoeff(); };

    const auto starts = worst_indices(values, opt.refine_starts);
    const auto refined = parallel_map<std::pair<Vec, double>>(starts.size(), opt.threads, [&](std::size_t r) {
        return coordinate_descent(draws[starts[r]].lambda, objective, admissible, opt.refine_steps);
    });
    for (const auto& [lambda, value] : refined) {
        if (value < out.refined_min) {
            out.refined_min = value;
            const SpeedJet jet = gamma.jet(lambda, 2);
            out.witness = Witness{"ic_descent", lambda, as_diag(lambda), min_form_over_unit_s(jet, lambda, 0.0).s_rot,
                                  value};
        }
    }
    return out;
}

MicResult estimate_mIC(const SpeedFunction& gamma, int samples, std::uint64_t seed, const AnalysisOptions& opt) {
    const int n = gamma.n();
    MicResult out;
    out.m_star = compute_mstar(gamma.cone());
    out.level_minimum.assign(static_cast<std::size_t>(n + 1), std::numeric_limits<double>::quiet_NaN());
    out.m_ic = n + 1;
    for (int m = n; m >= out.m_star; --m) {
        const SpeedFunction level = m == n ? gamma : SpeedFunction::facet_restriction(gamma, m);
        const IcScan scan = scan_inverse_concavity(level, samples, seed + static_cast<std::uint64_t>(m), opt);
        out.level_minimum[static_cast<std::size_t>(m)] = scan.refined_min;
        if (!(scan.refined_min > kStrictThreshold)) break;
        out.m_ic = m;
    }
    if (out.m_ic > n)
        throw NoStrictLevel(gamma.key() + " is not strictly inverse-concave even on the full positive cone");
    return out;
}

EllipticityResult certify_ellipticity(const SpeedFunction& gamma, const ConeSampler& sampler,
                                      const AnalysisOptions& opt) {
    const auto lambdas = parallel_map<Vec>(static_cast<std::size_t>(sampler.count()), opt.threads,
                                           [&](std::size_t i) { return sampler.positive_sample(i); });
    const auto values = parallel_map<double>(lambdas.size(), opt.threads, [&](std::size_t i) {
        const Vec g = gamma.gradient(lambdas[i]);
        return std::max(g.maxCoeff(), 1.0 / g.minCoeff());
    });
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    EllipticityResult out;
    out.c = values[best];
    out.witness = Witness{"ellipticity", lambdas[best], as_diag(lambdas[best]), Mat(), out.c};
    return out;
}

KappaResult estimate_kappa(const SpeedFunction& gamma, const ConeSampler& sampler, const AnalysisOptions& opt) {
    const int n = gamma.n();
    struct Draw {
        Vec lambda;
        Mat a, s;
        double value;
    };
    const auto draws = parallel_map<Draw>(static_cast<std::size_t>(sampler.count()), opt.threads, [&](std::size_t i) {
        const Vec lambda = sampler.positive_sample(i);
        std::mt19937_64 rng = stream_for(sampler.seed() ^ 0x2545f4914f6cdd1dULL, i);
        const Mat q = random_orthogonal(n, rng);
        const SymMatrix a = SymMatrix::diagonal(lambda).conjugate(q);
        const SymMatrix s = random_unit_symmetric(n, rng);
        return Draw{lambda, a.matrix(), s.matrix(), eval_matrix(gamma, a) * ic_form(gamma, a, s)};
    });
    std::vector<double> values(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) values[i] = draws[i].value;
    const std::size_t best_sample = argmin(values);

    KappaResult out;
    out.sample_min = values[best_sample];
    out.kappa = out.sample_min;
    out.witness = Witness{"kappa_sample", draws[best_sample].lambda, draws[best_sample].a, draws[best_sample].s,
                          out.sample_min};

    auto objective = [&](const Vec& l) {
        const SpeedJet jet = gamma.jet(l, 2);
        return jet.value * min_form_over_unit_s(jet, l, 0.0).value;
    };
    auto admissible = [&](const Vec& l) { return sampler.admits(l, true); };
    const auto starts = worst_indices(values, opt.refine_starts);
    const auto refined = parallel_map<std::pair<Vec, double>>(starts.size(), opt.threads, [&](std::size_t r) {
        return coordinate_descent(draws[starts[r]].lambda, objective, admissible, opt.refine_steps);
    });
    for (const auto& [lambda, value] : refined) {
        if (value < out.kappa) {
            out.kappa = value;
            const SpeedJet jet = gamma.jet(lambda, 2);
            out.witness = Witness{"kappa_descent", lambda, as_diag(lambda),
                                  min_form_over_unit_s(jet, lambda, 0.0).s_rot, value};
        }
    }
    if (!(out.kappa > kStrictThreshold))
        throw NonPositiveKappa(gamma.key() + ": inverse-concavity modulus " + std::to_string(out.kappa) +
                                   " is not positive on the sampled cone",
                               out.witness);
    return out;
}

namespace {

struct PertSearch {
    std::vector<Vec> lambdas;
    std::vector<SpeedJet> jets;
};

PertSearch prepare_pert_samples(const SpeedFunction& gamma, const ConeSampler& sampler, int threads) {
    PertSearch ps;
    ps.lambdas = parallel_map<Vec>(static_cast<std::size_t>(sampler.count()), threads,
                                   [&](std::size_t i) { return sampler.mixed_sample(i); });
    ps.jets = parallel_map<SpeedJet>(ps.lambdas.size(), threads,
                                     [&](std::size_t i) { return gamma.jet(ps.lambdas[i], 2); });
    return ps;
}

// min over samples and descent of min_S pert form; returns value and witness
std::pair<double, Witness> pert_minimum(const SpeedFunction& gamma, const ConeSampler& sampler, const PertSearch& ps,
                                        double epsilon, const AnalysisOptions& opt) {
    const auto values = parallel_map<double>(ps.lambdas.size(), opt.threads, [&](std::size_t i) {
        return min_form_over_unit_s(ps.jets[i], ps.lambdas[i], epsilon * ps.jets[i].value).value;
    });
    const std::size_t best = argmin(values);
    double min_value = values[best];
    Vec arg = ps.lambdas[best];

    auto objective = [&](const Vec& l) {
        const SpeedJet jet = gamma.jet(l, 2);
        return min_form_over_unit_s(jet, l, epsilon * jet.value).value;
    };
    auto admissible = [&](const Vec& l) { return sampler.admits(l, false); };
    const auto starts = worst_indices(values, opt.refine_starts);
    const auto refined = parallel_map<std::pair<Vec, double>>(starts.size(), opt.threads, [&](std::size_t r) {
        return coordinate_descent(ps.lambdas[starts[r]], objective, admissible, opt.refine_steps);
    });
    for (const auto& [lambda, value] : refined) {
        if (value < min_value) {
            min_value = value;
            arg = lambda;
        }
    }
    const SpeedJet jet = gamma.jet(arg, 2);
    Witness w{"epsilon", arg, as_diag(arg), min_form_over_unit_s(jet, arg, epsilon * jet.value).s_rot, min_value};
    return {min_value, w};
}

}  // namespace

EpsilonResult find_epsilon(const SpeedFunction& gamma, const ConeSampler& sampler, double kappa, double c,
                           const AnalysisOptions& opt) {
    if (!(kappa > 0.0)) throw RangeError("find_epsilon requires κ > 0");
    if (!(c >= 1.0)) throw RangeError("find_epsilon requires C ≥ 1");
    EpsilonResult out;
    const double theta = 0.25 / (c * c);
    out.analytic = 0.5 * std::min(kappa * theta * theta / c, theta);

    const PertSearch ps = prepare_pert_samples(gamma, sampler, opt.threads);
    bool found = false;
    for (int j = 0; j <= 60 && !found; ++j) {
        const double epsilon = std::ldexp(1.0, -j);
        const auto [value, witness] = pert_minimum(gamma, sampler, ps, epsilon, opt);
        if (value >= kFormFloor) {
            found = true;
            out.empirical = epsilon;
            out.empirical_hit_grid_max = (j == 0);
        }
    }
    if (!found) throw NoEpsilonFound(gamma.key() + ": no ε ≥ 2⁻⁶⁰ keeps the perturbed form nonnegative");

    if (out.analytic <= out.empirical) {
        out.epsilon = out.analytic;
        out.chosen = "analytic";
    } else {
        out.epsilon = out.empirical;
        out.chosen = "empirical";
    }
    std::tie(out.min_form, out.witness) = pert_minimum(gamma, sampler, ps, out.epsilon, opt);
    return out;
}

PertValidation validate_epsilon(const SpeedFunction& gamma, const ConeSampler& sampler, double epsilon,
                                const AnalysisOptions& opt) {
    const int n = gamma.n();
    const PertSearch ps = prepare_pert_samples(gamma, sampler, opt.threads);
    // random (A, S) pairs through the full matrix route
    const auto values = parallel_map<double>(ps.lambdas.size(), opt.threads, [&](std::size_t i) {
        std::mt19937_64 rng = stream_for(sampler.seed() ^ 0x9e3779b97f4a7c15ULL, i);
        const Mat q = random_orthogonal(n, rng);
        const SymMatrix a = SymMatrix::diagonal(ps.lambdas[i]).conjugate(q);
        const SymMatrix s = random_unit_symmetric(n, rng);
        return pert_ic_form(gamma, a, s, epsilon);
    });
    PertValidation out;
    for (const Vec& l : ps.lambdas)
        if (l.minCoeff() == 0.0) ++out.rank_deficient;
    const std::size_t best = argmin(values);
    auto [exact_min, witness] = pert_minimum(gamma, sampler, ps, epsilon, opt);
    if (values[best] < exact_min) {
        out.min_form = values[best];
        out.witness = Witness{"epsilon_validation_sample", ps.lambdas[best], as_diag(ps.lambdas[best]), Mat(),
                              values[best]};
    } else {
        out.min_form = exact_min;
        out.witness = witness;
        out.witness.label = "epsilon_validation";
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j);
        for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace

FacetSumReport check_lemma24(const std::vector<Vec>& family, int k) {
    FacetSumReport r;
    r.k = k;
    constexpr double tol = 1e-10;
    for (const Vec& v : family) {
        const EigenvalueVector ev(v);
        const int n = ev.n();
        if (k < 1 || k > n) throw RangeError("check_lemma24: k outside [1, n]");
        const double delta = dist_to_facet(ev, FacetIndex(n - k, n));
        const double rho_hat = ev.values().head(k).sum() / ev.values().sum();
        r.delta.push_back(delta);
        r.rho_hat.push_back(rho_hat);
        // one strictly positive beyond tol while the other vanishes
        if ((delta > tol && !(rho_hat > 0.0)) || (rho_hat > tol && !(delta > 0.0))) ++r.sign_disagreements;
    }
    if (!family.empty()) {
        r.min_delta = *std::min_element(r.delta.begin(), r.delta.end());
        r.min_rho_hat = *std::min_element(r.rho_hat.begin(), r.rho_hat.end());
        r.rank_correlation = pearson(ranks(r.delta), ranks(r.rho_hat));
    }
    return r;
}

std::vector<Vec> facet_approach_family(int n, int k, int steps) {
    std::vector<Vec> out;
    for (int j = 0; j <= steps; ++j) {
        const double t = std::ldexp(1.0, -j);
        Vec v = Vec::Ones(n);
        v.head(k).setConstant(t);
        out.push_back(v / v.norm());
    }
    return out;
}

// ---------------------------------------------------------------------------

Certificate certify_speed(const SpeedFunction& gamma, const ConeSampler& sampler, const AnalysisOptions& opt) {
    if (sampler.n() != gamma.n()) throw RangeError("sampler dimension does not match the speed");
    Certificate cert;
    cert.speed = gamma.key();
    cert.n = gamma.n();
    cert.k = sampler.k();
    cert.rho = sampler.rho();
    cert.seed = sampler.seed();
    cert.samples = sampler.count();

    const MicResult mic = estimate_mIC(gamma, sampler.count(), sampler.seed(), opt);
    cert.m_star = mic.m_star;
    cert.m_ic = mic.m_ic;

    const EllipticityResult ell = certify_ellipticity(gamma, sampler, opt);
    cert.c = ell.c;
    cert.witnesses.push_back(ell.witness);

    const KappaResult kap = estimate_kappa(gamma, sampler, opt);
    cert.kappa = kap.kappa;
    cert.witnesses.push_back(kap.witness);

    const EpsilonResult eps = find_epsilon(gamma, sampler, cert.kappa, cert.c, opt);
    cert.epsilon = eps.epsilon;
    cert.epsilon_source = eps.chosen;
    cert.epsilon_analytic = eps.analytic;
    cert.epsilon_empirical = eps.empirical;
    cert.witnesses.push_back(eps.witness);

    const int k_sum = cert.n - cert.m_ic + 1;
    const auto lambdas = parallel_map<Vec>(static_cast<std::size_t>(sampler.count()), opt.threads,
                                           [&](std::size_t i) { return sampler.positive_sample(i); });
    const FacetSumReport facet_sum = check_lemma24(lambdas, k_sum);
    cert.delta = facet_sum.min_delta;

    const std::size_t floor_samples = std::min<std::size_t>(lambdas.size(), 1000);
    const auto floors = parallel_map<double>(floor_samples, opt.threads, [&](std::size_t i) {
        return dist_to_cone_boundary(gamma.cone(), lambdas[i]);
    });
    cert.boundary_floor = *std::min_element(floors.begin(), floors.end());
    return cert;
}

nlohmann::json to_json(const Witness& w) {
    auto matrix = [](const Mat& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(row);
        }
        return rows;
    };
    nlohmann::json lambda = nlohmann::json::array();
    for (Eigen::Index i = 0; i < w.lambda.size(); ++i) lambda.push_back(w.lambda(i));
    return {{"label", w.label}, {"lambda", lambda}, {"A", matrix(w.a)}, {"S", matrix(w.s)}, {"value", w.value}};
}

nlohmann::json to_json(const Certificate& c) {
    nlohmann::json witnesses = nlohmann::json::array();
    for (const auto& w : c.witnesses) witnesses.push_back(to_json(w));
    return {{"speed", c.speed},
            {"n", c.n},
            {"k", c.k},
            {"rho", c.rho},
            {"seed", c.seed},
            {"N", c.samples},
            {"C", c.c},
            {"kappa", c.kappa},
            {"epsilon", c.epsilon},
            {"epsilon_source", c.epsilon_source},
            {"epsilon_analytic", c.epsilon_analytic},
            {"epsilon_empirical", c.epsilon_empirical},
            {"delta", c.delta},
            {"boundary_floor", c.boundary_floor},
            {"m_star", c.m_star},
            {"m_IC", c.m_ic},
            {"statistical", c.statistical},
            {"witnesses", witnesses}};
}

}  // namespace hlab
