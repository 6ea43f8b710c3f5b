#include "cadv/kl_lab.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

namespace cadv {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr double kRefineTolerance = 1e-4;
constexpr std::size_t kMaxGridPoints = std::size_t{1} << 24;

void require_normalized(const DistanceDistribution& d, const char* what) {
    if (!is_normalized(d)) {
        throw ContractViolation(std::string(what) +
                                ": distance density must be normalized; only the victim's "
                                "normalizer cancels in the KL difference");
    }
}

// Per-axis [lo, hi] that holds all but ~1e-15 of the distribution's mass.
std::pair<double, double> support(const DistanceDistribution& d, std::size_t axis) {
    return std::visit(
        overloaded{[&](const IsotropicGaussian& g) {
                       const double r = 10.0 * std::sqrt(g.variance);
                       return std::pair{g.mean[axis] - r, g.mean[axis] + r};
                   },
                   [&](const LaplaceDist& l) {
                       const double r = 40.0 * l.scale;
                       return std::pair{l.center[axis] - r, l.center[axis] + r};
                   },
                   [&](const KdeDist& k) {
                       double lo = std::numeric_limits<double>::infinity();
                       double hi = -lo;
                       for (const auto& c : k.centers) {
                           lo = std::min(lo, c[axis]);
                           hi = std::max(hi, c[axis]);
                       }
                       const double r = 10.0 * k.bandwidth;
                       return std::pair{lo - r, hi + r};
                   },
                   [](const GibbsDistance&) -> std::pair<double, double> {
                       throw ContractViolation("grid oracle: unnormalized density");
                   }},
        d);
}

// Value of fn summed over row r (axis 0 index r) times the cell volume.
double grid_row(const std::function<double(std::span<const double>)>& fn, const GridOracle& grid,
                std::size_t r) {
    const std::size_t d = grid.dim();
    const double h0 = (grid.upper[0] - grid.lower[0]) / static_cast<double>(grid.resolution[0]);
    double point[2] = {grid.lower[0] + (static_cast<double>(r) + 0.5) * h0, 0.0};
    if (d == 1) return fn(std::span<const double>(point, 1)) * h0;
    const double h1 = (grid.upper[1] - grid.lower[1]) / static_cast<double>(grid.resolution[1]);
    double s = 0.0;
    for (std::size_t c = 0; c < grid.resolution[1]; ++c) {
        point[1] = grid.lower[1] + (static_cast<double>(c) + 0.5) * h1;
        s += fn(std::span<const double>(point, 2));
    }
    return s * h0 * h1;
}

double sum_rows(std::span<const double> rows) {
    double s = 0.0;
    for (double v : rows) s += v;
    return s;
}

double kl_integrand(const DistanceDistribution& p, const DistanceDistribution& q,
                    std::span<const double> x) {
    const double lp = log_density(p, x);
    if (lp == -std::numeric_limits<double>::infinity()) return 0.0;
    const double w = std::exp(lp);
    if (w == 0.0) return 0.0;
    return w * (lp - log_density(q, x));
}

}  // namespace

double kl_gaussians_closed_form(const IsotropicGaussian& p, const IsotropicGaussian& q) {
    if (p.mean.size() != 1 || q.mean.size() != 1) throw InvalidInput("kl closed form: both Gaussians must be 1-D");
    validate(DistanceDistribution{p});
    validate(DistanceDistribution{q});
    const double dm = p.mean[0] - q.mean[0];
    return 0.5 * std::log(q.variance / p.variance) + (p.variance + dm * dm) / (2.0 * q.variance) - 0.5;
}

void GridOracle::validate() const {
    const std::size_t d = lower.size();
    if (d == 0 || d > 2) throw InvalidInput("grid oracle: dimension must be 1 or 2");
    if (upper.size() != d || resolution.size() != d) throw InvalidInput("grid oracle: inconsistent axis count");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(upper[i] > lower[i])) throw InvalidInput("grid oracle: upper must exceed lower");
        if (resolution[i] < 16) throw InvalidInput("grid oracle: resolution must be >= 16");
    }
}

GridOracle default_grid(const DistanceDistribution& p, const DistanceDistribution& q,
                        std::size_t resolution) {
    const std::size_t d = dim(p);
    if (dim(q) != d) throw InvalidInput("grid oracle: dimension mismatch");
    GridOracle g;
    for (std::size_t i = 0; i < d; ++i) {
        const auto [plo, phi] = support(p, i);
        const auto [qlo, qhi] = support(q, i);
        g.lower.push_back(std::min(plo, qlo));
        g.upper.push_back(std::max(phi, qhi));
        g.resolution.push_back(resolution);
    }
    g.validate();
    return g;
}

double grid_integrate_serial(const std::function<double(std::span<const double>)>& fn,
                             const GridOracle& grid) {
    grid.validate();
    std::vector<double> rows(grid.resolution[0]);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = grid_row(fn, grid, r);
    return sum_rows(rows);
}

double grid_integrate_parallel(const std::function<double(std::span<const double>)>& fn,
                               const GridOracle& grid) {
    grid.validate();
    std::vector<double> rows(grid.resolution[0]);
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        try {
            rows[static_cast<std::size_t>(r)] = grid_row(fn, grid, static_cast<std::size_t>(r));
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return sum_rows(rows);
}

double grid_kl_oracle(const DistanceDistribution& p, const DistanceDistribution& q,
                      const GridOracle& grid) {
    require_normalized(p, "grid_kl_oracle");
    require_normalized(q, "grid_kl_oracle");
    grid.validate();
    if (dim(p) != grid.dim() || dim(q) != grid.dim()) throw InvalidInput("grid oracle: dimension mismatch");

    // Convergence is only accepted once the grid also resolves p's mass; otherwise a
    // spike between grid points reads as a stable KL of zero.
    auto fn = [&](std::span<const double> x) { return kl_integrand(p, q, x); };
    auto mass = [&](std::span<const double> x) { return std::exp(log_density(p, x)); };
    GridOracle g = grid;
    double prev = grid_integrate_parallel(fn, g);
    for (;;) {
        std::size_t total = 1;
        for (auto& r : g.resolution) {
            r *= 2;
            total *= r;
        }
        if (total > kMaxGridPoints) {
            throw OracleFailure("grid_kl_oracle: no convergence to 1e-4 within the point budget");
        }
        const double next = grid_integrate_parallel(fn, g);
        if (std::abs(next - prev) < kRefineTolerance &&
            std::abs(grid_integrate_parallel(mass, g) - 1.0) < kRefineTolerance) {
            return next;
        }
        prev = next;
    }
}

double second_moment_about(const DistanceDistribution& p, double mu) {
    if (dim(p) != 1) throw InvalidInput("second_moment_about: 1-D distributions only");
    return std::visit(overloaded{[&](const IsotropicGaussian& g) {
                                     const double dm = g.mean[0] - mu;
                                     return g.variance + dm * dm;
                                 },
                                 [&](const LaplaceDist& l) {
                                     const double dm = l.center[0] - mu;
                                     return 2.0 * l.scale * l.scale + dm * dm;
                                 },
                                 [&](const KdeDist& k) {
                                     double s = 0.0;
                                     for (const auto& c : k.centers) s += (c[0] - mu) * (c[0] - mu);
                                     return k.bandwidth * k.bandwidth + s / static_cast<double>(k.centers.size());
                                 },
                                 [](const GibbsDistance&) -> double {
                                     throw ContractViolation("second_moment_about: unnormalized density");
                                 }},
                      p);
}

Theorem1Sweep theorem1_sweep(const DistanceDistribution& p, double mu,
                             std::span<const double> variances) {
    require_normalized(p, "theorem1_sweep");
    if (dim(p) != 1) throw InvalidInput("theorem1_sweep: 1-D distributions only");
    for (std::size_t i = 0; i < variances.size(); ++i) {
        if (!(variances[i] > 0.0)) throw InvalidInput("theorem1_sweep: variances must be positive");
        if (i > 0 && !(variances[i] > variances[i - 1])) throw InvalidInput("theorem1_sweep: grid must be increasing");
    }
    Theorem1Sweep out;
    out.threshold = second_moment_about(p, mu);
    const auto* gp = std::get_if<IsotropicGaussian>(&p);
    for (double s2 : variances) {
        const IsotropicGaussian q{{mu}, s2};
        Theorem1Point pt{s2, 0.0, 0.0};
        if (gp) {
            pt.kl = kl_gaussians_closed_form(*gp, q);
            pt.reverse_kl = kl_gaussians_closed_form(q, *gp);
        } else {
            const DistanceDistribution qd{q};
            const auto grid = default_grid(p, qd);
            pt.kl = grid_kl_oracle(p, qd, grid);
            pt.reverse_kl = grid_kl_oracle(qd, p, grid);
        }
        out.points.push_back(pt);
    }
    return out;
}

namespace {

void check_problem(const DeltaProblem& pr) {
    require_normalized(pr.d1, "estimate_delta");
    require_normalized(pr.d2, "estimate_delta");
    if (pr.share) require_normalized(*pr.share, "estimate_delta (p_share)");
    validate(pr.d1);
    validate(pr.d2);
    const std::size_t d = dim(pr.d1);
    if (dim(pr.d2) != d || pr.vic.dim() != d || (pr.share && dim(*pr.share) != d)) {
        throw InvalidInput("estimate_delta: dimension mismatch");
    }
}

DeltaTerm delta_term(const DeltaProblem& pr, std::size_t i, const RngStream& rng, bool crn) {
    const std::size_t d = dim(pr.d1);
    RngStream s1 = rng.derive(2 * i);
    const NoiseSeed e1 = draw_noise(s1, d);
    NoiseSeed e2;
    if (crn) {
        e2 = e1;
    } else {
        RngStream s2 = rng.derive(2 * i + 1);
        e2 = draw_noise(s2, d);
    }
    const StateVector x1 = reparam_sample(pr.d1, e1);
    const StateVector x2 = reparam_sample(pr.d2, e2);
    const double a1 = log_density(pr.d1, x1) + pr.vic.energy(x1);
    const double a2 = log_density(pr.d2, x2) + pr.vic.energy(x2);
    DeltaTerm t{a1 - a2, 0.0};
    if (pr.share) t.share_diff = log_density(*pr.share, x1) - log_density(*pr.share, x2);
    return t;
}

}  // namespace

std::vector<DeltaTerm> delta_terms_serial(const DeltaProblem& problem, std::size_t n,
                                          const RngStream& rng, bool crn) {
    check_problem(problem);
    std::vector<DeltaTerm> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = delta_term(problem, i, rng, crn);
    return terms;
}

std::vector<DeltaTerm> delta_terms_parallel(const DeltaProblem& problem, std::size_t n,
                                            const RngStream& rng, bool crn) {
    check_problem(problem);
    std::vector<DeltaTerm> terms(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            terms[static_cast<std::size_t>(i)] = delta_term(problem, static_cast<std::size_t>(i), rng, crn);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return terms;
}

DeltaEstimate summarize_terms(std::span<const DeltaTerm> terms, bool crn, bool corrected) {
    const std::size_t n = terms.size();
    if (n < 2) throw InvalidInput("estimate_delta: need at least two samples");
    auto value = [corrected](const DeltaTerm& t) { return corrected ? t.corrected() : t.raw; };
    double sum = 0.0;
    for (const auto& t : terms) sum += value(t);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& t : terms) {
        const double r = value(t) - mean;
        ss += r * r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return DeltaEstimate{mean, sd / std::sqrt(static_cast<double>(n)), n, crn, corrected};
}

DeltaEstimate estimate_delta(const DistanceDistribution& d1, const DistanceDistribution& d2,
                             const VictimDistribution& vic, std::size_t n, const RngStream& rng,
                             bool crn, const DistanceDistribution* share) {
    if (n < 2) throw InvalidInput("estimate_delta: need at least two samples");
    const DeltaProblem problem{d1, d2, vic, share};
    const auto terms = delta_terms_parallel(problem, n, rng, crn);
    return summarize_terms(terms, crn, share != nullptr);
}

}  // namespace cadv
