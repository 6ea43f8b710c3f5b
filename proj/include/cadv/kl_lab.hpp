#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cadv/distributions.hpp"
#include "cadv/victim.hpp"

namespace cadv {

/// KL(p || q) for 1-D Gaussians.
double kl_gaussians_closed_form(const IsotropicGaussian& p, const IsotropicGaussian& q);

/// Midpoint-rule integration box for d <= 2.
struct GridOracle {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<std::size_t> resolution;

    void validate() const;
    std::size_t dim() const { return lower.size(); }
};

/// Box wide enough that p and q both keep mass outside below ~1e-15.
GridOracle default_grid(const DistanceDistribution& p, const DistanceDistribution& q,
                        std::size_t resolution = 256);

/// Midpoint sum of fn over the grid at the given per-axis resolution.
/// Rows are summed independently and reduced in row order, so both kernels
/// return identical bits for any thread count.
double grid_integrate_serial(const std::function<double(std::span<const double>)>& fn,
                             const GridOracle& grid);
double grid_integrate_parallel(const std::function<double(std::span<const double>)>& fn,
                               const GridOracle& grid);

/// ∫ p log(p/q), refining (doubling resolution) until two successive
/// resolutions differ by < 1e-4. Throws OracleFailure if that never happens.
double grid_kl_oracle(const DistanceDistribution& p, const DistanceDistribution& q,
                      const GridOracle& grid);

/// E_{X~p}[(X - mu)^2] for a 1-D distribution.
double second_moment_about(const DistanceDistribution& p, double mu);

struct Theorem1Point {
    double variance;
    double kl;          // KL(p || N(mu, variance))
    double reverse_kl;  // KL(N(mu, variance) || p)
};

struct Theorem1Sweep {
    std::vector<Theorem1Point> points;
    /// E_{X~p}[(X - mu)^2]; KL(p || q) decreases in the variance below it.
    double threshold;
};

/// KL in both directions against N(mu, s²) for each s² of an increasing grid.
/// Closed form when p is Gaussian, grid oracle otherwise.
Theorem1Sweep theorem1_sweep(const DistanceDistribution& p, double mu,
                             std::span<const double> variances);

struct DeltaEstimate {
    double value = 0.0;
    double std_err = 0.0;
    std::size_t n = 0;
    bool crn = false;
    bool corrected = false;

    double ci_low() const { return value - 1.96 * std_err; }
    double ci_high() const { return value + 1.96 * std_err; }
    bool covers(double truth) const { return ci_low() <= truth && truth <= ci_high(); }
    bool excludes_zero() const { return ci_high() < 0.0 || ci_low() > 0.0; }
};

/// One Monte-Carlo draw of the KL difference.
struct DeltaTerm {
    /// [log d1(X1) + c f(X1)] - [log d2(X2) + c f(X2)]
    double raw;
    /// log p_share(X1) - log p_share(X2); zero when no p_share is given.
    double share_diff;

    double corrected() const { return raw - share_diff; }
};

struct DeltaProblem {
    const DistanceDistribution& d1;
    const DistanceDistribution& d2;
    const VictimDistribution& vic;
    const DistanceDistribution* share = nullptr;
};

/// Per-ε terms. Draw i uses noise from stream derive(2i) (and derive(2i+1)
/// for the second generator when crn is off), so results do not depend on
/// how draws are split across threads.
std::vector<DeltaTerm> delta_terms_serial(const DeltaProblem& problem, std::size_t n,
                                          const RngStream& rng, bool crn);
std::vector<DeltaTerm> delta_terms_parallel(const DeltaProblem& problem, std::size_t n,
                                            const RngStream& rng, bool crn);

/// Mean and standard error of a fixed-order sum.
DeltaEstimate summarize_terms(std::span<const DeltaTerm> terms, bool crn, bool corrected);

/// Monte-Carlo estimate of KL(d1 || p_vic) - KL(d2 || p_vic). Throws
/// ContractViolation if any supplied distance density is unnormalized.
DeltaEstimate estimate_delta(const DistanceDistribution& d1, const DistanceDistribution& d2,
                             const VictimDistribution& vic, std::size_t n, const RngStream& rng,
                             bool crn, const DistanceDistribution* share = nullptr);

}  // namespace cadv
