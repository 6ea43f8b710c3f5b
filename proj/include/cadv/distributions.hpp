#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cadv/numerics.hpp"

namespace cadv {

/// A concept: a non-empty set of same-dimension points in the box.
struct Concept {
    std::string id;
    std::vector<StateVector> members;

    std::size_t size() const { return members.size(); }
    std::size_t dim() const { return members.front().size(); }
    void validate() const;

    /// Singleton concept holding only member `index`.
    Concept single(std::size_t index = 0) const;
};

std::string concept_to_json(const Concept& c);
Concept concept_from_json(const std::string& text);

struct IsotropicGaussian {
    StateVector mean;
    double variance = 1.0;
};

/// Factorized Laplace with a shared per-coordinate scale b.
struct LaplaceDist {
    StateVector center;
    double scale = 1.0;
};

/// Equal-weight Gaussian kernel mixture: (1/K) Σ_k N(x; centers_k, h² I).
struct KdeDist {
    std::vector<StateVector> centers;
    double bandwidth = 0.1;
};

/// p ∝ exp(-weight · Σ_i |x_i - c_i|^exponent), known only up to its normalizer.
/// Usable as a Langevin distance term; rejected by the KL estimator.
struct GibbsDistance {
    StateVector center;
    double weight = 1.0;
    double exponent = 2.0;
};

using DistanceDistribution = std::variant<IsotropicGaussian, LaplaceDist, KdeDist, GibbsDistance>;

/// Common-noise seed ε: u selects a mixture component, z is a standard normal vector.
struct NoiseSeed {
    double u = 0.0;
    std::vector<double> z;
};

NoiseSeed draw_noise(RngStream& rng, std::size_t dim);

double gauss_logpdf(const IsotropicGaussian& dist, std::span<const double> x);
StateVector gauss_score(const IsotropicGaussian& dist, std::span<const double> x);
double laplace_logpdf(const LaplaceDist& dist, std::span<const double> x);
/// Subgradient 0 at kinks.
StateVector laplace_score(const LaplaceDist& dist, std::span<const double> x);
double kde_logpdf(const KdeDist& dist, std::span<const double> x);
StateVector kde_score(const KdeDist& dist, std::span<const double> x);

std::size_t dim(const DistanceDistribution& dist);
bool is_normalized(const DistanceDistribution& dist);
/// Normalized log-density, or the negative energy for GibbsDistance.
double log_density(const DistanceDistribution& dist, std::span<const double> x);
/// ∇_x log p.
StateVector score(const DistanceDistribution& dist, std::span<const double> x);
/// X = G(ε). Throws ContractViolation for GibbsDistance (no generator).
StateVector reparam_sample(const DistanceDistribution& dist, const NoiseSeed& eps);
void validate(const DistanceDistribution& dist);

struct BandwidthRule {
    enum class Kind { Fixed, Scott } kind = Kind::Scott;
    double fixed = 0.1;

    static BandwidthRule scott() { return {Kind::Scott, 0.0}; }
    static BandwidthRule fixed_at(double h) { return {Kind::Fixed, h}; }
};

inline constexpr double kBandwidthFloor = 1e-3;

/// Mean per-coordinate population standard deviation times K^(-1/(d+4)), floored at 1e-3.
double scott_bandwidth(const Concept& c);
KdeDist fit_concept_kde(const Concept& c, BandwidthRule rule);

/// x -> A x + b with A row-major d×d.
struct AffineMap {
    std::vector<double> matrix;
    StateVector offset;

    StateVector apply(std::span<const double> x) const;
};

Concept augment_concept(const Concept& c, std::size_t n, double jitter,
                        std::span<const AffineMap> transforms, RngStream& rng);

}  // namespace cadv
