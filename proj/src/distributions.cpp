#include "cadv/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

namespace cadv {

namespace {

// log erfc(a) for a >= 0, switching to the asymptotic series once erfc underflows.
double log_erfc(double a) {
    if (a < 25.0) return std::log(std::erfc(a));
    const double inv2 = 1.0 / (a * a);
    return -a * a - std::log(a * std::sqrt(std::numbers::pi)) + std::log1p(-0.5 * inv2 + 0.75 * inv2 * inv2);
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr double kLog2Pi = 1.8378770664093454836;

void check_dim(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw InvalidInput(std::string(what) + ": dimension mismatch (" + std::to_string(got) +
                           " vs " + std::to_string(expected) + ")");
    }
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Component log-densities log N(x; c_k, h² I).
std::vector<double> kde_component_logs(const KdeDist& dist, std::span<const double> x) {
    const double h2 = dist.bandwidth * dist.bandwidth;
    const double norm = -0.5 * static_cast<double>(x.size()) * (kLog2Pi + std::log(h2));
    std::vector<double> logs(dist.centers.size());
    for (std::size_t k = 0; k < dist.centers.size(); ++k) {
        check_dim(dist.centers[k].size(), x.size(), "kde");
        logs[k] = norm - squared_distance(x, dist.centers[k]) / (2.0 * h2);
    }
    return logs;
}

}  // namespace

void Concept::validate() const {
    if (members.empty()) throw InvalidInput("concept '" + id + "': no members");
    const std::size_t d = members.front().size();
    if (d == 0) throw InvalidInput("concept '" + id + "': zero dimension");
    for (const auto& m : members) {
        if (m.size() != d) throw InvalidInput("concept '" + id + "': member dimension mismatch");
        if (!in_box(m)) throw InvalidInput("concept '" + id + "': member outside [0,1]^d");
    }
}

Concept Concept::single(std::size_t index) const {
    if (index >= members.size()) throw InvalidInput("concept: member index out of range");
    return Concept{id, {members[index]}};
}

std::string concept_to_json(const Concept& c) {
    c.validate();
    nlohmann::json j;
    j["format"] = "cadv-concept";
    j["version"] = 1;
    j["id"] = c.id;
    j["dimension"] = c.dim();
    j["members"] = c.members;
    return j.dump(2) + "\n";
}

Concept concept_from_json(const std::string& text) {
    Concept c;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.value("format", "") != "cadv-concept") throw InvalidInput("concept json: wrong format tag");
        c.id = j.at("id").get<std::string>();
        c.members = j.at("members").get<std::vector<StateVector>>();
        const auto d = j.at("dimension").get<std::size_t>();
        c.validate();
        if (c.dim() != d) throw InvalidInput("concept json: dimension field disagrees with members");
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("concept json: ") + e.what());
    }
    return c;
}

NoiseSeed draw_noise(RngStream& rng, std::size_t dim) {
    NoiseSeed eps;
    eps.u = rng.uniform();
    eps.z.resize(dim);
    for (double& z : eps.z) z = rng.normal();
    return eps;
}

double gauss_logpdf(const IsotropicGaussian& dist, std::span<const double> x) {
    check_dim(dist.mean.size(), x.size(), "gauss_logpdf");
    const double d = static_cast<double>(x.size());
    return -0.5 * d * (kLog2Pi + std::log(dist.variance)) -
           squared_distance(x, dist.mean) / (2.0 * dist.variance);
}

StateVector gauss_score(const IsotropicGaussian& dist, std::span<const double> x) {
    check_dim(dist.mean.size(), x.size(), "gauss_score");
    StateVector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -(x[i] - dist.mean[i]) / dist.variance;
    return g;
}

double laplace_logpdf(const LaplaceDist& dist, std::span<const double> x) {
    check_dim(dist.center.size(), x.size(), "laplace_logpdf");
    const double b = dist.scale;
    double s = -static_cast<double>(x.size()) * std::log(2.0 * b);
    for (std::size_t i = 0; i < x.size(); ++i) s -= std::abs(x[i] - dist.center[i]) / b;
    return s;
}

StateVector laplace_score(const LaplaceDist& dist, std::span<const double> x) {
    check_dim(dist.center.size(), x.size(), "laplace_score");
    StateVector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -sign(x[i] - dist.center[i]) / dist.scale;
    return g;
}

double kde_logpdf(const KdeDist& dist, std::span<const double> x) {
    const auto logs = kde_component_logs(dist, x);
    return log_sum_exp(logs) - std::log(static_cast<double>(dist.centers.size()));
}

StateVector kde_score(const KdeDist& dist, std::span<const double> x) {
    const auto w = softmax(kde_component_logs(dist, x));
    const double h2 = dist.bandwidth * dist.bandwidth;
    StateVector g(x.size(), 0.0);
    for (std::size_t k = 0; k < dist.centers.size(); ++k) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += w[k] * (dist.centers[k][i] - x[i]);
    }
    for (double& v : g) v /= h2;
    return g;
}

std::size_t dim(const DistanceDistribution& dist) {
    return std::visit(overloaded{[](const IsotropicGaussian& d) { return d.mean.size(); },
                                 [](const LaplaceDist& d) { return d.center.size(); },
                                 [](const KdeDist& d) { return d.centers.front().size(); },
                                 [](const GibbsDistance& d) { return d.center.size(); }},
                      dist);
}

bool is_normalized(const DistanceDistribution& dist) {
    return !std::holds_alternative<GibbsDistance>(dist);
}

void validate(const DistanceDistribution& dist) {
    std::visit(overloaded{[](const IsotropicGaussian& d) {
                              if (d.mean.empty()) throw InvalidInput("gaussian: empty mean");
                              if (!(d.variance > 0.0)) throw InvalidInput("gaussian: variance must be positive");
                          },
                          [](const LaplaceDist& d) {
                              if (d.center.empty()) throw InvalidInput("laplace: empty center");
                              if (!(d.scale > 0.0)) throw InvalidInput("laplace: scale must be positive");
                          },
                          [](const KdeDist& d) {
                              if (d.centers.empty()) throw InvalidInput("kde: no centers");
                              if (!(d.bandwidth > 0.0)) throw InvalidInput("kde: bandwidth must be positive");
                              for (const auto& c : d.centers) check_dim(d.centers.front().size(), c.size(), "kde");
                          },
                          [](const GibbsDistance& d) {
                              if (d.center.empty()) throw InvalidInput("gibbs distance: empty center");
                              if (!(d.weight > 0.0) || !(d.exponent >= 1.0)) {
                                  throw InvalidInput("gibbs distance: need weight > 0 and exponent >= 1");
                              }
                          }},
               dist);
}

double log_density(const DistanceDistribution& dist, std::span<const double> x) {
    return std::visit(overloaded{[&](const IsotropicGaussian& d) { return gauss_logpdf(d, x); },
                                 [&](const LaplaceDist& d) { return laplace_logpdf(d, x); },
                                 [&](const KdeDist& d) { return kde_logpdf(d, x); },
                                 [&](const GibbsDistance& d) {
                                     check_dim(d.center.size(), x.size(), "gibbs distance");
                                     double e = 0.0;
                                     for (std::size_t i = 0; i < x.size(); ++i) {
                                         e += std::pow(std::abs(x[i] - d.center[i]), d.exponent);
                                     }
                                     return -d.weight * e;
                                 }},
                      dist);
}

StateVector score(const DistanceDistribution& dist, std::span<const double> x) {
    return std::visit(overloaded{[&](const IsotropicGaussian& d) { return gauss_score(d, x); },
                                 [&](const LaplaceDist& d) { return laplace_score(d, x); },
                                 [&](const KdeDist& d) { return kde_score(d, x); },
                                 [&](const GibbsDistance& d) {
                                     check_dim(d.center.size(), x.size(), "gibbs distance");
                                     StateVector g(x.size());
                                     for (std::size_t i = 0; i < x.size(); ++i) {
                                         const double r = x[i] - d.center[i];
                                         g[i] = -d.weight * d.exponent * sign(r) *
                                                std::pow(std::abs(r), d.exponent - 1.0);
                                     }
                                     return g;
                                 }},
                      dist);
}

StateVector reparam_sample(const DistanceDistribution& dist, const NoiseSeed& eps) {
    check_dim(dim(dist), eps.z.size(), "reparam_sample");
    return std::visit(
        overloaded{[&](const IsotropicGaussian& d) {
                       const double s = std::sqrt(d.variance);
                       StateVector x(d.mean);
                       for (std::size_t i = 0; i < x.size(); ++i) x[i] += s * eps.z[i];
                       return x;
                   },
                   [&](const LaplaceDist& d) {
                       // Per-coordinate uniform u' = Phi(z_i) pushed through the Laplace
                       // inverse CDF; written via the tail mass so |z| > 8 stays finite.
                       StateVector x(d.center);
                       for (std::size_t i = 0; i < x.size(); ++i) {
                           const double z = eps.z[i];
                           x[i] += d.scale * sign(z) * -log_erfc(std::abs(z) / std::numbers::sqrt2);
                       }
                       return x;
                   },
                   [&](const KdeDist& d) {
                       const std::size_t k = std::min(
                           d.centers.size() - 1,
                           static_cast<std::size_t>(eps.u * static_cast<double>(d.centers.size())));
                       StateVector x(d.centers[k]);
                       for (std::size_t i = 0; i < x.size(); ++i) x[i] += d.bandwidth * eps.z[i];
                       return x;
                   },
                   [](const GibbsDistance&) -> StateVector {
                       throw ContractViolation("reparam_sample: unnormalized distance has no generator");
                   }},
        dist);
}

double scott_bandwidth(const Concept& c) {
    c.validate();
    const std::size_t k = c.size();
    const std::size_t d = c.dim();
    double mean_sd = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double mu = 0.0;
        for (const auto& m : c.members) mu += m[i];
        mu /= static_cast<double>(k);
        double var = 0.0;
        for (const auto& m : c.members) var += (m[i] - mu) * (m[i] - mu);
        mean_sd += std::sqrt(var / static_cast<double>(k));
    }
    mean_sd /= static_cast<double>(d);
    const double h = mean_sd * std::pow(static_cast<double>(k), -1.0 / (static_cast<double>(d) + 4.0));
    return std::max(h, kBandwidthFloor);
}

KdeDist fit_concept_kde(const Concept& c, BandwidthRule rule) {
    c.validate();
    KdeDist kde{c.members, 0.0};
    if (rule.kind == BandwidthRule::Kind::Fixed) {
        if (!(rule.fixed > 0.0)) throw InvalidInput("fit_concept_kde: fixed bandwidth must be positive");
        kde.bandwidth = rule.fixed;
    } else {
        kde.bandwidth = scott_bandwidth(c);
    }
    return kde;
}

StateVector AffineMap::apply(std::span<const double> x) const {
    const std::size_t d = x.size();
    if (matrix.size() != d * d || offset.size() != d) throw InvalidInput("affine map: shape mismatch");
    StateVector y(offset);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) y[r] += matrix[r * d + c] * x[c];
    }
    return y;
}

Concept augment_concept(const Concept& c, std::size_t n, double jitter,
                        std::span<const AffineMap> transforms, RngStream& rng) {
    c.validate();
    if (!(jitter >= 0.0)) throw InvalidInput("augment_concept: jitter must be non-negative");
    Concept out = c;
    const std::size_t k = c.size();
    out.members.reserve(k + n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto pick = std::min(k - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(k)));
        StateVector x = c.members[pick];
        if (!transforms.empty()) {
            const auto t = std::min(transforms.size() - 1,
                                    static_cast<std::size_t>(rng.uniform() * static_cast<double>(transforms.size())));
            x = transforms[t].apply(x);
        }
        for (double& v : x) v += jitter * rng.normal();
        project_box_inplace(x);
        out.members.push_back(std::move(x));
    }
    return out;
}

}  // namespace cadv
