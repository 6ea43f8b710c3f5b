#include "doctest.h"

#include <cmath>
#include <functional>

#include "cadv/distributions.hpp"

using namespace cadv;

namespace {

const double kLn2Pi = std::log(2.0 * M_PI);

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// Plain midpoint rule over a d <= 2 box.
double midpoint(const std::function<double(const StateVector&)>& f, const StateVector& lo, const StateVector& hi,
                int n) {
    const double hx = (hi[0] - lo[0]) / n;
    if (lo.size() == 1) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += f({lo[0] + (i + 0.5) * hx});
        return s * hx;
    }
    const double hy = (hi[1] - lo[1]) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) s += f({lo[0] + (i + 0.5) * hx, lo[1] + (j + 0.5) * hy});
    }
    return s * hx * hy;
}

StateVector central_diff(const DistanceDistribution& d, const StateVector& x, double h) {
    StateVector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        StateVector hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (log_density(d, hi) - log_density(d, lo)) / (2 * h);
    }
    return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("gaussian logpdf and score") {
    const IsotropicGaussian g1{{0.0}, 1.0};
    CHECK(gauss_logpdf(g1, std::vector<double>{0.0}) == doctest::Approx(-0.918938533204673).epsilon(1e-14));
    const IsotropicGaussian g2{{0.0, 0.0}, 1.0};
    CHECK(gauss_logpdf(g2, std::vector<double>{0.0, 0.0}) == doctest::Approx(-1.837877066409345).epsilon(1e-14));
    const IsotropicGaussian g{{0.3, 0.6}, 0.2};
    CHECK(gauss_logpdf(g, std::vector<double>{0.5, 0.4}) ==
          doctest::Approx(gauss_logpdf(g, std::vector<double>{0.1, 0.8})).epsilon(1e-14));
    CHECK(gauss_score(g, g.mean) == StateVector{0.0, 0.0});
    CHECK(gauss_score(IsotropicGaussian{{0.0}, 2.0}, std::vector<double>{1.0})[0] == -0.5);
}

TEST_CASE("laplace logpdf and score") {
    const LaplaceDist l1{{0.4}, 1.0};
    CHECK(laplace_logpdf(l1, std::vector<double>{0.4}) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(laplace_logpdf(l1, std::vector<double>{0.7}) == doctest::Approx(laplace_logpdf(l1, std::vector<double>{0.1})));
    const LaplaceDist l2{{0.2, 0.2}, 0.5};
    CHECK(laplace_logpdf(l2, std::vector<double>{0.7, 0.2}) == doctest::Approx(-1.0).epsilon(1e-14));
    const LaplaceDist lu{{0.5, 0.5}, 1.0};
    CHECK(laplace_score(lu, lu.center) == StateVector{0.0, 0.0});
    CHECK(laplace_score(lu, std::vector<double>{0.8, 0.3}) == StateVector{-1.0, 1.0});
    CHECK(laplace_score(LaplaceDist{{0.5, 0.5}, 0.25}, std::vector<double>{0.8, 0.3}) == StateVector{-4.0, 4.0});
}

TEST_CASE("kde logpdf and score") {
    const KdeDist one{{{0.2, 0.7}}, 0.1};
    const IsotropicGaussian same{{0.2, 0.7}, 0.01};
    const StateVector x{0.35, 0.5};
    CHECK(kde_logpdf(one, x) == doctest::Approx(gauss_logpdf(same, x)).epsilon(1e-14));
    const auto s1 = kde_score(one, x);
    const auto s2 = gauss_score(same, x);
    CHECK(s1[0] == doctest::Approx(s2[0]));
    CHECK(s1[1] == doctest::Approx(s2[1]));

    const KdeDist sym{{{-0.3}, {0.3}}, 0.2};
    CHECK(kde_logpdf(sym, std::vector<double>{0.0}) ==
          doctest::Approx(gauss_logpdf(IsotropicGaussian{{0.3}, 0.04}, std::vector<double>{0.0})).epsilon(1e-14));
    CHECK(std::abs(kde_score(sym, std::vector<double>{0.0})[0]) < 1e-15);

    const KdeDist two{{{0.0}, {1.0}}, 1.0};
    const double expected = std::log((phi(0.0) + phi(1.0)) / 2.0);
    CHECK(kde_logpdf(two, std::vector<double>{0.0}) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(std::abs(expected - -1.138011) < 1e-5);
}

TEST_CASE("kde with coincident centers equals the gaussian") {
    const KdeDist k{{{0.4, 0.6}, {0.4, 0.6}, {0.4, 0.6}}, 0.3};
    const IsotropicGaussian g{{0.4, 0.6}, 0.09};
    RngStream rng(1, 0);
    for (int t = 0; t < 200; ++t) {
        const StateVector x{2 * rng.normal(), 2 * rng.normal()};
        CHECK(std::abs(kde_logpdf(k, x) - gauss_logpdf(g, x)) < 1e-12);
    }
}

TEST_CASE("densities are normalized") {
    auto integral = [](const DistanceDistribution& d, const StateVector& lo, const StateVector& hi) {
        return midpoint([&](const StateVector& x) { return std::exp(log_density(d, x)); }, lo, hi, 800);
    };
    CHECK(integral(IsotropicGaussian{{0.3}, 0.04}, {0.3 - 1.6}, {0.3 + 1.6}) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(integral(IsotropicGaussian{{0.3, 0.5}, 0.04}, {-1.3, -1.1}, {1.9, 2.1}) == doctest::Approx(1.0).epsilon(1e-4));
    auto fine = [](const DistanceDistribution& d, const StateVector& lo, const StateVector& hi, int n) {
        return midpoint([&](const StateVector& x) { return std::exp(log_density(d, x)); }, lo, hi, n);
    };
    CHECK(fine(LaplaceDist{{0.5}, 0.1}, {-1.5}, {2.5}, 4000) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(fine(LaplaceDist{{0.5, 0.4}, 0.1}, {-1.5, -1.6}, {2.5, 2.4}, 2000) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(integral(KdeDist{{{0.2}, {0.9}}, 0.1}, {-0.8}, {1.9}) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(integral(KdeDist{{{0.2, 0.3}, {0.9, 0.6}, {0.5, 0.5}}, 0.1}, {-0.8, -0.7}, {1.9, 1.6}) ==
          doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("scores match central differences") {
    RngStream rng(2, 0);
    int probes = 0;
    for (int t = 0; t < 120; ++t) {
        const std::size_t d = 1 + static_cast<std::size_t>(t % 3);
        StateVector mu(d), x(d);
        for (double& v : mu) v = rng.uniform();
        for (double& v : x) v = rng.uniform();
        std::vector<StateVector> centers(4, StateVector(d));
        for (auto& c : centers) {
            for (double& v : c) v = rng.uniform();
        }
        const std::vector<DistanceDistribution> dists{IsotropicGaussian{mu, 0.05 + rng.uniform()},
                                                      LaplaceDist{mu, 0.1 + rng.uniform()},
                                                      KdeDist{centers, 0.1 + 0.3 * rng.uniform()}};
        for (const auto& dist : dists) {
            const auto s = score(dist, x);
            const auto fd = central_diff(dist, x, 1e-6);
            for (std::size_t i = 0; i < d; ++i) CHECK(rel_err(s[i], fd[i]) < 1e-5);
        }
        ++probes;
    }
    CHECK(probes >= 100);
}

TEST_CASE("reparameterized samplers") {
    const IsotropicGaussian g{{0.2, 0.8}, 0.09};
    CHECK(reparam_sample(g, NoiseSeed{0.3, {0.0, 0.0}}) == g.mean);
    CHECK(reparam_sample(g, NoiseSeed{0.3, {1.0, -2.0}}) == StateVector{0.2 + 0.3, 0.8 - 0.6});

    const KdeDist k{{{0.1}, {0.9}}, 0.05};
    CHECK(reparam_sample(k, NoiseSeed{0.7, {0.0}}) == StateVector{0.9});
    CHECK(reparam_sample(k, NoiseSeed{0.49, {0.0}}) == StateVector{0.1});

    const KdeDist wide{{{0.1}, {0.9}}, 0.2};
    const NoiseSeed eps{0.7, {1.5}};
    const double a = reparam_sample(k, eps)[0];
    const double b = reparam_sample(wide, eps)[0];
    CHECK(a - 0.9 == doctest::Approx(0.05 * 1.5));
    CHECK(b - 0.9 == doctest::Approx(0.2 * 1.5));

    // Laplace through the inverse CDF of u' = Phi(z).
    const LaplaceDist l{{0.5}, 0.2};
    for (double z : {-3.0, -0.4, 0.0, 0.7, 2.5}) {
        const double u = 0.5 * std::erfc(-z / std::sqrt(2.0));
        const double sgn = (0.5 - u) > 0 ? 1.0 : ((0.5 - u) < 0 ? -1.0 : 0.0);
        const double expected = 0.5 + 0.2 * sgn * std::log(1.0 - 2.0 * std::abs(u - 0.5));
        CHECK(reparam_sample(l, NoiseSeed{0.1, {z}})[0] == doctest::Approx(expected).epsilon(1e-12));
    }
    // Deep tail stays finite.
    CHECK(std::isfinite(reparam_sample(l, NoiseSeed{0.1, {-40.0}})[0]));
    CHECK(reparam_sample(l, NoiseSeed{0.1, {-40.0}})[0] < reparam_sample(l, NoiseSeed{0.1, {-30.0}})[0]);
    const double below = reparam_sample(l, NoiseSeed{0.1, {25.0 * std::sqrt(2.0) - 1e-9}})[0];
    const double above = reparam_sample(l, NoiseSeed{0.1, {25.0 * std::sqrt(2.0) + 1e-9}})[0];
    CHECK(std::abs(above - below) < 3e-8);  // slope b·z ≈ 7 over a 2e-9 step

    CHECK_THROWS_AS(reparam_sample(GibbsDistance{{0.5}, 1.0, 2.0}, NoiseSeed{0.1, {0.0}}), ContractViolation);
    CHECK_THROWS_AS(reparam_sample(g, NoiseSeed{0.1, {0.0}}), InvalidInput);
}

TEST_CASE("reparameterized sample moments") {
    RngStream rng(3, 0);
    const IsotropicGaussian g{{0.2, 0.8}, 0.09};
    const int n = 100'000;
    StateVector mean(2, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto x = reparam_sample(g, draw_noise(rng, 2));
        mean[0] += x[0];
        mean[1] += x[1];
    }
    const double se = 0.3 / std::sqrt(n);
    CHECK(std::abs(mean[0] / n - 0.2) < 4 * se);
    CHECK(std::abs(mean[1] / n - 0.8) < 4 * se);

    const LaplaceDist l{{0.5}, 0.2};
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = reparam_sample(l, draw_noise(rng, 1))[0] - 0.5;
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 4 * std::sqrt(2 * 0.04 / n));
    CHECK(s2 / n == doctest::Approx(2 * 0.04).epsilon(0.03));
}

TEST_CASE("bandwidth rules") {
    const Concept single{"one", {{0.3, 0.3}}};
    CHECK(scott_bandwidth(single) == kBandwidthFloor);
    CHECK(fit_concept_kde(single, BandwidthRule::scott()).bandwidth == kBandwidthFloor);
    const Concept pair{"pair", {{0.0}, {1.0}}};
    CHECK(fit_concept_kde(pair, BandwidthRule::fixed_at(0.1)).bandwidth == 0.1);
    CHECK(scott_bandwidth(pair) == doctest::Approx(0.5 * std::pow(2.0, -0.2)).epsilon(1e-14));
    CHECK(scott_bandwidth(pair) == doctest::Approx(0.43528).epsilon(1e-5));
    CHECK(fit_concept_kde(pair, BandwidthRule::scott()).centers == pair.members);
}

TEST_CASE("concept augmentation") {
    const Concept base{"c", {{0.5, 0.5}, {0.2, 0.9}}};
    RngStream rng(4, 0);
    CHECK(augment_concept(base, 0, 0.05, {}, rng).members == base.members);

    const auto copies = augment_concept(base, 50, 0.0, {}, rng);
    CHECK(copies.size() == 52);
    for (std::size_t i = 0; i < copies.size(); ++i) {
        CHECK((copies.members[i] == base.members[0] || copies.members[i] == base.members[1]));
    }

    const Concept single{"s", {{0.5, 0.5}}};
    const auto grown = augment_concept(single, 100, 0.05, {}, rng);
    for (std::size_t d = 0; d < 2; ++d) {
        double m = 0, v = 0;
        for (const auto& x : grown.members) m += x[d];
        m /= static_cast<double>(grown.size());
        for (const auto& x : grown.members) v += (x[d] - m) * (x[d] - m);
        const double sd = std::sqrt(v / static_cast<double>(grown.size()));
        CHECK(sd >= 0.03);
        CHECK(sd <= 0.07);
    }

    const Concept corner{"edge", {{0.01, 0.99}}};
    const AffineMap shift{{1, 0, 0, 1}, {0.5, -0.5}};
    const AffineMap ident{{1, 0, 0, 1}, {0.0, 0.0}};
    const std::vector<AffineMap> maps{shift, ident};
    const auto out = augment_concept(corner, 500, 0.3, maps, rng);
    for (const auto& x : out.members) CHECK(in_box(x));

    const std::vector<AffineMap> only_shift{shift};
    const auto moved = augment_concept(Concept{"m", {{0.2, 0.7}}}, 3, 0.0, only_shift, rng);
    CHECK(moved.members[1][0] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(moved.members[1][1] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("concept validation and json") {
    CHECK_THROWS_AS((Concept{"empty", {}}).validate(), InvalidInput);
    CHECK_THROWS_AS((Concept{"ragged", {{0.1, 0.2}, {0.1}}}).validate(), InvalidInput);
    CHECK_THROWS_AS((Concept{"out", {{1.5}}}).validate(), InvalidInput);
    const Concept c{"cat", {{0.1, 0.2}, {0.30000000000000004, 0.9}}};
    const auto back = concept_from_json(concept_to_json(c));
    CHECK(back.id == c.id);
    CHECK(back.members == c.members);
    CHECK(c.single(1).members == std::vector<StateVector>{c.members[1]});
}

TEST_CASE("distribution validation") {
    CHECK_THROWS_AS(validate(IsotropicGaussian{{0.5}, 0.0}), InvalidInput);
    CHECK_THROWS_AS(validate(LaplaceDist{{0.5}, -1.0}), InvalidInput);
    CHECK_THROWS_AS(validate(KdeDist{{}, 0.1}), InvalidInput);
    CHECK_THROWS_AS(validate(KdeDist{{{0.5}}, 0.0}), InvalidInput);
    CHECK(is_normalized(KdeDist{{{0.5}}, 0.1}));
    CHECK_FALSE(is_normalized(GibbsDistance{{0.5}, 1.0, 2.0}));
}
