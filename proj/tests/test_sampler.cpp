#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <sstream>

#include "cadv/sampler.hpp"

using namespace cadv;

namespace {

struct Moments {
    double mean;
    double var;
    double se;  // batch-means standard error of the mean
};

Moments moments(const std::vector<StateVector>& xs, std::size_t coord, std::size_t batches = 50) {
    const auto n = xs.size();
    double m = 0;
    for (const auto& x : xs) m += x[coord];
    m /= static_cast<double>(n);
    double v = 0;
    for (const auto& x : xs) v += (x[coord] - m) * (x[coord] - m);
    v /= static_cast<double>(n - 1);
    const std::size_t b = n / batches;
    double bv = 0;
    for (std::size_t k = 0; k < batches; ++k) {
        double bm = 0;
        for (std::size_t i = k * b; i < (k + 1) * b; ++i) bm += xs[i][coord];
        bm /= static_cast<double>(b);
        bv += (bm - m) * (bm - m);
    }
    bv /= static_cast<double>(batches - 1);
    return {m, v, std::sqrt(bv / static_cast<double>(batches))};
}

std::shared_ptr<const Classifier> zero_net(std::size_t dim, std::size_t classes) {
    return std::make_shared<const Classifier>(Classifier::zeros({dim, classes}));
}

}  // namespace

TEST_CASE("gibbs energy examples") {
    const GibbsTarget t(IsotropicGaussian{{0.5}, 1.0}, VictimDistribution(zero_net(1, 10), 0, 1.0));
    CHECK(gibbs_energy(t, std::vector<double>{0.5}) == doctest::Approx(0.918939 + 2.302585).epsilon(1e-6));
    CHECK(gibbs_energy(t, std::vector<double>{0.5}) == doctest::Approx(3.221524).epsilon(1e-6));

    const StateVector a{0.2}, b{0.9};
    const double de = gibbs_energy(t, a) - gibbs_energy(t, b);
    CHECK(de == doctest::Approx(-(log_density(t.dist, a) - log_density(t.dist, b))).epsilon(1e-14));

    const GibbsTarget t2(t.dist, t.vic.with_c(2.0));
    CHECK(gibbs_energy(t2, a) - gibbs_energy(t, a) == doctest::Approx(t.vic.energy(a)).epsilon(1e-14));
}

TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(GibbsTarget(IsotropicGaussian{{0.5, 0.5}, 1.0}, VictimDistribution::constant(3)), InvalidInput);
}

TEST_CASE("langevin step") {
    const GibbsTarget t(IsotropicGaussian{{1.0}, 1.0}, VictimDistribution::constant(1));
    CHECK(langevin_step(std::vector<double>{0.0}, t, 0.2, std::vector<double>{0.0})[0] ==
          doctest::Approx(0.2).epsilon(1e-15));
    CHECK(langevin_step(std::vector<double>{0.4}, t, 1e-300, std::vector<double>{0.0})[0] == 0.4);

    const GibbsTarget far(IsotropicGaussian{{5.0, -5.0}, 0.01}, VictimDistribution::constant(2));
    RngStream rng(1, 0);
    StateVector x{0.5, 0.5};
    for (int i = 0; i < 200; ++i) {
        x = langevin_step(x, far, 0.05, rng);
        REQUIRE(in_box(x));
    }
    CHECK(x == StateVector{1.0, 0.0});
    CHECK_THROWS_AS(langevin_step(x, far, 0.0, rng), InvalidInput);
}

TEST_CASE("config validation") {
    LangevinConfig c;
    CHECK_NOTHROW(c.validate());
    c.burn_in = c.steps;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LangevinConfig{};
    c.thinning = c.steps - c.burn_in + 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LangevinConfig{};
    c.step_size = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    const GibbsTarget t(IsotropicGaussian{{0.5}, 0.01}, VictimDistribution::constant(1));
    LangevinConfig fixed;
    fixed.steps = 10;
    fixed.burn_in = 0;
    fixed.thinning = 1;
    fixed.init = ChainInit::FixedPoint;
    CHECK_THROWS_AS(run_chain(t, fixed), ConfigError);
    CHECK(run_chain(t, fixed, StateVector{0.5}).size() == 10);
    fixed.init = ChainInit::UniformBox;
    CHECK_THROWS_AS(run_chain(t, fixed, StateVector{0.5}), ConfigError);
    fixed.init = ChainInit::ConceptMember;
    CHECK_THROWS_AS(run_chain(t, fixed), ConfigError);
}

TEST_CASE("chain on a gaussian target matches its stationary law") {
    const GibbsTarget t(IsotropicGaussian{{0.5}, 0.01}, VictimDistribution::constant(1));
    LangevinConfig c;
    c.seed = 5;
    const auto xs = run_chain(t, c);
    CHECK(xs.size() == static_cast<std::size_t>((c.steps - c.burn_in) / c.thinning));
    for (const auto& x : xs) REQUIRE(in_box(x));
    const auto m = moments(xs, 0);
    CHECK(std::abs(m.mean - 0.5) < 3 * m.se);
    CHECK(std::abs(m.var - 0.01) < 0.15 * 0.01);
}

TEST_CASE("chain on a gaussian product matches the precision-weighted posterior") {
    const GibbsTarget t(IsotropicGaussian{{0.3, 0.3}, 0.02}, VictimDistribution(QuadraticLoss{{0.7, 0.7}, 0.02}));
    LangevinConfig c;
    c.seed = 6;
    const auto xs = run_chain(t, c);
    // Precision sum: 1/0.02 + 1/0.02 = 100; mean (0.3·50 + 0.7·50)/100.
    for (std::size_t d = 0; d < 2; ++d) {
        const auto m = moments(xs, d);
        CHECK(std::abs(m.mean - 0.5) < 3 * m.se);
        CHECK(std::abs(m.var - 0.01) < 0.15 * 0.01);
    }
}

TEST_CASE("chains are deterministic and finite") {
    const KdeDist k{{{0.2, 0.2}, {0.8, 0.7}}, 0.05};
    const auto net = std::make_shared<const Classifier>([] {
        RngStream r(3, 3);
        return init_classifier({2, 8, 3}, r);
    }());
    const GibbsTarget t(k, VictimDistribution(net, 1, 2.0));
    LangevinConfig c;
    c.steps = 3000;
    c.burn_in = 100;
    c.thinning = 7;
    c.seed = 9;
    std::vector<TraceRow> trace;
    const auto a = run_chain(t, c, std::nullopt, &trace);
    const auto b = run_chain(t, c);
    CHECK(a == b);
    CHECK(trace.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(trace[i].x == a[i]);
    for (const auto& row : trace) {
        REQUIRE(std::isfinite(row.energy));
        REQUIRE(in_box(row.x));
    }
    c.seed = 10;
    CHECK(run_chain(t, c) != a);

    std::ostringstream csv;
    write_trace_csv(csv, std::span<const TraceRow>(trace).first(2));
    const auto text = csv.str();
    CHECK(text.rfind("step,x0,x1,energy\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("kde chains start at a concept member") {
    const KdeDist k{{{0.1, 0.1}, {0.9, 0.9}}, 0.01};
    const GibbsTarget t(k, VictimDistribution::constant(2));
    LangevinConfig c;
    c.steps = 1;
    c.burn_in = 0;
    c.thinning = 1;
    c.step_size = 1e-12;
    for (std::uint64_t s = 0; s < 20; ++s) {
        c.seed = s;
        const auto x = run_chain_final(t, c);
        const bool near = squared_distance(x, k.centers[0]) < 1e-8 || squared_distance(x, k.centers[1]) < 1e-8;
        CHECK(near);
    }
}

TEST_CASE("parallel chains equal serial chains bitwise") {
    const KdeDist k{{{0.2, 0.3}, {0.6, 0.7}, {0.4, 0.1}}, 0.05};
    const GibbsTarget t(k, VictimDistribution(QuadraticLoss{{0.8, 0.8}, 0.1}, 1.0));
    LangevinConfig c;
    c.steps = 500;
    c.burn_in = 0;
    c.thinning = 1;
    c.seed = 1;
    c.stream = 4;
    const auto s = run_chains_serial(t, c, 13);
    const auto p = run_chains_parallel(t, c, 13);
    CHECK(s == p);
    for (std::size_t i = 0; i < s.size(); ++i) {
        LangevinConfig ci = c;
        ci.stream = chain_stream(c, i);
        CHECK(run_chain_final(t, ci) == s[i]);
    }
    CHECK(s[0] != s[1]);
}
