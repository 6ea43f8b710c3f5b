#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "cadv/numerics.hpp"

using namespace cadv;

TEST_CASE("project_box clamps to the unit box") {
    CHECK(project_box(std::vector<double>{1.2, -0.3}) == StateVector{1.0, 0.0});
    CHECK(project_box(std::vector<double>{0.5, 0.5}) == StateVector{0.5, 0.5});
    CHECK(project_box(std::vector<double>{0.0, 1.0}) == StateVector{0.0, 1.0});
}

TEST_CASE("project_box rejects non-finite coordinates") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(project_box(std::vector<double>{0.1, nan}), InvalidInput);
    CHECK_THROWS_AS(project_box(std::vector<double>{inf}), InvalidInput);
}

TEST_CASE("project_box is idempotent") {
    RngStream rng(11, 0);
    for (int t = 0; t < 1000; ++t) {
        StateVector v(3);
        for (double& x : v) x = 4.0 * rng.normal();
        const auto once = project_box(v);
        CHECK(in_box(once));
        CHECK(project_box(once) == once);
    }
}

TEST_CASE("log_sum_exp values") {
    CHECK(log_sum_exp(std::vector<double>{0.0, 0.0}) == doctest::Approx(0.693147180559945).epsilon(1e-14));
    CHECK(log_sum_exp(std::vector<double>{-3.25}) == -3.25);
    CHECK(std::abs(log_sum_exp(std::vector<double>{-1000.0, 0.0})) < 1e-300);
    CHECK(log_sum_exp(std::vector<double>{700.0, 700.0}) == doctest::Approx(700.0 + std::log(2.0)));
    CHECK(std::isfinite(log_sum_exp(std::vector<double>{-700.0, -700.0})));
    CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), InvalidInput);
}

TEST_CASE("log_sum_exp is shift invariant") {
    RngStream rng(3, 1);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> v(5);
        for (double& x : v) x = 10.0 * rng.normal();
        const double c = 20.0 * (rng.uniform() - 0.5);
        std::vector<double> shifted = v;
        for (double& x : shifted) x += c;
        CHECK(std::abs(log_sum_exp(shifted) - (log_sum_exp(v) + c)) < 1e-12);
    }
}

TEST_CASE("softmax sums to one") {
    const auto p = softmax(std::vector<double>{1000.0, 0.0, -5.0});
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p[0] > 0.999);
}

TEST_CASE("normal_cdf reference values") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(normal_cdf(-1.0) == doctest::Approx(0.158655253931457).epsilon(1e-12));
}

TEST_CASE("equal streams give bitwise-equal sequences") {
    RngStream a(42, 9), b(42, 9), other(42, 10);
    bool differs = false;
    for (int i = 0; i < 100'000; ++i) {
        const auto x = a.next_u64();
        REQUIRE(x == b.next_u64());
        differs |= x != other.next_u64();
    }
    CHECK(differs);
}

TEST_CASE("stream draws are counter addressable") {
    RngStream a(5, 2);
    std::vector<std::uint64_t> draws;
    for (int i = 0; i < 20; ++i) draws.push_back(a.next_u64());
    for (int i = 0; i < 20; ++i) CHECK(a.at(static_cast<std::uint64_t>(i)) == draws[static_cast<std::size_t>(i)]);
    a.seek(7);
    CHECK(a.next_u64() == draws[7]);
    CHECK(a.position() == 8);
}

TEST_CASE("generator pinned to reference values") {
    // SplitMix64 finalizer of the published reference implementation.
    auto reference_mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    for (std::uint64_t x : {0ULL, 1ULL, 0x9e3779b97f4a7c15ULL, 123456789ULL}) CHECK(mix64(x) == reference_mix(x));
    const std::uint64_t golden = 0x9e3779b97f4a7c15ULL;
    RngStream s(1, 2);
    const std::uint64_t key = reference_mix(1 ^ reference_mix(2 + golden));
    CHECK(s.next_u64() == reference_mix(key + golden));
    CHECK(s.next_u64() == reference_mix(key + 2 * golden));
}

TEST_CASE("uniform and normal moments") {
    RngStream rng(8, 8);
    const int n = 200'000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
    }
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(sn / n) < 5 / std::sqrt(n));
    CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
}

TEST_CASE("derived streams are distinct and reproducible") {
    RngStream root(1, 0);
    CHECK(root.derive(3).stream_id() == root.derive(3).stream_id());
    CHECK(root.derive(3).stream_id() != root.derive(4).stream_id());
    CHECK(root.derive(0).stream_id() != root.stream_id());
}

TEST_CASE("squared_distance") {
    CHECK(squared_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == 25.0);
    CHECK_THROWS_AS(squared_distance(std::vector<double>{0}, std::vector<double>{3, 4}), InvalidInput);
}
