#include <catch2/catch_amalgamated.hpp>

#include "lcl/rng.hpp"

#include <cmath>
#include <vector>

using namespace lcl;

TEST_CASE("counter rng is reproducible and addressable") {
    Rng a(12345), b(12345);
    std::vector<std::uint64_t> xs;
    for (int i = 0; i < 100; ++i) xs.push_back(a.next_u64());
    for (int i = 0; i < 100; ++i) REQUIRE(b.next_u64() == xs[size_t(i)]);
}

TEST_CASE("derived seeds differ across path components") {
    const std::uint64_t m = 99;
    REQUIRE(derive_seed(m, {1, 2}) != derive_seed(m, {2, 1}));
    REQUIRE(derive_seed(m, {1, 2}) != derive_seed(m, {1, 3}));
    REQUIRE(derive_seed(m, {1}) != derive_seed(m + 1, {1}));
    REQUIRE(derive_seed(m, {1, 2}) == derive_seed(m, {1, 2}));
}

TEST_CASE("uniform stays inside the open unit interval") {
    Rng r(7);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("normal and exponential draws have the right moments") {
    Rng r(2024);
    const int n = 200000;
    double sn = 0, sn2 = 0, se = 0, se2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
        const double e = r.exponential();
        se += e;
        se2 += e * e;
    }
    const double mean_n = sn / n, var_n = sn2 / n - mean_n * mean_n;
    const double mean_e = se / n, var_e = se2 / n - mean_e * mean_e;
    REQUIRE(std::fabs(mean_n) < 4.0 / std::sqrt(double(n)));
    REQUIRE(std::fabs(var_n - 1.0) < 0.02);
    REQUIRE(std::fabs(mean_e - 1.0) < 4.0 / std::sqrt(double(n)));
    REQUIRE(std::fabs(var_e - 1.0) < 0.03);
}

TEST_CASE("gamma sampler matches gamma moments") {
    Rng r(5);
    const int n = 200000;
    const double shape = 7.5;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gamma(shape);
        s += g;
        s2 += g * g;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    REQUIRE(std::fabs(mean - shape) < 5.0 * std::sqrt(shape / n));
    REQUIRE(std::fabs(var - shape) < 0.2);
}
