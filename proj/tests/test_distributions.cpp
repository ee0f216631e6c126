#include <catch2/catch_amalgamated.hpp>

#include "lcl/distributions.hpp"

#include <cmath>

using namespace lcl;

namespace {

// Gamma function by quadrature, independent of std::tgamma: with t = u^2,
// Gamma(s) = 2 int_0^inf u^{2s-1} e^{-u^2} du.
double gamma_quadrature(double s) {
    const double hi = 9.0;
    const int n = 20000;
    const double h = hi / n;
    auto f = [&](double u) { return 2.0 * std::pow(u, 2.0 * s - 1.0) * std::exp(-u * u); };
    double acc = f(0.0) + f(hi);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return acc * h / 3.0;
}

double fd_score(const Family& f, const Vector& x, int j, double h = 1e-5) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    return (f.log_density(xp) - f.log_density(xm)) / (2.0 * h);
}

}  // namespace

TEST_CASE("family construction and standardization") {
    const Family g1 = Family::gaussian(1, Matrix::Identity(1, 1));
    Vector x0 = Vector::Zero(1);
    REQUIRE(g1.log_density(x0) == Catch::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));

    // Weibull beta=2 standardization constants against the quadrature oracle:
    // mean Gamma(1.5), variance Gamma(2) - Gamma(1.5)^2.
    const Family w = Family::product_weibull(1, 2.0);
    const auto& c = dynamic_cast<const StdWeibull1D&>(w.coord());
    const double g15 = gamma_quadrature(1.5);
    const double g2 = gamma_quadrature(2.0);
    REQUIRE(c.raw_mean() == Catch::Approx(g15).epsilon(1e-9));
    REQUIRE(c.raw_sd() == Catch::Approx(std::sqrt(g2 - g15 * g15)).epsilon(1e-8));

    // Standardized exponential coordinates are Exp(1) - 1.
    const Family e3 = Family::product_exponential(3);
    Vector z = Vector::Zero(3);
    REQUIRE(e3.log_density(z) == Catch::Approx(-3.0).epsilon(1e-14));
    z[1] = -1.5;
    REQUIRE(e3.log_density(z) == kNegInf);
}

TEST_CASE("construction errors carry diagnostics") {
    REQUIRE_THROWS_AS(Family::product_exponential(0), std::invalid_argument);
    REQUIRE_THROWS_AS(Family::product_weibull(2, 1.5), std::invalid_argument);
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
    REQUIRE_THROWS_AS(Family::gaussian(2, bad), std::invalid_argument);
}

TEST_CASE("log density examples") {
    const Family e1 = Family::product_exponential(1);
    Vector x(1);
    x[0] = 0.0;
    REQUIRE(e1.log_density(x) == Catch::Approx(-1.0).epsilon(1e-14));
    const Family e2 = Family::product_exponential(2);
    REQUIRE(e2.log_density(Vector::Zero(2)) == Catch::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("score examples and finite-difference consistency") {
    const Family g = Family::gaussian(2, Matrix::Identity(2, 2));
    Vector x(2);
    x << 1.0, -2.0;
    const Vector s = g.score(x);
    REQUIRE(s[0] == Catch::Approx(-1.0).epsilon(1e-14));
    REQUIRE(s[1] == Catch::Approx(2.0).epsilon(1e-14));

    const Family e = Family::product_exponential(1);
    Vector xe(1);
    xe << 0.37;
    REQUIRE(e.score(xe)[0] == Catch::Approx(-1.0).epsilon(1e-14));

    // Weibull beta=2 at its median, against a centered finite difference.
    const Family w = Family::product_weibull(1, 2.0);
    const auto& c = dynamic_cast<const StdWeibull1D&>(w.coord());
    Vector xm(1);
    xm << (std::sqrt(std::log(2.0)) - c.raw_mean()) / c.raw_sd();
    REQUIRE(std::fabs(w.score(xm)[0] - fd_score(w, xm, 0)) < 1e-6);

    xe << -1.0;
    REQUIRE_THROWS_WITH(e.score(xe), Catch::Matchers::ContainsSubstring("coordinate 0"));
}

TEST_CASE("score matches finite differences at random interior points") {
    Rng rng(314);
    for (const Family& f : {Family::product_exponential(3),
                            Family::product_weibull(3, 2.0),
                            Family::product_weibull(3, 3.5),
                            Family::gaussian(3, Matrix::Identity(3, 3))}) {
        for (int rep = 0; rep < 200; ++rep) {
            Vector x(3);
            for (int j = 0; j < 3; ++j) {
                // stay safely inside the support for the FD stencil
                do { x[j] = f.is_product() ? f.coord().sample(rng) : rng.normal(); }
                while (f.is_product() && x[j] < f.coord().support_lo() + 1e-3);
            }
            const Vector s = f.score(x);
            for (int j = 0; j < 3; ++j)
                REQUIRE(std::fabs(s[j] - fd_score(f, x, j)) < 1e-5);
        }
    }
}

TEST_CASE("sampling moments at Monte Carlo scale") {
    const int n = 1000000;
    {
        const Family g = Family::gaussian(1, Matrix::Identity(1, 1));
        const SampleMatrix sm = g.sample(n, 42);
        REQUIRE(std::fabs(sm.data.col(0).mean()) < 4.0 / std::sqrt(double(n)));
    }
    {
        const Family e = Family::product_exponential(1);
        const SampleMatrix sm = e.sample(n, 43);
        const double mean = sm.data.col(0).mean();
        const double var = sm.data.col(0).squaredNorm() / n - mean * mean;
        REQUIRE(std::fabs(var - 1.0) < 0.02);
        REQUIRE(std::fabs(mean) < 5.0 / std::sqrt(double(n)));
    }
    {
        const Family w = Family::product_weibull(2, 2.0);
        const SampleMatrix sm = w.sample(n / 2, 44);
        for (int j = 0; j < 2; ++j) {
            const double mean = sm.data.col(j).mean();
            const double var = sm.data.col(j).squaredNorm() / (n / 2) - mean * mean;
            REQUIRE(std::fabs(mean) < 5.0 / std::sqrt(double(n / 2)));
            REQUIRE(std::fabs(var - 1.0) < 0.02);
        }
    }
}

TEST_CASE("same seed reproduces identical bits") {
    for (const Family& f : {Family::product_exponential(4),
                            Family::gaussian(4, Matrix::Identity(4, 4)),
                            Family::product_weibull(4, 2.5)}) {
        const SampleMatrix a = f.sample(5, 777), b = f.sample(5, 777);
        REQUIRE(a.data == b.data);
        const SampleMatrix c = f.sample(5, 778);
        REQUIRE(a.data != c.data);
    }
}

TEST_CASE("log density is concave along random segments") {
    Rng rng(2718);
    for (const Family& f : {Family::product_exponential(3),
                            Family::product_weibull(3, 2.0),
                            Family::gaussian(3, Matrix::Identity(3, 3))}) {
        for (int rep = 0; rep < 1000; ++rep) {
            Vector a(3), b(3);
            for (int j = 0; j < 3; ++j) {
                a[j] = f.is_product() ? f.coord().sample(rng) : rng.normal();
                b[j] = f.is_product() ? f.coord().sample(rng) : rng.normal();
            }
            const double la = f.log_density(a), lb = f.log_density(b);
            const double lm = f.log_density(0.5 * (a + b));
            REQUIRE(lm >= 0.5 * (la + lb) - 1e-9);
        }
    }
}

TEST_CASE("gamma-sum coordinate law") {
    GammaSumScaled1D g(100);
    Rng rng(9);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = g.sample(rng);
        s += x;
        s2 += x * x;
    }
    REQUIRE(std::fabs(s / n) < 5.0 / std::sqrt(double(n)));
    REQUIRE(std::fabs(s2 / n - (s / n) * (s / n) - 1.0) < 0.02);
    // score consistency at a few points
    for (double x : {-0.8, 0.0, 1.3}) {
        const double h = 1e-5;
        const double fd = (g.log_density(x + h) - g.log_density(x - h)) / (2 * h);
        REQUIRE(std::fabs(g.score(x) - fd) < 1e-5);
    }
}

TEST_CASE("family JSON round trip") {
    Matrix s(2, 2);
    s << 2.0, 0.3, 0.3, 1.0;
    for (const Family& f : {Family::gaussian(2, s), Family::product_exponential(5),
                            Family::product_weibull(3, 2.5)}) {
        const Family g = Family::from_json(f.to_json());
        REQUIRE(g.kind() == f.kind());
        REQUIRE(g.dimension() == f.dimension());
        REQUIRE(g.to_json() == f.to_json());
    }
}
