#include <catch2/catch_amalgamated.hpp>

#include "lcl/stein.hpp"

#include <cmath>

using namespace lcl;

namespace {

class StdNormal1D final : public Coord1D {
  public:
    explicit StdNormal1D(double var = 1.0) : var_(var) {}
    double log_density(double x) const override {
        return -0.5 * std::log(2.0 * M_PI * var_) - 0.5 * x * x / var_;
    }
    double score(double x) const override { return -x / var_; }
    double curvature(double) const override { return -1.0 / var_; }
    double sample(Rng& rng) const override { return std::sqrt(var_) * rng.normal(); }
    double variance() const override { return var_; }

  private:
    double var_;
};

}  // namespace

TEST_CASE("smoothed exponential density is a probability density") {
    SmoothedExponential1D c(0.05);
    const double lo = -8.0, hi = 40.0;
    const int n = 400000;
    const double h = (hi - lo) / n;
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = lo + i * h;
        const double p = std::exp(c.log_density(x)) * ((i == 0 || i == n) ? 0.5 : 1.0);
        z += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    z *= h, m1 *= h, m2 *= h;
    REQUIRE(z == Catch::Approx(1.0).epsilon(1e-10));
    REQUIRE(std::fabs(m1) < 1e-10);
    REQUIRE(m2 == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("smoothed exponential score and curvature match finite differences") {
    SmoothedExponential1D c(0.05);
    const double h = 1e-6;
    for (double x : {-1.5, -0.9, -0.2, 0.0, 0.7, 2.0, 6.0, 15.0}) {
        const double fd1 = (c.log_density(x + h) - c.log_density(x - h)) / (2 * h);
        const double fd2 =
            (c.log_density(x + h) - 2 * c.log_density(x) + c.log_density(x - h)) /
            (h * h);
        REQUIRE(std::fabs(c.score(x) - fd1) < 1e-6 * std::max(1.0, std::fabs(fd1)));
        REQUIRE(std::fabs(c.curvature(x) - fd2) < 1e-3 * std::max(1.0, std::fabs(fd2)));
    }
    Rng rng(77);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = c.sample(rng);
        s += x;
        s2 += x * x;
    }
    REQUIRE(std::fabs(s / n) < 5.0 / std::sqrt(double(n)));
    REQUIRE(std::fabs(s2 / n - (s / n) * (s / n) - 1.0) < 0.02);
}

TEST_CASE("exact 1-D kernels") {
    StdNormal1D g1;
    for (double x : {-1.0, 0.0, 0.7, 2.5})
        REQUIRE(stein_kernel_1d_exact(g1, x) == Catch::Approx(1.0).epsilon(1e-7));

    StdExponential1D e;
    // tau(x) = x + 1 by integration by parts of the tail integral.
    for (double x : {-0.9, -0.3, 0.0, 1.0, 4.0})
        REQUIRE(stein_kernel_1d_exact(e, x) == Catch::Approx(x + 1.0).epsilon(1e-7));
    // at the left support edge the tail integral is the (zero) mean
    REQUIRE(std::fabs(stein_kernel_1d_exact(e, -1.0 + 1e-12)) < 1e-7);
}

TEST_CASE("poincare constant of the standardized exponential is four") {
    StdExponential1D e;
    const double varpi = poincare_rayleigh_1d(e, -1.0 + 1e-9, 20.0, 4000);
    REQUIRE(varpi == Catch::Approx(4.0).epsilon(0.02));
    StdNormal1D g1;
    REQUIRE(poincare_rayleigh_1d(g1, -10.0, 10.0, 4000) ==
            Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("langevin kernel for gaussian targets") {
    Matrix pts(2, 1);
    pts << 0.7, -0.3;
    SECTION("standard gaussian has unit kernel") {
        const Family g = Family::gaussian(1, Matrix::Identity(1, 1));
        const SteinKernelEstimate est =
            stein_kernel_langevin(langevin_target(g), pts, 8.0, 64, 800, 5150);
        for (size_t i = 0; i < 2; ++i)
            REQUIRE(std::fabs(est.tau[i](0, 0) - 1.0) <= 3.0 * est.se[i](0, 0));
    }
    SECTION("variance-4 gaussian has kernel 4") {
        Matrix s(1, 1);
        s << 4.0;
        const Family g = Family::gaussian(1, s);
        // horizon from the precondition exp(-T/4) <= 0.01
        const double T = 4.0 * std::log(100.0) + 0.1;
        const SteinKernelEstimate est =
            stein_kernel_langevin(langevin_target(g), pts, T, 64, 1800, 5151);
        for (size_t i = 0; i < 2; ++i)
            REQUIRE(std::fabs(est.tau[i](0, 0) - 4.0) <= 3.0 * est.se[i](0, 0));
        REQUIRE_THROWS_AS(
            stein_kernel_langevin(langevin_target(g), pts, 8.0, 8, 100, 1),
            std::invalid_argument);
    }
}

namespace {
LangevinTarget tilted_smoothed_exp_target(std::shared_ptr<SmoothedExponential1D> base,
                                          double t, double y) {
    auto tilt = std::make_shared<Tilted1D>(*base, t, y);
    LangevinTarget target;
    target.d = 1;
    target.ulc_epsilon = t / (1.0 - t);
    target.poincare = (1.0 - t) / t;
    target.score = [tilt, base](const Vector& x) {
        Vector v(1);
        v[0] = tilt->dlogpdf(x[0]);
        return v;
    };
    target.hess_v = [tilt, base](const Vector& x) {
        Matrix h(1, 1);
        h(0, 0) = -tilt->d2logpdf(x[0]);
        return h;
    };
    return target;
}
}  // namespace

TEST_CASE("langevin kernel singular values respect the inverse-curvature bound") {
    // Tilted smoothed exponential: eps-uniformly log-concave with eps = 1.
    auto base = std::make_shared<SmoothedExponential1D>(0.05);
    const LangevinTarget target = tilted_smoothed_exp_target(base, 0.5, 0.4);
    Matrix pts(3, 1);
    pts << -0.5, 0.1, 0.9;
    const SteinKernelEstimate est =
        stein_kernel_langevin(target, pts, 6.0, 128, 600, 616);
    for (size_t i = 0; i < 3; ++i)
        REQUIRE(std::fabs(est.tau[i](0, 0)) <=
                1.0 / target.ulc_epsilon + 3.0 * est.se[i](0, 0));
}

TEST_CASE("horizon truncation control for a strongly log-concave target") {
    // eps = 0.6 >= 0.5: doubling the horizon moves tau by less than one SE.
    auto base = std::make_shared<SmoothedExponential1D>(0.05);
    const LangevinTarget target = tilted_smoothed_exp_target(base, 0.375, 0.0);
    Matrix pts(1, 1);
    pts << 0.2;
    const SteinKernelEstimate a =
        stein_kernel_langevin(target, pts, 8.0, 512, 800, 99);
    const SteinKernelEstimate b =
        stein_kernel_langevin(target, pts, 16.0, 512, 1600, 99);
    REQUIRE(std::fabs(a.tau[0](0, 0) - b.tau[0](0, 0)) <=
            std::max(a.se[0](0, 0), b.se[0](0, 0)));
}

TEST_CASE("langevin kernel matches the exact kernel for the smoothed exponential") {
    auto coord = std::make_shared<SmoothedExponential1D>(0.05);
    const LangevinTarget target = smoothed_exponential_target(1, 0.05);
    Matrix pts(5, 1);
    pts << -0.8, -0.3, 0.2, 0.8, 1.8;
    const SteinKernelEstimate est =
        stein_kernel_langevin(target, pts, 20.0, 256, 1000, 4242);
    int ok = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double exact = stein_kernel_1d_exact(*coord, pts(i, 0));
        INFO("point " << pts(i, 0) << ": tau_hat=" << est.tau[size_t(i)](0, 0)
                      << " exact=" << exact << " se=" << est.se[size_t(i)](0, 0));
        if (std::fabs(est.tau[size_t(i)](0, 0) - exact) <=
            3.0 * est.se[size_t(i)](0, 0))
            ++ok;
        CHECK(std::fabs(est.tau[size_t(i)](0, 0) - exact) <=
              4.0 * est.se[size_t(i)](0, 0));
    }
    REQUIRE(ok >= 4);
}

TEST_CASE("averaged kernel equals the covariance") {
    // E tau(X) = Var(X); one path per exact sample point.
    auto coord = std::make_shared<SmoothedExponential1D>(0.05);
    const LangevinTarget target = smoothed_exponential_target(1, 0.05);
    Rng rng(31415);
    const int n = 20000;
    double s = 0, s2 = 0, tail = 0;
    for (int i = 0; i < n; ++i) {
        Vector x0(1);
        x0[0] = coord->sample(rng);
        const LangevinRun run = simulate_langevin_with_jacobian(
            target, x0, 14.0, 700, derive_seed(10101, {std::uint64_t(i)}));
        double integral = 0.0;
        for (int k = 0; k < 700; ++k) {
            const double dt = run.path.grid[k + 1] - run.path.grid[k];
            integral += 0.5 * dt *
                        (run.jacobian[size_t(k)](0, 0) + run.jacobian[size_t(k) + 1](0, 0));
        }
        s += integral;
        s2 += integral * integral;
        tail += run.jacobian.back()(0, 0);
    }
    const double mean = s / n;
    const double mc_se = std::sqrt((s2 / n - mean * mean) / n);
    const double trunc = std::fabs(tail / n) * target.poincare;
    const double se = std::sqrt(mc_se * mc_se + trunc * trunc);
    INFO("mean=" << mean << " mc_se=" << mc_se << " trunc=" << trunc);
    REQUIRE(std::fabs(mean - 1.0) <= 3.0 * se);
}

TEST_CASE("stein identity residuals") {
    SECTION("standard gaussian with identity kernel") {
        const Family g = Family::gaussian(2, Matrix::Identity(2, 2));
        const Matrix samples = g.sample(100000, 8181).data;
        auto kernel = [](const Vector&) { return Matrix(Matrix::Identity(2, 2)); };
        for (const auto& row :
             stein_residual(samples, kernel, default_test_functions(2))) {
            INFO(row.test_function << " residual " << row.value << " se " << row.se);
            REQUIRE(std::fabs(row.value) <= 3.5 * row.se);
        }
    }
    SECTION("standardized exponential with kernel x+1") {
        const Family e = Family::product_exponential(1);
        const Matrix samples = e.sample(100000, 8282).data;
        auto kernel = [](const Vector& x) {
            Matrix t(1, 1);
            t(0, 0) = x[0] + 1.0;
            return t;
        };
        for (const auto& row :
             stein_residual(samples, kernel, default_test_functions(1))) {
            INFO(row.test_function << " residual " << row.value << " se " << row.se);
            REQUIRE(std::fabs(row.value) <= 3.5 * row.se);
        }
    }
    SECTION("a wrong kernel is detected") {
        const Family e = Family::product_exponential(1);
        const Matrix samples = e.sample(100000, 8383).data;
        auto zero_kernel = [](const Vector&) { return Matrix(Matrix::Zero(1, 1)); };
        std::vector<SteinTestFunction> fns = {default_test_functions(1)[0]};
        const auto rows = stein_residual(samples, zero_kernel, fns);
        // residual = E[X^2] = 1 since the kernel side vanishes
        REQUIRE(std::fabs(rows[0].value - 1.0) <= 3.0 * rows[0].se);
    }
}

TEST_CASE("kernel second-moment inequality") {
    SECTION("gaussian saturates at varpi = 1") {
        const Family g = Family::gaussian(1, Matrix::Identity(1, 1));
        const Matrix samples = g.sample(200000, 909).data;
        auto kernel = [](const Vector&) { return Matrix(Matrix::Identity(1, 1)); };
        Vector u(1);
        u << 1.0;
        const SecondMomentCheck c = kernel_second_moment_check(samples, kernel, u, 1.0);
        REQUIRE(c.lhs == Catch::Approx(1.0).epsilon(1e-12));
        REQUIRE(c.rhs == Catch::Approx(1.0).margin(0.02));
        REQUIRE(c.holds);
    }
    SECTION("exponential with kernel x+1 and varpi 4") {
        const Family e = Family::product_exponential(1);
        const Matrix samples = e.sample(200000, 910).data;
        auto kernel = [](const Vector& x) {
            Matrix t(1, 1);
            t(0, 0) = x[0] + 1.0;
            return t;
        };
        Vector u(1);
        u << 1.0;
        const SecondMomentCheck c = kernel_second_moment_check(samples, kernel, u, 4.0);
        REQUIRE(c.lhs == Catch::Approx(2.0).margin(0.05));
        REQUIRE(c.rhs == Catch::Approx(4.0).margin(0.05));
        REQUIRE(c.holds);
    }
    SECTION("zero direction") {
        const Family e = Family::product_exponential(1);
        const Matrix samples = e.sample(1000, 911).data;
        auto kernel = [](const Vector& x) {
            Matrix t(1, 1);
            t(0, 0) = x[0] + 1.0;
            return t;
        };
        const SecondMomentCheck c =
            kernel_second_moment_check(samples, kernel, Vector::Zero(1), 4.0);
        REQUIRE(c.lhs == 0.0);
        REQUIRE(c.rhs == 0.0);
        REQUIRE(c.holds);
    }
}
