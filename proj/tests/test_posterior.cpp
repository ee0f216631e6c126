#include <catch2/catch_amalgamated.hpp>

#include "lcl/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace lcl;

namespace {

// Brute-force trapezoid oracle for the 1-D tilted posterior mean/variance of
// the standardized exponential: density proportional to
// exp(-(x+1) + x^2/2 - (x-y)^2/(2(1-t))) on (-1, inf).
Moments1D trapezoid_oracle_exponential(double t, double y, int points = 100000,
                                       double hi = 40.0) {
    const double lo = -1.0 + 1e-9;
    const double h = (hi - lo) / (points - 1);
    double z = 0, m1 = 0, m2 = 0;
    for (int i = 0; i < points; ++i) {
        const double x = lo + i * h;
        const double l = -(x + 1.0) + 0.5 * x * x - 0.5 * (x - y) * (x - y) / (1.0 - t);
        const double w = std::exp(l) * ((i == 0 || i == points - 1) ? 0.5 : 1.0);
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    Moments1D out;
    out.mean = m1 / z;
    out.var = m2 / z - out.mean * out.mean;
    return out;
}

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = double(xs.size());
    double ks = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        ks = std::max(ks, std::fabs((i + 1) / n - f));
        ks = std::max(ks, std::fabs(f - i / n));
    }
    return ks;
}

}  // namespace

TEST_CASE("gaussian posterior closed form") {
    const Family g = Family::gaussian(2, Matrix::Identity(2, 2));
    Vector y(2);
    y << 2.0, 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
        const PosteriorMoments pm = posterior_moments(g, t, y);
        REQUIRE((pm.mean - y).norm() < 1e-12);
        REQUIRE((pm.cov - (1.0 - t) * Matrix::Identity(2, 2)).norm() < 1e-12);
    }
    const PosteriorMoments pm = posterior_moments(g, 0.5, y);
    REQUIRE((pm.cov - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("exponential posterior matches the trapezoid oracle") {
    const Family e = Family::product_exponential(1);
    Vector y(1);
    y << 0.0;
    const PosteriorMoments pm = posterior_moments(e, 0.5, y);
    const Moments1D oracle = trapezoid_oracle_exponential(0.5, 0.0);
    REQUIRE(std::fabs(pm.mean[0] - oracle.mean) < 1e-6);
    REQUIRE(std::fabs(pm.cov(0, 0) - oracle.var) < 1e-6);
}

TEST_CASE("closed form and quadrature agree for the exponential coordinate") {
    const Family e = Family::product_exponential(1);
    for (double t : {0.05, 0.3, 0.6, 0.9, 0.99}) {
        for (double yv : {-0.7, 0.0, 1.3, 4.0}) {
            Vector y(1);
            y << yv;
            const PosteriorMoments closed = posterior_moments(e, t, y);
            const PosteriorMoments quad = posterior_moments(e, t, y, /*force_quadrature=*/true);
            REQUIRE(std::fabs(closed.mean[0] - quad.mean[0]) <
                    1e-7 * std::max(1.0, std::fabs(closed.mean[0])));
            REQUIRE(std::fabs(closed.cov(0, 0) - quad.cov(0, 0)) <
                    1e-7 * std::max(1.0, closed.cov(0, 0)));
        }
    }
}

TEST_CASE("weibull posterior via quadrature is sane") {
    const Family w = Family::product_weibull(1, 2.0);
    Vector y(1);
    y << 0.4;
    const PosteriorMoments pm = posterior_moments(w, 0.5, y);
    REQUIRE(std::isfinite(pm.mean[0]));
    // Brascamp-Lieb ceiling (1-t)/t.
    REQUIRE(pm.cov(0, 0) <= (1.0 - 0.5) / 0.5 + 1e-9);
}

TEST_CASE("follmer drift examples") {
    const Family g = Family::gaussian(2, Matrix::Identity(2, 2));
    Vector y(2);
    y << 1.5, -0.4;
    REQUIRE(follmer_drift(g, 0.35, y).norm() < 1e-12);

    const Family e = Family::product_exponential(1);
    Vector y0 = Vector::Zero(1);
    REQUIRE(follmer_drift(e, 0.0, y0).norm() < 1e-12);
}

TEST_CASE("follmer drift matches finite difference of the smoothed log density") {
    // d/dy log integral rho(x) exp(x^2/2 - (x-y)^2/(2(1-t))) dx at t=0.9, y=3.
    const double t = 0.9, y = 3.0;
    auto logF = [&](double yy) {
        const int points = 100000;
        const double lo = -1.0 + 1e-9, hi = 40.0;
        const double h = (hi - lo) / (points - 1);
        double best = -1e300;
        std::vector<double> ls(points);
        for (int i = 0; i < points; ++i) {
            const double x = lo + i * h;
            ls[size_t(i)] = -(x + 1.0) + 0.5 * x * x -
                            0.5 * (x - yy) * (x - yy) / (1.0 - t);
            best = std::max(best, ls[size_t(i)]);
        }
        double z = 0;
        for (int i = 0; i < points; ++i)
            z += std::exp(ls[size_t(i)] - best) * ((i == 0 || i == points - 1) ? 0.5 : 1.0);
        return best + std::log(z * h);
    };
    const double h = 1e-4;
    const double fd = (logF(y + h) - logF(y - h)) / (2.0 * h);
    const Family e = Family::product_exponential(1);
    Vector yv(1);
    yv << y;
    REQUIRE(std::fabs(follmer_drift(e, t, yv)[0] - fd) < 1e-5);
}

TEST_CASE("snis smoothed score") {
    Rng rng(101);
    SECTION("gaussian target has zero drift") {
        Matrix pool(100000, 2);
        for (Eigen::Index k = 0; k < pool.rows(); ++k)
            for (int j = 0; j < 2; ++j) pool(k, j) = rng.normal();
        Vector y(2);
        y << 1.0, 1.0;
        const SnisEstimate est = smoothed_score_snis_pool(pool, 0.5, y);
        for (int j = 0; j < 2; ++j)
            REQUIRE(std::fabs(est.drift[j]) < 3.0 * est.drift_se[j]);
    }
    SECTION("exponential target matches the quadrature drift") {
        Matrix pool(100000, 1);
        StdExponential1D exp1;
        for (Eigen::Index k = 0; k < pool.rows(); ++k) pool(k, 0) = exp1.sample(rng);
        Vector y = Vector::Zero(1);
        const SnisEstimate est = smoothed_score_snis_pool(pool, 0.5, y);
        const Family e = Family::product_exponential(1);
        const double want = follmer_drift(e, 0.5, y)[0];
        REQUIRE(std::fabs(est.drift[0] - want) < 3.0 * est.drift_se[0]);
        REQUIRE(est.ess > 1000.0);
    }
    SECTION("far tail point degenerates") {
        Matrix pool(2000, 1);
        StdExponential1D exp1;
        for (Eigen::Index k = 0; k < pool.rows(); ++k) pool(k, 0) = exp1.sample(rng);
        Vector y(1);
        y << 60.0;
        REQUIRE_THROWS_AS(smoothed_score_snis_pool(pool, 0.98, y), SnisDegenerateError);
    }
}

TEST_CASE("snis error shrinks like one over root batch") {
    const Family e = Family::product_exponential(1);
    Vector y(1);
    y << 0.8;
    const double t = 0.5;
    const double want = follmer_drift(e, t, y)[0];
    StdExponential1D exp1;
    std::vector<double> log_b, log_err;
    for (Eigen::Index batch : {1000, 10000, 100000}) {
        double acc = 0.0;
        const int reps = 24;
        for (int r = 0; r < reps; ++r) {
            Rng rng = Rng::derived(55, {std::uint64_t(batch), std::uint64_t(r)});
            Matrix pool(batch, 1);
            for (Eigen::Index k = 0; k < batch; ++k) pool(k, 0) = exp1.sample(rng);
            acc += std::fabs(smoothed_score_snis_pool(pool, t, y).drift[0] - want);
        }
        log_b.push_back(std::log(double(batch)));
        log_err.push_back(std::log(acc / reps));
    }
    const double slope = (log_err[2] - log_err[0]) / (log_b[2] - log_b[0]);
    REQUIRE(slope > -0.65);
    REQUIRE(slope < -0.35);
}

TEST_CASE("posterior sampling laws") {
    SECTION("gaussian closed form posterior, KS against N(0,1/2)") {
        const Family g = Family::gaussian(2, Matrix::Identity(2, 2));
        Vector y = Vector::Zero(2);
        Rng rng(333);
        const int n = 100000;
        std::vector<double> c0, c1;
        for (int i = 0; i < n; ++i) {
            const Vector x = posterior_sample(g, 0.5, y, rng);
            c0.push_back(x[0]);
            c1.push_back(x[1]);
        }
        const double sd = std::sqrt(0.5);
        auto cdf = [&](double x) { return normal_cdf(x / sd); };
        const double crit = std::sqrt(-0.5 * std::log(0.5e-3)) / std::sqrt(double(n));
        REQUIRE(ks_statistic(c0, cdf) < crit);
        REQUIRE(ks_statistic(c1, cdf) < crit);
    }
    SECTION("exponential posterior mean matches moments") {
        const Family e = Family::product_exponential(1);
        Vector y = Vector::Zero(1);
        Rng rng(334);
        const int n = 100000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double x = posterior_sample(e, 0.5, y, rng)[0];
            s += x;
            s2 += x * x;
        }
        const PosteriorMoments pm = posterior_moments(e, 0.5, y);
        const double mean = s / n;
        const double se = std::sqrt((s2 / n - mean * mean) / n);
        REQUIRE(std::fabs(mean - pm.mean[0]) < 3.0 * se);
    }
    SECTION("rejection path (weibull) matches quadrature moments") {
        const Family w = Family::product_weibull(1, 2.0);
        Vector y(1);
        y << 0.5;
        Rng rng(335);
        const int n = 60000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double x = posterior_sample(w, 0.4, y, rng)[0];
            s += x;
            s2 += x * x;
        }
        const PosteriorMoments pm = posterior_moments(w, 0.4, y);
        const double mean = s / n;
        const double var = s2 / n - mean * mean;
        REQUIRE(std::fabs(mean - pm.mean[0]) < 3.5 * std::sqrt(var / n));
        REQUIRE(std::fabs(var - pm.cov(0, 0)) < 0.03);
    }
    SECTION("concentration near t = 1") {
        const Family e = Family::product_exponential(1);
        Vector y = Vector::Zero(1);
        Rng rng(336);
        const double t = 0.999;
        const int n = 20000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double x = posterior_sample(e, t, y, rng)[0];
            s += x;
            s2 += x * x;
        }
        const double var = s2 / n - (s / n) * (s / n);
        REQUIRE(var <= 2.0 * (1.0 - t) / t);
    }
}

TEST_CASE("uniform log-concavity witness for tilted densities") {
    Rng rng(404);
    const Family fams[] = {Family::product_exponential(1),
                           Family::product_weibull(1, 2.0)};
    for (const Family& f : fams) {
        for (double t : {0.3, 0.6, 0.9}) {
            Tilted1D g(f.coord(), t, 0.7);
            const double h = 1e-4;
            int checked = 0;
            while (checked < 100) {
                const double x = f.coord().sample(rng);
                if (x - h <= f.coord().support_lo() + 1e-6) continue;
                const double second =
                    (g.logpdf_unnorm(x + h) - 2.0 * g.logpdf_unnorm(x) +
                     g.logpdf_unnorm(x - h)) / (h * h);
                REQUIRE(second <= -t / (1.0 - t) + 1e-6);
                ++checked;
            }
        }
    }
}

TEST_CASE("posterior covariance respects the Brascamp-Lieb ceiling") {
    Rng rng(405);
    const Family e = Family::product_exponential(3);
    for (double t : {0.2, 0.5, 0.8}) {
        for (int rep = 0; rep < 20; ++rep) {
            Vector y(3);
            for (int j = 0; j < 3; ++j) y[j] = 2.0 * rng.normal();
            const PosteriorMoments pm = posterior_moments(e, t, y);
            Eigen::SelfAdjointEigenSolver<Matrix> es(pm.cov, Eigen::EigenvaluesOnly);
            REQUIRE(es.eigenvalues().maxCoeff() <= (1.0 - t) / t + 1e-9);
        }
    }
}
