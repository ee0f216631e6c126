#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lcl/matrix.hpp"
#include "lcl/special.hpp"

// Distance estimators and exact Gaussian-tail inequality checks.  The
// rectangle-class distance is measured through the max-statistic reduction:
// sup over thresholds of |P(max_j W_j/sigma_j <= x) - P(max_j Z_j/sigma_j <= x)|,
// with the Gaussian side exact for independent coordinates.

namespace lcl {

struct DistanceEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    std::string method;
    Eigen::Index n_a = 0, n_b = 0;
};

// 201 thresholds matched to the quantiles of the max of d iid standard
// normals: x = Phi^{-1}(q^{1/d}) for q on a uniform level grid.
inline Vector default_threshold_grid(int d, int count = 201) {
    Vector g(count);
    for (int i = 0; i < count; ++i) {
        const double q = 0.005 + (0.995 - 0.005) * i / (count - 1);
        g[i] = normal_icdf(std::pow(q, 1.0 / d));
    }
    return g;
}

inline std::vector<double> max_statistics(const Matrix& w, const Vector& sigma) {
    std::vector<double> m;
    m.reserve(size_t(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        double v = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            v = std::max(v, w(i, j) / sigma[j]);
        m.push_back(v);
    }
    return m;
}

inline double dkw_envelope(Eigen::Index n, double alpha = 0.05) {
    return std::sqrt(std::log(2.0 / alpha) / (2.0 * double(n)));
}

namespace metrics_detail {
inline double ecdf(const std::vector<double>& sorted, double x) {
    return double(std::upper_bound(sorted.begin(), sorted.end(), x) -
                  sorted.begin()) /
           double(sorted.size());
}
}  // namespace metrics_detail

// Max-statistic Kolmogorov distance against the exact Gaussian max law with
// independent coordinates: P(max_j Z_j/sigma_j <= x) = Phi(x)^d.
inline DistanceEstimate kolmogorov_max_distance(const Matrix& w, const Vector& sigma,
                                                const Vector& grid) {
    if (grid.size() == 0)
        throw std::invalid_argument("kolmogorov_max_distance: empty grid");
    for (Eigen::Index j = 0; j < sigma.size(); ++j)
        if (!(sigma[j] > 0.0))
            throw std::invalid_argument("kolmogorov_max_distance: sigma must be > 0");
    std::vector<double> m = max_statistics(w, sigma);
    std::sort(m.begin(), m.end());
    const int d = int(w.cols());
    DistanceEstimate out;
    out.method = "kolmogorov_max_exact_gaussian";
    out.n_a = w.rows();
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        const double emp = metrics_detail::ecdf(m, grid[g]);
        const double gauss = std::exp(double(d) * normal_log_cdf(grid[g]));
        out.value = std::max(out.value, std::fabs(emp - gauss));
    }
    out.standard_error = 0.5 / std::sqrt(double(w.rows()));
    return out;
}

// Both sides empirical (for correlated Gaussian specs).
inline DistanceEstimate kolmogorov_max_distance(const Matrix& w, const Matrix& z,
                                                const Vector& sigma,
                                                const Vector& grid) {
    if (grid.size() == 0)
        throw std::invalid_argument("kolmogorov_max_distance: empty grid");
    std::vector<double> mw = max_statistics(w, sigma);
    std::vector<double> mz = max_statistics(z, sigma);
    std::sort(mw.begin(), mw.end());
    std::sort(mz.begin(), mz.end());
    DistanceEstimate out;
    out.method = "kolmogorov_max_two_sample";
    out.n_a = w.rows();
    out.n_b = z.rows();
    for (Eigen::Index g = 0; g < grid.size(); ++g)
        out.value = std::max(out.value, std::fabs(metrics_detail::ecdf(mw, grid[g]) -
                                                  metrics_detail::ecdf(mz, grid[g])));
    out.standard_error =
        0.5 * std::sqrt(1.0 / double(w.rows()) + 1.0 / double(z.rows()));
    return out;
}

// P(max_j Z_j > x) for independent centered Gaussian coordinates, accurate in
// the far tail: 1 - prod Phi(x/sigma_j) = -expm1(sum log Phi(x/sigma_j)).
inline double gaussian_max_tail_independent(double x, const Vector& sigma) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < sigma.size(); ++j) {
        if (!(sigma[j] > 0.0))
            throw std::invalid_argument("gaussian_max_tail: sigma must be > 0");
        acc += normal_log_cdf(x / sigma[j]);
    }
    return -std::expm1(acc);
}

// Exact empirical 1-D p-Wasserstein distance between equal-size samples:
// sorted pairing is the optimal coupling on the line.
inline DistanceEstimate wasserstein_p_1d(std::vector<double> a,
                                         std::vector<double> b, double p) {
    if (a.size() != b.size())
        throw std::invalid_argument("wasserstein_p_1d: size mismatch");
    if (!(p >= 1.0)) throw std::invalid_argument("wasserstein_p_1d: p must be >= 1");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const size_t n = a.size();
    double s = 0.0, s2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double c = std::pow(std::fabs(a[i] - b[i]), p);
        s += c;
        s2 += c * c;
    }
    DistanceEstimate out;
    out.method = "wasserstein_1d_sorted";
    out.n_a = Eigen::Index(n);
    out.n_b = Eigen::Index(n);
    const double mean = s / double(n);
    out.value = std::pow(mean, 1.0 / p);
    // delta-method SE treating the matched costs as a mean estimate
    const double var = std::max(s2 / double(n) - mean * mean, 0.0);
    if (mean > 0.0)
        out.standard_error = out.value / (p * mean) * std::sqrt(var / double(n));
    return out;
}

// Empirical ||u.(W-Z)||_p over coupled pairs with a leave-one-out jackknife SE.
inline DistanceEstimate projected_lp(const Matrix& w, const Matrix& z,
                                     const Vector& u, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("projected_lp: p must be >= 1");
    if (u.norm() == 0.0) throw std::invalid_argument("projected_lp: u must be nonzero");
    const Eigen::Index n = w.rows();
    Vector costs(n);
    for (Eigen::Index i = 0; i < n; ++i)
        costs[i] = std::pow(std::fabs(u.dot((w.row(i) - z.row(i)).transpose())), p);
    const double s = costs.sum();
    DistanceEstimate out;
    out.method = "projected_lp";
    out.n_a = n;
    out.value = std::pow(s / double(n), 1.0 / p);
    if (n > 1) {
        double jack_mean = 0.0;
        Vector theta(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            theta[i] = std::pow((s - costs[i]) / double(n - 1), 1.0 / p);
            jack_mean += theta[i];
        }
        jack_mean /= double(n);
        const double ssq = (theta.array() - jack_mean).square().sum();
        out.standard_error = std::sqrt(double(n - 1) / double(n) * ssq);
    }
    return out;
}

struct InequalityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// P(x - eps < max Z <= x) <= (eps/s)(1 + x/s) exp(eps x / s^2) P(max Z > x)
// with s the smallest coordinate deviation; both sides exact.
inline InequalityCheck gmax_tail_check(const Vector& sigma, double x, double eps) {
    if (!(x >= 0.0 && eps > 0.0))
        throw std::invalid_argument("gmax_tail_check: need x >= 0, eps > 0");
    InequalityCheck out;
    double log_at = 0.0, log_below = 0.0;
    for (Eigen::Index j = 0; j < sigma.size(); ++j) {
        log_at += normal_log_cdf(x / sigma[j]);
        log_below += normal_log_cdf((x - eps) / sigma[j]);
    }
    out.lhs = std::exp(log_at) - std::exp(log_below);
    const double s = sigma.minCoeff();
    const double tail = -std::expm1(log_at);
    out.rhs = (eps / s) * (1.0 + x / s) * std::exp(eps * x / (s * s)) * tail;
    out.holds = out.lhs <= out.rhs + 1e-12;
    return out;
}

struct NazarovCheck {
    double measured = 0.0;  // sup_t P(|max_j Z_j - t| <= eta), iid coordinates
    double bound = 0.0;     // 2 eta (sqrt(2 log d) + 2)
    bool holds = false;
};

inline NazarovCheck nazarov_check(int d, double eta) {
    if (eta < 0.0) throw std::invalid_argument("nazarov_check: eta must be >= 0");
    NazarovCheck out;
    out.bound = 2.0 * eta * (std::sqrt(2.0 * std::log(double(d))) + 2.0);
    if (eta == 0.0) {
        out.holds = true;
        return out;
    }
    auto width = [&](double t) {
        return std::exp(double(d) * normal_log_cdf(t + eta)) -
               std::exp(double(d) * normal_log_cdf(t - eta));
    };
    const double hi = std::sqrt(2.0 * std::log(double(d) + 1.0)) + 4.0 + eta;
    double best = 0.0, best_t = 0.0;
    const int grid = 20000;
    for (int i = 0; i <= grid; ++i) {
        const double t = -hi + 2.0 * hi * i / grid;
        const double v = width(t);
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    // golden-section refinement around the best grid point
    double a = best_t - 2.0 * hi / grid, b = best_t + 2.0 * hi / grid;
    for (int it = 0; it < 80; ++it) {
        const double m1 = a + 0.381966 * (b - a), m2 = b - 0.381966 * (b - a);
        (width(m1) < width(m2) ? a : b) = (width(m1) < width(m2) ? m1 : m2);
    }
    out.measured = std::max(best, width(0.5 * (a + b)));
    out.holds = out.measured <= out.bound + 1e-12;
    return out;
}

struct BirnbaumCheck {
    double ratio = 0.0;  // phi(z) / (1 - Phi(z))
    double bound = 0.0;  // (sqrt(4 + z^2) + z) / 2
    bool holds = false;
};

inline BirnbaumCheck birnbaum_ratio(double z) {
    if (z < 0.0) throw std::invalid_argument("birnbaum_ratio: z must be >= 0");
    BirnbaumCheck out;
    out.ratio = normal_hazard(z);
    out.bound = 0.5 * (std::sqrt(4.0 + z * z) + z);
    out.holds = out.ratio <= out.bound + 1e-12;
    return out;
}

}  // namespace lcl
