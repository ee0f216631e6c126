#pragma once

#include <atomic>
#include <thread>

#include "lcl/distributions.hpp"
#include "lcl/metrics.hpp"
#include "lcl/report.hpp"

// Rate-sweep and moderate-deviation harnesses.  W is drawn directly from its
// law (not through the diffusion): the theorems concern the law of W, and
// direct sampling keeps discretization bias out of the headline numbers.
// Every replicate has a seed derived from (master, task kind, indices), so
// results are bit-identical for any worker count.

namespace lcl {

// Static contiguous partition over [0, n); deterministic regardless of the
// number of workers because tasks write only to their own index.
template <typename Fn>
void parallel_for_indexed(Eigen::Index n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (Eigen::Index i = 0; i < n; ++i) fn(i);
        return;
    }
    const int t = int(std::min<Eigen::Index>(threads, n));
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < t; ++w) {
        const Eigen::Index lo = n * w / t, hi = n * (w + 1) / t;
        pool.emplace_back([&, lo, hi] {
            try {
                for (Eigen::Index i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// One draw of W = n^{-1/2} sum of n i.i.d. family vectors.  Exponential
// coordinates use the exact Gamma sum law; the gaussian family is closed
// under summation; other product families sum explicitly.
inline void sum_law_draw(const Family& family, Eigen::Index n, Rng& rng,
                         Vector& out) {
    const int d = family.dimension();
    switch (family.kind()) {
        case FamilyKind::gaussian: {
            Vector g(d);
            for (int j = 0; j < d; ++j) g[j] = rng.normal();
            out = family.sigma_sqrt() * g;
            return;
        }
        case FamilyKind::product_exponential: {
            const double nn = double(n), rt = std::sqrt(nn);
            for (int j = 0; j < d; ++j) out[j] = (rng.gamma(nn) - nn) / rt;
            return;
        }
        case FamilyKind::product_weibull: {
            const Coord1D& c = family.coord();
            out.setZero();
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) out[j] += c.sample(rng);
            out /= std::sqrt(double(n));
            return;
        }
    }
}

struct DegenerateRateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientTailError : std::runtime_error {
    InsufficientTailError(const std::string& m, Eigen::Index needed)
        : std::runtime_error(m), suggested_reps(needed) {}
    Eigen::Index suggested_reps;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // bootstrap 95% interval for the slope
    std::vector<double> log_n, log_err, residuals;
};

inline RateFit fit_power_law(const std::vector<double>& log_n,
                             const std::vector<double>& log_err) {
    if (log_n.size() != log_err.size() || log_n.size() < 2)
        throw std::invalid_argument("fit_power_law: need matching points");
    const double n = double(log_n.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < log_n.size(); ++i) {
        sx += log_n[i];
        sy += log_err[i];
        sxx += log_n[i] * log_n[i];
        sxy += log_n[i] * log_err[i];
    }
    RateFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    f.log_n = log_n;
    f.log_err = log_err;
    for (size_t i = 0; i < log_n.size(); ++i)
        f.residuals.push_back(log_err[i] - f.slope * log_n[i] - f.intercept);
    return f;
}

struct RateSweepConfig {
    Family family = Family::product_exponential(1);
    std::vector<Eigen::Index> ns;
    Eigen::Index reps = 10000;
    int grid_points = 201;
    int bootstrap = 200;
    int threads = 1;
    std::uint64_t seed = 1;
};

struct RateSweepResult {
    std::vector<DistanceEstimate> distances;
    RateFit fit;
    nlohmann::json results;
};

namespace exp_detail {

// Histogram of samples over the bins induced by the threshold grid.
inline std::vector<Eigen::Index> grid_histogram(const std::vector<double>& xs,
                                                const Vector& grid) {
    std::vector<Eigen::Index> counts(size_t(grid.size()) + 1, 0);
    for (double x : xs) {
        const auto it = std::upper_bound(grid.data(), grid.data() + grid.size(), x);
        ++counts[size_t(it - grid.data())];
    }
    return counts;
}

inline double distance_from_counts(const std::vector<Eigen::Index>& counts,
                                   Eigen::Index total, const Vector& grid, int d) {
    double best = 0.0;
    Eigen::Index cum = 0;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        cum += counts[size_t(g)];
        const double emp = double(cum) / double(total);
        const double gauss = std::exp(double(d) * normal_log_cdf(grid[g]));
        best = std::max(best, std::fabs(emp - gauss));
    }
    return best;
}

inline Eigen::Index binomial_draw(Rng& rng, Eigen::Index n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    // inversion by summing the pmf recurrence; expected O(np)
    const double q = 1.0 - p;
    double pmf = std::pow(q, double(n));
    if (pmf == 0.0) {
        // far-from-tail regime: normal approximation snapped to range
        const double mu = double(n) * p, sd = std::sqrt(mu * q);
        const double v = std::round(mu + sd * rng.normal());
        return std::min<Eigen::Index>(n, std::max<Eigen::Index>(0, Eigen::Index(v)));
    }
    double u = rng.uniform();
    Eigen::Index k = 0;
    double cdf = pmf;
    while (u > cdf && k < n) {
        pmf *= (double(n - k) / double(k + 1)) * (p / q);
        ++k;
        cdf += pmf;
    }
    return k;
}

inline std::vector<Eigen::Index> multinomial_counts(
    Rng& rng, Eigen::Index total, const std::vector<Eigen::Index>& base) {
    std::vector<Eigen::Index> out(base.size(), 0);
    Eigen::Index remaining = total, base_left = total;
    for (size_t i = 0; i + 1 < base.size(); ++i) {
        if (remaining == 0 || base_left == 0) break;
        const double p = double(base[i]) / double(base_left);
        const Eigen::Index k = binomial_draw(rng, remaining, p);
        out[i] = k;
        remaining -= k;
        base_left -= base[i];
    }
    out[base.size() - 1] = remaining;
    return out;
}

}  // namespace exp_detail

// For each n, the max-statistic Kolmogorov distance between W and the exact
// Gaussian max law, followed by a log-log OLS fit with a bootstrap interval
// over replicates.
inline RateSweepResult rate_sweep(const RateSweepConfig& cfg) {
    if (cfg.ns.size() < 4)
        throw std::invalid_argument("rate_sweep: need at least 4 values of n");
    if (cfg.reps < 2) throw std::invalid_argument("rate_sweep: reps must be >= 2");
    const int d = cfg.family.dimension();
    Vector sigma(d);
    const Matrix cov = cfg.family.covariance();
    for (int j = 0; j < d; ++j) sigma[j] = std::sqrt(cov(j, j));
    const Vector grid = default_threshold_grid(d, cfg.grid_points);

    RateSweepResult out;
    std::vector<std::vector<Eigen::Index>> histograms;
    std::vector<double> log_n, log_err;
    for (size_t a = 0; a < cfg.ns.size(); ++a) {
        std::vector<double> maxstat(size_t(cfg.reps));
        parallel_for_indexed(cfg.reps, cfg.threads, [&](Eigen::Index r) {
            Rng rng = Rng::derived(cfg.seed, {0x5Aull, std::uint64_t(a), std::uint64_t(r)});
            Vector w(d);
            sum_law_draw(cfg.family, cfg.ns[a], rng, w);
            double m = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < d; ++j) m = std::max(m, w[j] / sigma[j]);
            maxstat[size_t(r)] = m;
        });
        histograms.push_back(exp_detail::grid_histogram(maxstat, grid));
        DistanceEstimate de;
        de.method = "kolmogorov_max_exact_gaussian";
        de.n_a = cfg.reps;
        de.value =
            exp_detail::distance_from_counts(histograms.back(), cfg.reps, grid, d);
        de.standard_error = 0.5 / std::sqrt(double(cfg.reps));
        out.distances.push_back(de);
    }

    const double dkw95 = dkw_envelope(cfg.reps, 0.05);
    bool all_null = true;
    for (const auto& de : out.distances) all_null = all_null && de.value <= 3.0 * dkw95;
    if (all_null)
        throw DegenerateRateError(
            "rate_sweep: all distances are within 3 DKW envelopes of zero; "
            "no rate to fit");

    for (size_t a = 0; a < cfg.ns.size(); ++a) {
        log_n.push_back(std::log(double(cfg.ns[a])));
        log_err.push_back(std::log(out.distances[a].value));
    }
    out.fit = fit_power_law(log_n, log_err);

    std::vector<double> boot_slopes;
    for (int b = 0; b < cfg.bootstrap; ++b) {
        Rng rng = Rng::derived(cfg.seed, {0x5Bull, std::uint64_t(b)});
        std::vector<double> le;
        for (size_t a = 0; a < cfg.ns.size(); ++a) {
            const auto counts =
                exp_detail::multinomial_counts(rng, cfg.reps, histograms[a]);
            le.push_back(std::log(std::max(
                exp_detail::distance_from_counts(counts, cfg.reps, grid, d), 1e-12)));
        }
        boot_slopes.push_back(fit_power_law(log_n, le).slope);
    }
    std::sort(boot_slopes.begin(), boot_slopes.end());
    out.fit.ci_lo = boot_slopes[size_t(0.025 * (boot_slopes.size() - 1))];
    out.fit.ci_hi = boot_slopes[size_t(0.975 * (boot_slopes.size() - 1))];

    out.results["ns"] = cfg.ns;
    out.results["distances"] = nlohmann::json::array();
    for (size_t a = 0; a < cfg.ns.size(); ++a)
        out.results["distances"].push_back(
            {{"n", cfg.ns[a]},
             {"value", out.distances[a].value},
             {"se", out.distances[a].standard_error}});
    out.results["slope"] = out.fit.slope;
    out.results["intercept"] = out.fit.intercept;
    out.results["slope_ci"] = {out.fit.ci_lo, out.fit.ci_hi};
    return out;
}

struct MdRatioConfig {
    Family family = Family::product_exponential(1);
    std::vector<Eigen::Index> ns;
    std::vector<double> xs;
    Eigen::Index reps = 100000;
    int threads = 1;
    std::uint64_t seed = 1;
    double varpi_reference = 0.0;  // family poincare bound when 0
};

struct MdRatioRow {
    Eigen::Index n = 0;
    double x = 0.0;
    double ratio = 0.0;
    double se = 0.0;
    Eigen::Index tail_hits = 0;
    double bookkeeping_p = 0.0;    // log d + log(smin/Delta) + x^2/smax^2
    double bookkeeping_eps = 0.0;  // p^alpha Delta e at alpha = 1
};

struct MdRatioResult {
    std::vector<MdRatioRow> rows;
    nlohmann::json results;
};

// Tail-probability ratios P(max_j W_j > x) / P(max_j Z_j > x) with the
// Gaussian denominator exact; the admissible window
// x <= smin (smin^2 n / (smax^2 varpi))^{1/6} is enforced up front.
inline MdRatioResult md_ratio_experiment(const MdRatioConfig& cfg) {
    const int d = cfg.family.dimension();
    const Matrix cov = cfg.family.covariance();
    Vector sigma(d);
    for (int j = 0; j < d; ++j) sigma[j] = std::sqrt(cov(j, j));
    const double smin = sigma.minCoeff(), smax = sigma.maxCoeff();
    const double varpi = cfg.varpi_reference > 0.0 ? cfg.varpi_reference
                                                   : cfg.family.poincare_bound();
    for (Eigen::Index n : cfg.ns) {
        const double window =
            smin * std::pow(smin * smin * double(n) / (smax * smax * varpi), 1.0 / 6.0);
        for (double x : cfg.xs)
            if (x > window) {
                std::ostringstream os;
                os << "md_ratio: x=" << x << " outside the admissible window [0, "
                   << window << "] at n=" << n << " (varpi=" << varpi << ")";
                throw std::invalid_argument(os.str());
            }
    }

    MdRatioResult out;
    out.results["rows"] = nlohmann::json::array();
    for (size_t a = 0; a < cfg.ns.size(); ++a) {
        const Eigen::Index n = cfg.ns[a];
        std::vector<double> maxw(size_t(cfg.reps));
        parallel_for_indexed(cfg.reps, cfg.threads, [&](Eigen::Index r) {
            Rng rng = Rng::derived(cfg.seed, {0x6Aull, std::uint64_t(a), std::uint64_t(r)});
            Vector w(d);
            sum_law_draw(cfg.family, n, rng, w);
            maxw[size_t(r)] = w.maxCoeff();
        });
        for (double x : cfg.xs) {
            Eigen::Index hits = 0;
            for (double m : maxw) hits += m > x;
            if (hits < 30) {
                std::ostringstream os;
                const Eigen::Index needed = Eigen::Index(
                    60.0 * double(cfg.reps) / std::max<double>(1.0, double(hits)));
                os << "md_ratio: only " << hits << " tail hits at n=" << n
                   << ", x=" << x << "; rerun with reps >= " << needed;
                throw InsufficientTailError(os.str(), needed);
            }
            const double denom = gaussian_max_tail_independent(x, sigma);
            const double phat = double(hits) / double(cfg.reps);
            // Wilson-interval width as the 1-sigma uncertainty of phat
            const double z = 1.0;
            const double nn = double(cfg.reps);
            const double half =
                z * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn)) /
                (1.0 + z * z / nn);
            MdRatioRow row;
            row.n = n;
            row.x = x;
            row.ratio = phat / denom;
            row.se = half / denom;
            row.tail_hits = hits;
            const double delta = smax * std::sqrt(varpi / double(n));
            row.bookkeeping_p =
                std::log(double(d)) + std::log(smin / delta) + x * x / (smax * smax);
            row.bookkeeping_eps = row.bookkeeping_p * delta * M_E;
            out.rows.push_back(row);
            out.results["rows"].push_back({{"n", n},
                                           {"x", x},
                                           {"ratio", row.ratio},
                                           {"se", row.se},
                                           {"tail_hits", hits},
                                           {"p", row.bookkeeping_p},
                                           {"eps", row.bookkeeping_eps}});
        }
    }
    return out;
}

}  // namespace lcl
