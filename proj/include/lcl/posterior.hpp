#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "lcl/distributions.hpp"
#include "lcl/matrix.hpp"
#include "lcl/special.hpp"

// Tilted posteriors of the localization flow.  At time t with observation y,
// the conditional law of the terminal point has unnormalized Lebesgue
// log-density
//
//     l(x) = log rho(x) + |x|^2/2 - |x-y|^2/(2(1-t)),
//
// where rho is the target's Lebesgue density.  l is concave with curvature
// <= -t/(1-t), so the posterior is t/(1-t)-uniformly log-concave.  The drift
// of the terminal-pinned diffusion is (m(t,y) - y)/(1-t) with m the posterior
// mean; only gradients of logs enter, so the normalization convention cancels.

namespace lcl {

struct QuadratureError : std::runtime_error {
    QuadratureError(const std::string& msg, double achieved)
        : std::runtime_error(msg), achieved_tolerance(achieved) {}
    double achieved_tolerance;
};

struct SnisDegenerateError : std::runtime_error {
    SnisDegenerateError(const std::string& msg, double ess_in)
        : std::runtime_error(msg), ess(ess_in) {}
    double ess;
};

struct RejectionError : std::runtime_error {
    RejectionError(const std::string& msg, double rate)
        : std::runtime_error(msg), acceptance_rate(rate) {}
    double acceptance_rate;
};

struct PosteriorMoments {
    Vector mean;
    Matrix cov;
    double t = 0.0;
    Vector y;
};

struct Moments1D {
    double mean = 0.0;
    double var = 1.0;
};

// Mean and variance of N(m0, sigma^2) conditioned on exceeding `lo`.
inline Moments1D truncated_normal_moments(double m0, double sigma, double lo) {
    const double alpha = (lo - m0) / sigma;
    Moments1D out;
    // var = sigma^2 (1 + alpha h - h^2) = sigma^2 (1 + h (alpha - h)); the
    // difference alpha - h is computed by series for deep truncation where
    // direct subtraction loses digits.
    if (alpha > 1e4) {
        const double ia = 1.0 / alpha, ia2 = ia * ia;
        const double amh = -ia * (1.0 - 2.0 * ia2 + 10.0 * ia2 * ia2);
        const double h = alpha - amh;
        out.mean = m0 + sigma * h;
        out.var = sigma * sigma * (1.0 + h * amh);
        return out;
    }
    const double h = normal_hazard(alpha);
    out.mean = m0 + sigma * h;
    out.var = sigma * sigma * (1.0 + h * (alpha - h));
    return out;
}

// Draw from N(m0, sigma^2) | X > lo by inverse CDF on the upper tail.
inline double truncated_normal_sample(double m0, double sigma, double lo, Rng& rng) {
    const double alpha = (lo - m0) / sigma;
    const double q_alpha = normal_upper(alpha);
    const double q = q_alpha * rng.uniform();
    if (q <= 0.0) return lo;  // underflow guard at absurd truncation depth
    return m0 - sigma * normal_icdf(q);
}

// 1-D tilted coordinate posterior: base law tilted at (t, y_j).
class Tilted1D {
  public:
    Tilted1D(const Coord1D& base, double t, double y)
        : base_(&base), t_(t), y_(y), inv1mt_(1.0 / (1.0 - t)) {
        if (!(t >= 0.0 && t < 1.0))
            throw std::invalid_argument("Tilted1D: t must be in [0,1)");
    }

    double kappa() const { return t_ * inv1mt_; }
    double support_lo() const { return base_->support_lo(); }

    double logpdf_unnorm(double x) const {
        const double b = base_->log_density(x);
        if (b == kNegInf) return kNegInf;
        const double r = x - y_;
        return b + 0.5 * x * x - 0.5 * r * r * inv1mt_;
    }
    double dlogpdf(double x) const {
        return base_->score(x) + x - (x - y_) * inv1mt_;
    }
    double d2logpdf(double x) const {
        return base_->curvature(x) - kappa();
    }

    // Argmax of the unnormalized log density over the open support.
    double mode() const {
        const double lo = support_lo();
        double a = std::isfinite(lo) ? lo + 1e-12 * std::max(1.0, std::fabs(lo)) : -1.0;
        if (!std::isfinite(lo)) {
            a = y_;
            double step = 1.0;
            while (dlogpdf(a) < 0.0) { a -= step; step *= 2.0; }
        }
        if (dlogpdf(a) <= 0.0) return a;  // boundary mode
        double b = std::max(a + 1.0, y_ + 1.0), step = 1.0;
        while (dlogpdf(b) > 0.0) {
            b += step;
            step *= 2.0;
            if (b > 1e12)
                throw std::runtime_error("Tilted1D: tilted density has no mode (non-integrable tilt)");
        }
        // Bisection on the decreasing derivative.
        for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::fabs(b)); ++it) {
            const double m = 0.5 * (a + b);
            (dlogpdf(m) > 0.0 ? a : b) = m;
        }
        return 0.5 * (a + b);
    }

  private:
    const Coord1D* base_;
    double t_, y_, inv1mt_;
};

namespace quad_detail {

struct Triple {
    double v[3];
    double operator[](int i) const { return v[i]; }
};

inline Triple operator+(const Triple& a, const Triple& b) {
    return {{a[0] + b[0], a[1] + b[1], a[2] + b[2]}};
}
inline Triple operator-(const Triple& a, const Triple& b) {
    return {{a[0] - b[0], a[1] - b[1], a[2] - b[2]}};
}
inline Triple operator*(double c, const Triple& a) {
    return {{c * a[0], c * a[1], c * a[2]}};
}

template <typename F>
void adaptive_simpson(const F& f, double a, double b, const Triple& fa,
                      const Triple& fm, const Triple& fb, const Triple& whole,
                      double tol, int depth, Triple& acc, double& worst) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const Triple flm = f(lm), frm = f(rm);
    const double h6 = (b - a) / 12.0;
    const Triple left = h6 * (fa + 4.0 * flm + fm);
    const Triple right = h6 * (fm + 4.0 * frm + fb);
    const Triple both = left + right;
    const Triple delta = both - whole;
    const double err = std::max({std::fabs(delta[0]), std::fabs(delta[1]),
                                 std::fabs(delta[2])});
    if (depth <= 0 || err < 15.0 * tol) {
        acc = acc + both + (1.0 / 15.0) * delta;
        worst = std::max(worst, err / 15.0);
        return;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc, worst);
    adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc, worst);
}

}  // namespace quad_detail

// Mean/variance of the 1-D tilted posterior by adaptive quadrature on the
// region where the log density is within `drop` of its maximum (e^-40 is
// below double-precision relative resolution).
inline Moments1D tilted_moments_quadrature(const Tilted1D& g, double rel_tol = 1e-8,
                                           double drop = 40.0) {
    const double xm = g.mode();
    const double lmax = g.logpdf_unnorm(xm);

    auto cut = [&](double inside, double outside) {
        // Last point with logpdf >= lmax - drop, by bisection.
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (inside + outside);
            if (mid == inside || mid == outside) break;
            if (g.logpdf_unnorm(mid) > lmax - drop)
                inside = mid;
            else
                outside = mid;
        }
        return inside;
    };
    double hi = xm + 1.0, step = 1.0;
    while (g.logpdf_unnorm(hi) > lmax - drop) { hi += step; step *= 2.0; }
    hi = cut(xm, hi);
    double lo;
    const double slo = g.support_lo();
    if (std::isfinite(slo)) {
        const double edge = slo + 1e-14 * std::max(1.0, std::fabs(slo));
        lo = g.logpdf_unnorm(edge) > lmax - drop ? edge : cut(xm, edge);
    } else {
        lo = xm - 1.0;
        step = 1.0;
        while (g.logpdf_unnorm(lo) > lmax - drop) { lo -= step; step *= 2.0; }
        lo = cut(xm, lo);
    }

    // Integrate in coordinates shifted by the mode to limit cancellation.
    auto f = [&](double x) -> quad_detail::Triple {
        const double w = std::exp(g.logpdf_unnorm(x) - lmax);
        const double u = x - xm;
        return {{w, w * u, w * u * u}};
    };
    quad_detail::Triple acc{{0, 0, 0}};
    double worst = 0.0;
    const int pieces = 16;
    for (int k = 0; k < pieces; ++k) {
        const double a = lo + (hi - lo) * k / pieces;
        const double b = lo + (hi - lo) * (k + 1) / pieces;
        const double m = 0.5 * (a + b);
        const auto fa = f(a), fm = f(m), fb = f(b);
        const quad_detail::Triple whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
        quad_detail::adaptive_simpson(f, a, b, fa, fm, fb, whole,
                                      rel_tol * (hi - lo) / pieces / 4.0, 48, acc,
                                      worst);
    }
    if (!(acc[0] > 0.0) || !std::isfinite(acc[0])) {
        throw QuadratureError("tilted_moments_quadrature: normalization vanished",
                              std::numeric_limits<double>::infinity());
    }
    const double rel = worst / acc[0];
    if (rel > rel_tol * 100.0)
        throw QuadratureError("tilted_moments_quadrature: did not converge", rel);
    Moments1D out;
    const double mu_u = acc[1] / acc[0];
    out.mean = xm + mu_u;
    out.var = acc[2] / acc[0] - mu_u * mu_u;
    return out;
}

// Closed-form 1-D posterior for the standardized exponential coordinate:
// a normal N((y-(1-t))/t, (1-t)/t) truncated to (-1, inf).
inline Moments1D tilted_moments_exponential(double t, double y) {
    const double m0 = (y - (1.0 - t)) / t;
    const double sigma = std::sqrt((1.0 - t) / t);
    return truncated_normal_moments(m0, sigma, -1.0);
}

inline Moments1D tilted_moments_coord(const Coord1D& base, double t, double y,
                                      bool force_quadrature = false) {
    if (t == 0.0) return Moments1D{base.mean(), base.variance()};
    if (!force_quadrature && dynamic_cast<const StdExponential1D*>(&base))
        return tilted_moments_exponential(t, y);
    return tilted_moments_quadrature(Tilted1D(base, t, y));
}

// Posterior mean and covariance at (t, y).  Gaussian families are closed
// form; product families reduce to per-coordinate problems (closed form for
// the exponential coordinate, adaptive quadrature otherwise).
inline PosteriorMoments posterior_moments(const Family& family, double t,
                                          const Vector& y,
                                          bool force_quadrature = false) {
    if (!(t >= 0.0 && t < 1.0))
        throw std::invalid_argument("posterior_moments: t must be in [0,1)");
    const int d = family.dimension();
    PosteriorMoments out;
    out.t = t;
    out.y = y;
    if (t == 0.0) {
        out.mean = family.mean();
        out.cov = family.covariance();
        return out;
    }
    if (family.is_gaussian()) {
        const double kappa = t / (1.0 - t);
        Matrix precision = family.sigma_inv() + kappa * Matrix::Identity(d, d);
        out.cov = sym_inverse(precision, 0.0);
        out.mean = out.cov * (y / (1.0 - t));
        return out;
    }
    out.mean.resize(d);
    out.cov = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j) {
        const Moments1D mj =
            tilted_moments_coord(family.coord(), t, y[j], force_quadrature);
        out.mean[j] = mj.mean;
        out.cov(j, j) = mj.var;
    }
    return out;
}

// Drift of the terminal-pinned diffusion: (m(t,y) - y)/(1-t); at t=0 the
// continuous extension m(0,y) = E[X] applies.
inline Vector follmer_drift(const Family& family, double t, const Vector& y,
                            bool force_quadrature = false) {
    const PosteriorMoments pm = posterior_moments(family, t, y, force_quadrature);
    return (pm.mean - y) / (1.0 - t);
}

struct SnisEstimate {
    Vector drift;      // estimate of (m(t,y) - y)/(1-t)
    Vector drift_se;   // per-coordinate standard errors
    Vector post_mean;  // SNIS posterior mean m(t,y)
    Matrix post_cov;   // SNIS posterior covariance
    double ess = 0.0;
    double t = 0.0;
};

// Self-normalized importance-sampling estimate of the smoothed score at
// (t, y) from a pool of exact draws of the target.  Weights are
// exp(|w|^2/2 - |w-y|^2/(2(1-t))) up to a constant, i.e. the localization
// tilt in Lebesgue form.
inline SnisEstimate smoothed_score_snis_pool(const Matrix& pool, double t,
                                             const Vector& y,
                                             double min_ess = 50.0) {
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("smoothed_score_snis: t must be in (0,1)");
    const Eigen::Index p = pool.rows();
    const int d = int(pool.cols());
    const double inv1mt = 1.0 / (1.0 - t);
    Vector logw(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const double n2 = pool.row(k).squaredNorm();
        const double r2 = (pool.row(k).transpose() - y).squaredNorm();
        logw[k] = 0.5 * n2 - 0.5 * r2 * inv1mt;
    }
    const double lmax = logw.maxCoeff();
    Vector w = (logw.array() - lmax).exp();
    const double sw = w.sum();
    const double sw2 = w.squaredNorm();
    const double ess = sw * sw / sw2;
    if (!(ess >= min_ess)) {
        std::ostringstream os;
        os << "smoothed_score_snis: degenerate weights (ESS " << ess << " < "
           << min_ess << ")";
        throw SnisDegenerateError(os.str(), ess);
    }
    SnisEstimate out;
    out.t = t;
    out.ess = ess;
    out.post_mean = (pool.transpose() * w) / sw;
    out.post_cov = Matrix::Zero(d, d);
    Vector se2 = Vector::Zero(d);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Vector r = pool.row(k).transpose() - out.post_mean;
        out.post_cov += w[k] * (r * r.transpose());
        se2.array() += (w[k] * w[k]) * r.array().square();
    }
    out.post_cov /= sw;
    out.drift = (out.post_mean - y) * inv1mt;
    out.drift_se = (se2.array().sqrt() / sw * inv1mt).matrix();
    return out;
}

template <typename SamplerFn>
SnisEstimate smoothed_score_snis(SamplerFn&& sampler, double t, const Vector& y,
                                 Eigen::Index batch, std::uint64_t seed) {
    if (batch < 1000)
        throw std::invalid_argument("smoothed_score_snis: batch must be >= 1000");
    Rng rng(seed);
    Matrix pool(batch, y.size());
    for (Eigen::Index k = 0; k < batch; ++k) pool.row(k) = sampler(rng).transpose();
    return smoothed_score_snis_pool(pool, t, y);
}

// Exact draw from the 1-D tilted posterior: inverse-CDF truncated normal for
// the exponential coordinate, rejection from the curvature-matched Gaussian
// envelope otherwise.  The envelope N(mode, (1-t)/t) dominates exactly since
// the tilted log density has curvature <= -t/(1-t) and the mode maximizes it.
inline double tilted_sample_coord(const Coord1D& base, double t, double y,
                                  Rng& rng) {
    if (dynamic_cast<const StdExponential1D*>(&base)) {
        const double m0 = (y - (1.0 - t)) / t;
        const double sigma = std::sqrt((1.0 - t) / t);
        return truncated_normal_sample(m0, sigma, -1.0, rng);
    }
    Tilted1D g(base, t, y);
    const double xm = g.mode();
    const double lmax = g.logpdf_unnorm(xm);
    const double kappa = g.kappa();
    const double sd = 1.0 / std::sqrt(kappa);
    const long max_attempts = 200000;
    for (long a = 1; a <= max_attempts; ++a) {
        const double x = xm + sd * rng.normal();
        const double lp = g.logpdf_unnorm(x);
        if (lp == kNegInf) continue;
        const double log_accept = lp - lmax + 0.5 * kappa * (x - xm) * (x - xm);
        if (std::log(rng.uniform()) < log_accept) return x;
    }
    throw RejectionError("tilted_sample_coord: acceptance rate below 1e-4",
                         1.0 / double(max_attempts));
}

// Exact draw from the posterior at (t, y).
inline Vector posterior_sample(const Family& family, double t, const Vector& y,
                               Rng& rng) {
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("posterior_sample: t must be in (0,1)");
    const int d = family.dimension();
    Vector x(d);
    if (family.is_gaussian()) {
        const PosteriorMoments pm = posterior_moments(family, t, y);
        const Matrix root = sym_sqrt(pm.cov, 0.0);
        for (int j = 0; j < d; ++j) x[j] = rng.normal();
        return pm.mean + root * x;
    }
    for (int j = 0; j < d; ++j)
        x[j] = tilted_sample_coord(family.coord(), t, y[j], rng);
    return x;
}

inline Vector posterior_sample(const Family& family, double t, const Vector& y,
                               std::uint64_t seed) {
    Rng rng(seed);
    return posterior_sample(family, t, y, rng);
}

}  // namespace lcl
