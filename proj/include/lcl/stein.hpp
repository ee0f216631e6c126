#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lcl/sde.hpp"

// Stein kernels through the Langevin representation: tau(x) is the time
// integral of the expected Jacobian flow started at x.  Closed-form 1-D
// kernels (tail integral over density) serve as oracles.

namespace lcl {

// 1/erfcx(z), stable for all z: for very negative z, erfcx blows up like
// 2 exp(z^2) and the reciprocal underflows gracefully.
inline double inv_erfcx(double z) {
    if (z < -6.0) {
        const double t = std::exp(-z * z);
        if (t == 0.0) return 0.0;
        return 0.5 * t / (1.0 - 0.5 * t * erfcx_cody(-z));
    }
    return 1.0 / erfcx_cody(z);
}

// Law of sqrt(1-a) (Exp(1)-1) + sqrt(a) G: the Gaussian-smoothed standardized
// exponential (an EMG law).  Smooth, positive everywhere, score and curvature
// in closed form through erfcx.
class SmoothedExponential1D final : public Coord1D {
  public:
    explicit SmoothedExponential1D(double a) : a_(a) {
        if (!(a > 0.0 && a < 1.0))
            throw std::invalid_argument("SmoothedExponential1D: a must be in (0,1)");
        b_ = std::sqrt(1.0 - a);
        s_ = std::sqrt(a);
        lam_ = 1.0 / b_;
    }

    double z_of(double x) const { return (lam_ * s_ * s_ - (x + b_)) / (kSqrt2 * s_); }

    double log_density(double x) const override {
        const double z = z_of(x);
        const double le = z > -6.0 ? -z * z + std::log(erfcx_cody(z))
                                   : std::log(erfc_cody(z));
        return std::log(0.5 * lam_) + 0.5 * lam_ * lam_ * s_ * s_ -
               lam_ * (x + b_) + le;
    }
    double score(double x) const override {
        const double r = inv_erfcx(z_of(x));
        return -lam_ + (2.0 * kInvSqrt2Pi / s_) * r;
    }
    double curvature(double x) const override {
        const double z = z_of(x);
        if (z > 1e3) {
            const double iz2 = 1.0 / (z * z);
            return (-1.0 - 0.5 * iz2) / (s_ * s_);
        }
        const double r = inv_erfcx(z);
        const double inv_sqrt_pi = 0.5641895835477562869;
        return (2.0 * z * r) * inv_sqrt_pi / (s_ * s_) -
               (2.0 / M_PI) * r * r / (s_ * s_);
    }
    double sample(Rng& rng) const override {
        return b_ * (rng.exponential() - 1.0) + s_ * rng.normal();
    }
    double smoothing() const { return a_; }

  private:
    double a_, b_, s_, lam_;
};

inline LangevinTarget langevin_target_coord(std::shared_ptr<const Coord1D> coord,
                                            int d, double ulc_epsilon,
                                            double poincare) {
    LangevinTarget t;
    t.d = d;
    t.ulc_epsilon = ulc_epsilon;
    t.poincare = poincare;
    t.score = [coord, d](const Vector& x) {
        Vector out(d);
        for (int j = 0; j < d; ++j) out[j] = coord->score(x[j]);
        return out;
    };
    t.hess_v = [coord, d](const Vector& x) {
        Matrix h = Matrix::Zero(d, d);
        for (int j = 0; j < d; ++j) h(j, j) = -coord->curvature(x[j]);
        return h;
    };
    return t;
}

// Langevin target for the Gaussian-smoothed standardized exponential in
// dimension d.  The smoothing keeps the potential twice differentiable on all
// of R^d; the Poincare bound 4(1-a)+a follows from subadditivity under
// independent sums.
inline LangevinTarget smoothed_exponential_target(int d, double a) {
    auto coord = std::make_shared<SmoothedExponential1D>(a);
    return langevin_target_coord(coord, d, 0.0, 4.0 * (1.0 - a) + a);
}

struct SteinKernelEstimate {
    Matrix points;               // m x d evaluation points
    std::vector<Matrix> tau;     // m estimates, d x d
    std::vector<Matrix> se;      // total per-entry uncertainty (MC + horizon)
    double t_horizon = 0.0;
    Eigen::Index n_paths = 0;
    std::uint64_t seed = 0;
};

// tau(x) ~= trapezoid over [0,T] of the path-mean Jacobian.  The reported SE
// combines the across-path standard error with a horizon-truncation term
// |mean J_T| * scale, scale = 1/ulc_epsilon when known (geometric decay) and
// the Poincare bound otherwise; without it the Gaussian case has zero MC
// variance and any finite-horizon bias would be unreportable.
inline SteinKernelEstimate stein_kernel_langevin(const LangevinTarget& target,
                                                 const Matrix& points, double t_horizon,
                                                 Eigen::Index n_paths, int steps,
                                                 std::uint64_t seed) {
    if (target.ulc_epsilon > 0.0 &&
        std::exp(-target.ulc_epsilon * t_horizon) > 0.01 + 1e-12)
        throw std::invalid_argument(
            "stein_kernel_langevin: horizon too short for exp(-eps T) <= 0.01");
    const int d = target.d;
    SteinKernelEstimate out;
    out.points = points;
    out.t_horizon = t_horizon;
    out.n_paths = n_paths;
    out.seed = seed;
    const double tail_scale =
        target.ulc_epsilon > 0.0 ? 1.0 / target.ulc_epsilon : target.poincare;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        Matrix mean = Matrix::Zero(d, d), m2 = Matrix::Zero(d, d);
        Matrix tail_mean = Matrix::Zero(d, d);
        for (Eigen::Index p = 0; p < n_paths; ++p) {
            const LangevinRun run = simulate_langevin_with_jacobian(
                target, points.row(i).transpose(), t_horizon, steps,
                derive_seed(seed, {0x57ull, std::uint64_t(i), std::uint64_t(p)}));
            Matrix integral = Matrix::Zero(d, d);
            for (int k = 0; k < steps; ++k) {
                const double dt = run.path.grid[k + 1] - run.path.grid[k];
                integral += 0.5 * dt * (run.jacobian[size_t(k)] + run.jacobian[size_t(k) + 1]);
            }
            mean += integral;
            m2 += integral.cwiseProduct(integral);
            tail_mean += run.jacobian.back();
        }
        mean /= double(n_paths);
        tail_mean /= double(n_paths);
        const Matrix var =
            (m2 / double(n_paths) - mean.cwiseProduct(mean)).cwiseMax(0.0);
        const Matrix mc_se = (var / double(n_paths)).cwiseSqrt();
        const Matrix trunc = (tail_mean * tail_scale).cwiseAbs();
        out.tau.push_back(mean);
        out.se.push_back(
            (mc_se.cwiseProduct(mc_se) + trunc.cwiseProduct(trunc)).cwiseSqrt());
    }
    return out;
}

// Exact 1-D Stein kernel tau(x) = int_x^inf y rho(y) dy / rho(x), by adaptive
// quadrature of the tail integral.
inline double stein_kernel_1d_exact(const Coord1D& coord, double x,
                                    double rel_tol = 1e-8) {
    const double lx = coord.log_density(x);
    if (lx == kNegInf)
        throw std::invalid_argument("stein_kernel_1d_exact: x outside support");
    // Tail cutoff: log(|y| rho(y)) < lx + log tol - 45.
    double hi = std::max(x + 1.0, 1.0), step = 1.0;
    auto log_term = [&](double y) {
        return coord.log_density(y) + std::log(std::max(std::fabs(y), 1e-6));
    };
    while (log_term(hi) > lx - 45.0) { hi += step; step *= 2.0; }
    auto f = [&](double y) { return y * std::exp(coord.log_density(y) - lx); };
    // Adaptive Simpson on [x, hi].
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double a, double b, double fa, double fm, double fb, double whole,
            int depth) -> double {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (depth <= 0 || std::fabs(delta) < 15.0 * rel_tol * (std::fabs(whole) + 1e-12))
            return left + right + delta / 15.0;
        return rec(a, m, fa, flm, fm, left, depth - 1) +
               rec(m, b, fm, frm, fb, right, depth - 1);
    };
    const double m = 0.5 * (x + hi);
    const double fa = f(x), fm = f(m), fb = f(hi);
    const double whole = (hi - x) / 6.0 * (fa + 4.0 * fm + fb);
    return rec(x, hi, fa, fm, fb, whole, 48);
}

struct SteinTestFunction {
    std::string name;
    std::function<Vector(const Vector&)> h;      // R^d -> R^d
    std::function<Matrix(const Vector&)> grad;   // grad(i,j) = d h_i / d x_j
};

inline std::vector<SteinTestFunction> default_test_functions(int d) {
    std::vector<SteinTestFunction> fns;
    for (int j = 0; j < d; ++j) {
        fns.push_back({"coord_" + std::to_string(j),
                       [j, d](const Vector& x) {
                           Vector v = Vector::Zero(d);
                           v[j] = x[j];
                           return v;
                       },
                       [j, d](const Vector&) {
                           Matrix g = Matrix::Zero(d, d);
                           g(j, j) = 1.0;
                           return g;
                       }});
        fns.push_back({"square_" + std::to_string(j),
                       [j, d](const Vector& x) {
                           Vector v = Vector::Zero(d);
                           v[j] = x[j] * x[j];
                           return v;
                       },
                       [j, d](const Vector& x) {
                           Matrix g = Matrix::Zero(d, d);
                           g(j, j) = 2.0 * x[j];
                           return g;
                       }});
    }
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k)
            fns.push_back({"prod_" + std::to_string(j) + "_" + std::to_string(k),
                           [j, k, d](const Vector& x) {
                               Vector v = Vector::Zero(d);
                               v[j] = x[j] * x[k];
                               return v;
                           },
                           [j, k, d](const Vector& x) {
                               Matrix g = Matrix::Zero(d, d);
                               g(j, j) = x[k];
                               g(j, k) = x[j];
                               return g;
                           }});
    fns.push_back({"bump",
                   [](const Vector& x) {
                       return Vector(x * std::exp(-0.5 * x.squaredNorm()));
                   },
                   [d](const Vector& x) {
                       const double e = std::exp(-0.5 * x.squaredNorm());
                       return Matrix(e * (Matrix::Identity(d, d) - x * x.transpose()));
                   }});
    return fns;
}

struct SteinResidualRow {
    std::string test_function;
    double value = 0.0;  // E[X . h(X)] - E[<tau(X), grad h(X)>]
    double se = 0.0;     // leave-one-out jackknife
};

// Residuals of the defining identity E[X . h(X)] = E[<tau(X), grad h(X)>]
// on an i.i.d. sample, one row per test function.
inline std::vector<SteinResidualRow> stein_residual(
    const Matrix& samples, const std::function<Matrix(const Vector&)>& kernel,
    const std::vector<SteinTestFunction>& fns) {
    const Eigen::Index n = samples.rows();
    std::vector<SteinResidualRow> rows;
    for (const auto& fn : fns) {
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector x = samples.row(i).transpose();
            const double lhs = x.dot(fn.h(x));
            const double rhs = kernel(x).cwiseProduct(fn.grad(x)).sum();
            const double delta = lhs - rhs;
            s += delta;
            s2 += delta * delta;
        }
        SteinResidualRow row;
        row.test_function = fn.name;
        row.value = s / double(n);
        const double var = s2 / double(n) - row.value * row.value;
        row.se = std::sqrt(std::max(var, 0.0) / double(n - 1));
        rows.push_back(row);
    }
    return rows;
}

struct SecondMomentCheck {
    double lhs = 0.0;  // E |tau(X)^T u|^2
    double rhs = 0.0;  // varpi E |X . u|^2
    double lhs_se = 0.0;
    bool holds = false;
};

inline SecondMomentCheck kernel_second_moment_check(
    const Matrix& samples, const std::function<Matrix(const Vector&)>& kernel,
    const Vector& u, double varpi) {
    const Eigen::Index n = samples.rows();
    SecondMomentCheck out;
    double sl = 0, sl2 = 0, sr = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector x = samples.row(i).transpose();
        const double lv = (kernel(x).transpose() * u).squaredNorm();
        sl += lv;
        sl2 += lv * lv;
        const double rv = x.dot(u);
        sr += rv * rv;
    }
    out.lhs = sl / double(n);
    out.rhs = varpi * sr / double(n);
    out.lhs_se = std::sqrt(
        std::max(sl2 / double(n) - out.lhs * out.lhs, 0.0) / double(n - 1));
    out.holds = out.lhs <= out.rhs + 3.0 * out.lhs_se;
    return out;
}

// Smallest nonzero eigenvalue of the Dirichlet form on a grid; its reciprocal
// is the Poincare constant of the 1-D law restricted to [lo, hi].
inline double poincare_rayleigh_1d(const Coord1D& coord, double lo, double hi,
                                   int n_grid = 4000) {
    const double h = (hi - lo) / (n_grid - 1);
    Vector mu(n_grid), mid(n_grid - 1);
    for (int i = 0; i < n_grid; ++i)
        mu[i] = std::exp(coord.log_density(lo + i * h));
    for (int i = 0; i + 1 < n_grid; ++i)
        mid[i] = std::exp(coord.log_density(lo + (i + 0.5) * h));

    // Form (1/h) sum mid_i (u_{i+1}-u_i)^2 against mass diag(mu_i h);
    // B = M^{-1/2} A M^{-1/2} is symmetric tridiagonal and its nonzero
    // spectrum matches the generalized problem.
    Vector diag(n_grid), sub(n_grid - 1);
    for (int i = 0; i < n_grid; ++i) {
        double a = 0.0;
        if (i > 0) a += mid[i - 1];
        if (i + 1 < n_grid) a += mid[i];
        diag[i] = a / (h * h * mu[i]);
    }
    for (int i = 0; i + 1 < n_grid; ++i)
        sub[i] = -mid[i] / (h * h * std::sqrt(mu[i] * mu[i + 1]));
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    // Skip the (near-)zero eigenvalue of the constant function.
    const Vector ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] > 1e-8) return 1.0 / ev[i];
    throw std::runtime_error("poincare_rayleigh_1d: no positive eigenvalue");
}

}  // namespace lcl
