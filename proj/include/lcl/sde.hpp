#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "lcl/posterior.hpp"

namespace lcl {

struct Path {
    Vector grid;    // steps+1 increasing time points
    Matrix states;  // (steps+1) x d
    Matrix noise;   // steps x d Brownian increments (already scaled by sqrt(dt))
    std::uint64_t seed = 0;
};

inline Vector make_uniform_grid(double t_end, int steps) {
    if (steps < 1) throw std::invalid_argument("grid: steps must be >= 1");
    Vector g(steps + 1);
    for (int k = 0; k <= steps; ++k) g[k] = t_end * k / steps;
    return g;
}

// Grid on [0, 1-delta] whose distance to 1 shrinks geometrically:
// 1 - t_k = r^k with r = delta^(1/steps), so exactly `steps` steps land on
// 1-delta and the spacing contracts toward the stiff end.
inline Vector make_geometric_grid(double delta, int steps) {
    if (steps < 1) throw std::invalid_argument("grid: steps must be >= 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("grid: delta must be in (0,1)");
    const double r = std::pow(delta, 1.0 / steps);
    Vector g(steps + 1);
    g[0] = 0.0;
    double pow_r = 1.0;
    for (int k = 1; k <= steps; ++k) {
        pow_r *= r;
        g[k] = 1.0 - pow_r;
    }
    g[steps] = 1.0 - delta;
    return g;
}

// Explicit Euler-Maruyama on an arbitrary increasing grid:
// X_{k+1} = X_k + drift(t_k, X_k) dt_k + sqrt(dt_k) xi_k.
template <typename DriftFn>
Path euler_maruyama(DriftFn&& drift, int d, const Vector& grid, const Vector& x0,
                    std::uint64_t seed) {
    const int steps = int(grid.size()) - 1;
    if (steps < 1) throw std::invalid_argument("euler_maruyama: steps must be >= 1");
    if (x0.size() != d) throw std::invalid_argument("euler_maruyama: bad x0 size");
    Path p;
    p.grid = grid;
    p.seed = seed;
    p.states.resize(steps + 1, d);
    p.noise.resize(steps, d);
    p.states.row(0) = x0.transpose();
    Rng rng(seed);
    Vector x = x0;
    for (int k = 0; k < steps; ++k) {
        const double dt = grid[k + 1] - grid[k];
        Vector b;
        try {
            b = drift(grid[k], x);
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "euler_maruyama: drift failed at step " << k << " (t=" << grid[k]
               << "): " << e.what();
            throw std::runtime_error(os.str());
        }
        const double rt = std::sqrt(dt);
        for (int j = 0; j < d; ++j) p.noise(k, j) = rt * rng.normal();
        x += b * dt + p.noise.row(k).transpose();
        p.states.row(k + 1) = x.transpose();
    }
    return p;
}

template <typename DriftFn>
Path euler_maruyama(DriftFn&& drift, int d, double t_end, int steps,
                    const Vector& x0, std::uint64_t seed) {
    return euler_maruyama(std::forward<DriftFn>(drift), d,
                          make_uniform_grid(t_end, steps), x0, seed);
}

enum class GridKind { geometric, uniform };

struct FollmerOptions {
    double delta = 1e-3;        // 1 - t_last: size of the exact final jump
    GridKind grid = GridKind::geometric;
    bool bridge = true;         // also return Z = B_{t_last} + N(0, delta I)
    double eps_snapshot = 0.0;  // record (Y_eps, m_eps) at this time when > 0
    bool keep_path = false;
    bool force_quadrature = false;
};

struct FollmerOutput {
    Vector y1;             // terminal draw, law = target
    Vector z;              // extended bridge, law = N(0, I)
    Vector z_pre;          // accumulated Brownian increments up to t_last
    Vector y_tlast;        // state before the final jump
    Vector drift_integral; // sum of drift * dt over the grid
    Vector y_eps, m_eps;   // snapshot at eps_snapshot (empty when unused)
    double final_jump_dist = 0.0;  // |y1 - y_tlast|
    std::optional<Path> path;
};

// The terminal-pinned diffusion dY = drift(t,Y) dt + dB on [0, 1-delta] with
// a geometric grid against the stiff end, finished by an exact draw from the
// (t_last, Y_tlast) posterior.  In bridge mode Z = B_{t_last} extended by an
// independent N(0, delta I) increment, so Z ~ N(0, I) exactly; the extension
// adds at most sqrt(delta d) to any coupling norm and is reported via
// final_jump_dist.
inline FollmerOutput simulate_follmer(const Family& family, int steps,
                                      std::uint64_t seed,
                                      const FollmerOptions& opts = {}) {
    const int d = family.dimension();
    const Vector grid = opts.grid == GridKind::geometric
                            ? make_geometric_grid(opts.delta, steps)
                            : make_uniform_grid(1.0 - opts.delta, steps);
    Rng rng(seed);
    FollmerOutput out;
    Vector x = Vector::Zero(d);
    Vector drift_sum = Vector::Zero(d);
    Vector noise_sum = Vector::Zero(d);
    if (opts.keep_path) {
        out.path.emplace();
        out.path->grid = grid;
        out.path->seed = seed;
        out.path->states.resize(grid.size(), d);
        out.path->noise.resize(grid.size() - 1, d);
        out.path->states.row(0) = x.transpose();
    }
    bool snapped = opts.eps_snapshot <= 0.0;
    for (int k = 0; k + 1 < grid.size(); ++k) {
        if (!snapped && grid[k] >= opts.eps_snapshot) {
            out.y_eps = x;
            out.m_eps = posterior_moments(family, grid[k], x, opts.force_quadrature).mean;
            snapped = true;
        }
        const double dt = grid[k + 1] - grid[k];
        const Vector b = follmer_drift(family, grid[k], x, opts.force_quadrature);
        const double rt = std::sqrt(dt);
        Vector dw(d);
        for (int j = 0; j < d; ++j) dw[j] = rt * rng.normal();
        drift_sum += b * dt;
        noise_sum += dw;
        x += b * dt + dw;
        if (opts.keep_path) {
            out.path->noise.row(k) = dw.transpose();
            out.path->states.row(k + 1) = x.transpose();
        }
    }
    if (!snapped) {
        out.y_eps = x;
        out.m_eps = posterior_moments(family, grid[grid.size() - 1], x,
                                      opts.force_quadrature).mean;
    }
    const double t_last = grid[grid.size() - 1];
    out.y_tlast = x;
    out.drift_integral = drift_sum;
    out.z_pre = noise_sum;
    out.y1 = posterior_sample(family, t_last, x, rng);
    out.final_jump_dist = (out.y1 - x).norm();
    if (opts.bridge) {
        Vector ext(d);
        const double rt = std::sqrt(1.0 - t_last);
        for (int j = 0; j < d; ++j) ext[j] = rt * rng.normal();
        out.z = noise_sum + ext;
    }
    return out;
}

struct CoupledPairs {
    Matrix w, z;  // n_pairs x d each; rows are i.i.d. pairs
    std::string construction;
    std::vector<std::string> diag_names;
    Matrix diagnostics;  // n_pairs x diag_names.size()
    std::uint64_t seed = 0;
};

// Pairs (W, Z) = (terminal draw, extended bridge) from independent
// terminal-pinned diffusions; W ~ target and Z ~ N(0, I) marginally.
inline CoupledPairs follmer_couple(const Family& family, Eigen::Index n_pairs,
                                   int steps, std::uint64_t seed,
                                   const FollmerOptions& opts = {}) {
    if (n_pairs < 1)
        throw std::invalid_argument("follmer_couple: n_pairs must be >= 1");
    const int d = family.dimension();
    CoupledPairs out;
    out.construction = "follmer";
    out.seed = seed;
    out.w.resize(n_pairs, d);
    out.z.resize(n_pairs, d);
    out.diag_names = {"final_jump_dist"};
    out.diagnostics.resize(n_pairs, 1);
    for (Eigen::Index i = 0; i < n_pairs; ++i) {
        FollmerOptions o = opts;
        o.bridge = true;
        const FollmerOutput fo =
            simulate_follmer(family, steps, derive_seed(seed, {0x11ull, std::uint64_t(i)}), o);
        out.w.row(i) = fo.y1.transpose();
        out.z.row(i) = fo.z.transpose();
        out.diagnostics(i, 0) = fo.final_jump_dist;
    }
    return out;
}

// Product law with a shared coordinate density; the sum-target counterpart of
// Family (e.g. standardized sums of exponentials have Gamma coordinates).
struct ProductTarget {
    std::shared_ptr<const Coord1D> coord;
    int d = 1;

    Vector sample(Rng& rng) const {
        Vector x(d);
        for (int j = 0; j < d; ++j) x[j] = coord->sample(rng);
        return x;
    }
};

struct SnisFollmerOptions {
    Eigen::Index pool = 4096;
    double ess_floor = 200.0;
    int steps = 64;
    double delta = 1e-4;  // nominal t_last when ESS never degenerates
    int jump_steps = 32;  // exact-target continuation after the ESS stop
};

struct SnisFollmerOutput {
    Vector y1, z;
    double t_stop = 0.0;  // time at which the SNIS drift was abandoned
    double min_ess = std::numeric_limits<double>::infinity();
};

// Terminal-pinned diffusion for a target known only through exact draws: the
// drift is the self-normalized smoothed score over a per-path pool.  When the
// pool effective sample size collapses (the tilt concentrates as t -> 1), the
// integration stops and finishes either by switching to the target's exact
// per-coordinate machinery (exact_tail != nullptr) or by a Gaussian jump from
// the SNIS posterior moments that reuses the bridge innovation, keeping
// Z ~ N(0, I) exact and the coupling free of a sqrt(1 - t_stop) penalty.
template <typename SamplerFn>
SnisFollmerOutput simulate_follmer_snis(SamplerFn&& sampler, int d,
                                        std::uint64_t seed,
                                        const SnisFollmerOptions& opts = {},
                                        const ProductTarget* exact_tail = nullptr) {
    Rng rng(seed);
    Matrix pool(opts.pool, d);
    for (Eigen::Index k = 0; k < opts.pool; ++k)
        pool.row(k) = sampler(rng).transpose();

    const Vector grid = make_geometric_grid(opts.delta, opts.steps);
    SnisFollmerOutput out;
    Vector x = Vector::Zero(d);
    Vector noise_sum = Vector::Zero(d);
    int k = 0;
    SnisEstimate last{};
    bool have_last = false;
    for (; k + 1 < grid.size(); ++k) {
        const double t = grid[k];
        SnisEstimate est;
        if (t == 0.0) {
            est.drift = (pool.colwise().mean().transpose() - x);
            est.ess = double(opts.pool);
        } else {
            try {
                est = smoothed_score_snis_pool(pool, t, x, opts.ess_floor);
            } catch (const SnisDegenerateError&) {
                break;
            }
        }
        out.min_ess = std::min(out.min_ess, est.ess);
        const double dt = grid[k + 1] - grid[k];
        const double rt = std::sqrt(dt);
        Vector dw(d);
        for (int j = 0; j < d; ++j) dw[j] = rt * rng.normal();
        x += est.drift * dt + dw;
        noise_sum += dw;
        last = est;
        have_last = true;
    }
    const double t_stop = grid[k];
    out.t_stop = t_stop;

    if (exact_tail != nullptr) {
        // Continue with the exact per-coordinate drift to 1 - delta, then an
        // exact posterior jump; the bridge gets an independent sqrt(delta)
        // extension only.
        double t = t_stop;
        const int m = opts.jump_steps;
        const double r = std::pow(opts.delta / (1.0 - t_stop), 1.0 / m);
        for (int s = 0; s < m; ++s) {
            const double t_next = 1.0 - (1.0 - t) * r;
            const double dt = t_next - t;
            Vector b(d);
            for (int j = 0; j < d; ++j) {
                const Moments1D mj = tilted_moments_coord(*exact_tail->coord, t, x[j]);
                b[j] = (mj.mean - x[j]) / (1.0 - t);
            }
            const double rtd = std::sqrt(dt);
            Vector dw(d);
            for (int j = 0; j < d; ++j) dw[j] = rtd * rng.normal();
            x += b * dt + dw;
            noise_sum += dw;
            t = t_next;
        }
        Vector y1(d);
        for (int j = 0; j < d; ++j)
            y1[j] = tilted_sample_coord(*exact_tail->coord, t, x[j], rng);
        out.y1 = y1;
        Vector ext(d);
        const double rte = std::sqrt(1.0 - t);
        for (int j = 0; j < d; ++j) ext[j] = rte * rng.normal();
        out.z = noise_sum + ext;
        return out;
    }

    // Shared-innovation Gaussian jump from the SNIS posterior at (t_stop, x).
    if (!have_last || last.post_mean.size() == 0)
        last = smoothed_score_snis_pool(pool, std::max(t_stop, 1e-12), x, 1.0);
    Vector xi(d);
    for (int j = 0; j < d; ++j) xi[j] = rng.normal();
    const Matrix root = sym_sqrt(last.post_cov, 0.0);
    out.y1 = last.post_mean + root * xi;
    out.z = noise_sum + std::sqrt(1.0 - t_stop) * xi;
    return out;
}

template <typename SamplerFn>
CoupledPairs follmer_couple_snis(SamplerFn&& sampler, int d, Eigen::Index n_pairs,
                                 std::uint64_t seed,
                                 const SnisFollmerOptions& opts = {},
                                 const ProductTarget* exact_tail = nullptr) {
    if (n_pairs < 1)
        throw std::invalid_argument("follmer_couple_snis: n_pairs must be >= 1");
    CoupledPairs out;
    out.construction = "follmer_snis";
    out.seed = seed;
    out.w.resize(n_pairs, d);
    out.z.resize(n_pairs, d);
    out.diag_names = {"t_stop", "min_ess"};
    out.diagnostics.resize(n_pairs, 2);
    for (Eigen::Index i = 0; i < n_pairs; ++i) {
        const SnisFollmerOutput fo = simulate_follmer_snis(
            sampler, d, derive_seed(seed, {0x12ull, std::uint64_t(i)}), opts,
            exact_tail);
        out.w.row(i) = fo.y1.transpose();
        out.z.row(i) = fo.z.transpose();
        out.diagnostics(i, 0) = fo.t_stop;
        out.diagnostics(i, 1) = fo.min_ess;
    }
    return out;
}

// Overdamped Langevin diffusion dX = -grad V(X) dt + sqrt(2) dB with the
// variational (Jacobian) flow J' = -Hess V(X) J, J_0 = I co-integrated by a
// per-step exponential update, which is exact when Hess V is constant.
struct LangevinTarget {
    std::function<Vector(const Vector&)> score;   // -grad V
    std::function<Matrix(const Vector&)> hess_v;  // Hess V
    int d = 1;
    double ulc_epsilon = 0.0;  // 0 when not uniformly log-concave
    double poincare = 1.0;
    bool hess_constant = false;
};

inline LangevinTarget langevin_target(const Family& family) {
    LangevinTarget t;
    t.d = family.dimension();
    t.ulc_epsilon = family.ulc_epsilon();
    t.poincare = family.poincare_bound();
    if (family.is_gaussian()) {
        const Matrix h = family.sigma_inv();
        t.score = [&family](const Vector& x) { return family.score(x); };
        t.hess_v = [h](const Vector&) { return h; };
        t.hess_constant = true;
        return t;
    }
    if (family.kind() == FamilyKind::product_exponential)
        throw std::invalid_argument(
            "langevin_target: exponential potential is not twice differentiable; "
            "smooth the family first");
    t.score = [&family](const Vector& x) { return family.score(x); };
    t.hess_v = [&family](const Vector& x) {
        const int d = family.dimension();
        Matrix h = Matrix::Zero(d, d);
        for (int j = 0; j < d; ++j) h(j, j) = -family.coord().curvature(x[j]);
        return h;
    };
    return t;
}

// Hessian of V by central differences of the score (step 1e-5), for targets
// without a closed form.
inline Matrix hessian_from_score(const std::function<Vector(const Vector&)>& score,
                                 const Vector& x, double h = 1e-5) {
    const int d = int(x.size());
    Matrix out(d, d);
    for (int j = 0; j < d; ++j) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        out.col(j) = -(score(xp) - score(xm)) / (2.0 * h);
    }
    return symmetrize(out);
}

struct LangevinRun {
    Path path;
    std::vector<Matrix> jacobian;  // steps+1 matrices, J_0 = I
};

inline LangevinRun simulate_langevin_with_jacobian(const LangevinTarget& target,
                                                   const Vector& x0, double t_end,
                                                   int steps, std::uint64_t seed) {
    if (t_end < 0.0)
        throw std::invalid_argument("simulate_langevin_with_jacobian: T must be >= 0");
    const int d = target.d;
    LangevinRun run;
    run.jacobian.reserve(size_t(steps) + 1);
    run.jacobian.push_back(Matrix::Identity(d, d));
    if (t_end == 0.0 || steps == 0) {
        run.path.grid = Vector::Zero(1);
        run.path.states = x0.transpose();
        run.path.seed = seed;
        return run;
    }
    const double dt = t_end / steps;
    Rng rng(seed);
    run.path.grid = make_uniform_grid(t_end, steps);
    run.path.seed = seed;
    run.path.states.resize(steps + 1, d);
    run.path.noise.resize(steps, d);
    run.path.states.row(0) = x0.transpose();
    Vector x = x0;
    Matrix j = Matrix::Identity(d, d);
    Matrix const_step;
    if (target.hess_constant)
        const_step = sym_apply(target.hess_v(x0),
                               [dt](double l) { return std::exp(-l * dt); },
                               -1e300);
    const double rt = std::sqrt(2.0 * dt);
    for (int k = 0; k < steps; ++k) {
        const Vector b = target.score(x);
        for (int jj = 0; jj < d; ++jj) run.path.noise(k, jj) = rt * rng.normal();
        const Vector x_next = x + b * dt + run.path.noise.row(k).transpose();
        run.path.states.row(k + 1) = x_next.transpose();
        // Exponential Jacobian update with the Hessian at the midpoint state:
        // exact for constant Hessians, O(dt^2) bias otherwise.
        if (target.hess_constant) {
            j = const_step * j;
        } else if (d == 1) {
            Vector mid = 0.5 * (x + x_next);
            j(0, 0) *= std::exp(-target.hess_v(mid)(0, 0) * dt);
        } else {
            const Matrix step = sym_apply(
                target.hess_v(0.5 * (x + x_next)),
                [dt](double l) { return std::exp(-l * dt); }, -1e300);
            j = step * j;
        }
        run.jacobian.push_back(j);
        x = x_next;
    }
    return run;
}

}  // namespace lcl
