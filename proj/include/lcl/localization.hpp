#pragma once

#include <vector>

#include "lcl/sde.hpp"

// Stochastic-localization machinery: the normalized posterior covariance flow
// Gamma_t, the martingale embedding that couples n^{-1/2} sum m_eps^(i) with
// a Gaussian through matrix-geometric-mean rotations, and the composite
// coupling that adds the conditional residual sum on top.

namespace lcl {

// Gamma_t = Cov(posterior at (t, y)) / (1 - t).
inline Matrix gamma_matrix(const Family& family, double t, const Vector& y) {
    return posterior_moments(family, t, y).cov / (1.0 - t);
}

struct MgmCheck {
    double min_eigenvalue = 0.0;  // of (A-B) A^{-1} (A-B) - (A + B - 2 A#B)
    bool holds = false;
};

inline MgmCheck mgm_inequality_check(const Matrix& a, const Matrix& b) {
    const Matrix diff = a - b;
    const Matrix lhs = a + b - 2.0 * geometric_mean(a, b);
    const Matrix rhs = diff * sym_inverse(a, 0.0) * diff;
    MgmCheck out;
    out.min_eigenvalue = min_eigenvalue(rhs - lhs);
    out.holds = out.min_eigenvalue >= -1e-10;
    return out;
}

namespace loc_detail {

// Advance one Euler step of the localization diffusion for every path.
inline void advance_paths(const Family& family, double t, double dt,
                          std::vector<Vector>& ys, Matrix* increments, Rng& rng) {
    const int d = family.dimension();
    const double rt = std::sqrt(dt);
    for (size_t i = 0; i < ys.size(); ++i) {
        const Vector b = follmer_drift(family, t, ys[i]);
        Vector dw(d);
        for (int j = 0; j < d; ++j) dw[j] = rt * rng.normal();
        ys[i] += b * dt + dw;
        if (increments) increments->row(Eigen::Index(i)) = dw.transpose();
    }
}

}  // namespace loc_detail

struct PilotMoments {
    Vector ts;                        // step left endpoints on [0, eps]
    std::vector<Matrix> e_gamma_sq;   // E[Gamma_t^2] per step, frozen
    std::vector<Matrix> e_sqrt;       // sqrt(E[Gamma^2]) per step
    std::vector<Matrix> e_inv_sqrt;   // E[Gamma^2]^{-1/2} per step
    Matrix sigma_eps;                 // E Cov(posterior at eps)
    Matrix sigma_eps_se;              // entrywise standard error
    Matrix cov_z;                     // sum_k E[Gamma^2](t_k) dt_k
    Matrix cov_z_se;                  // entrywise SE of the per-path integral
    Eigen::Index n_pilot = 0;
};

// Freeze E[Gamma_t^2] on the grid from an independent pilot ensemble.  The
// embedding needs a deterministic E[Gamma^2]; estimating it online would
// correlate it with the coupled paths.
inline PilotMoments pilot_gamma_moments(const Family& family, double eps,
                                        int steps, Eigen::Index n_pilot,
                                        std::uint64_t seed) {
    if (n_pilot < 1000)
        throw std::invalid_argument("pilot_gamma_moments: pilot must be >= 1000");
    const int d = family.dimension();
    PilotMoments out;
    out.n_pilot = n_pilot;
    out.ts = Vector::LinSpaced(steps, 0.0, eps * double(steps - 1) / steps);
    const double dt = eps / steps;
    std::vector<Matrix> sum_g2(size_t(steps), Matrix::Zero(d, d));
    Matrix sum_sigma = Matrix::Zero(d, d), sum_sigma2 = Matrix::Zero(d, d);
    Matrix sum_int = Matrix::Zero(d, d), sum_int2 = Matrix::Zero(d, d);
    for (Eigen::Index p = 0; p < n_pilot; ++p) {
        Rng rng = Rng::derived(seed, {0x91ull, std::uint64_t(p)});
        Vector y = Vector::Zero(d);
        Matrix integral = Matrix::Zero(d, d);
        std::vector<Vector> ys{y};
        for (int k = 0; k < steps; ++k) {
            const double t = out.ts[k];
            const Matrix g = gamma_matrix(family, t, ys[0]);
            const Matrix g2 = g * g;
            sum_g2[size_t(k)] += g2;
            integral += g2 * dt;
            loc_detail::advance_paths(family, t, dt, ys, nullptr, rng);
        }
        const Matrix cov_eps = posterior_moments(family, eps, ys[0]).cov;
        sum_sigma += cov_eps;
        sum_sigma2 += cov_eps.cwiseProduct(cov_eps);
        sum_int += integral;
        sum_int2 += integral.cwiseProduct(integral);
    }
    const double np = double(n_pilot);
    for (int k = 0; k < steps; ++k) {
        out.e_gamma_sq.push_back(symmetrize(sum_g2[size_t(k)] / np));
        out.e_sqrt.push_back(sym_sqrt(out.e_gamma_sq.back()));
        out.e_inv_sqrt.push_back(sym_inv_sqrt(out.e_gamma_sq.back()));
    }
    out.sigma_eps = symmetrize(sum_sigma / np);
    out.sigma_eps_se =
        ((sum_sigma2 / np - out.sigma_eps.cwiseProduct(out.sigma_eps)).cwiseMax(0.0) / np)
            .cwiseSqrt();
    out.cov_z = symmetrize(sum_int / np);
    out.cov_z_se =
        ((sum_int2 / np - out.cov_z.cwiseProduct(out.cov_z)).cwiseMax(0.0) / np)
            .cwiseSqrt();
    return out;
}

struct EmbedOptions {
    int steps = 64;
    Eigen::Index pilot = 2000;
    double singular_condition = 1e12;
};

inline constexpr double kEmbedSingularCondition = 1e12;

struct EmbedResult {
    Vector w_part;        // n^{-1/2} sum_i m(eps, Y_eps^(i))
    Vector z_eps;         // Gaussian with covariance sum_k E[Gamma^2] dt
    std::vector<Vector> y_eps;  // realized path endpoints
    Matrix qv;            // [M,M] = sum GammaBar^2 dt (identity of the scheme)
    double ito_mismatch = 0.0;      // |w_part - accumulated martingale|_inf
    double u_orth_dev = 0.0;        // max |U^T U - I|_inf over steps
    double bookkeeping_dev = 0.0;   // |sum GammaBar dB~ - sum dM|_inf
};

// One draw of the martingale-embedding coupling: n localization paths share a
// uniform grid on [0, eps]; per step the increment of M = n^{-1/2} sum m^(i)
// is rotated through U_t = sqrt(E^{-1/2} GammaBar^2 E^{-1/2}) sqrt(E)
// GammaBar^{-1} (E = frozen E[Gamma_t^2]) to accumulate Z_eps, whose law is
// exactly N(0, sum_k E[Gamma^2] dt) by construction.
inline EmbedResult martingale_embed_one(const Family& family, Eigen::Index n,
                                        double eps, const PilotMoments& pilot,
                                        std::uint64_t seed) {
    const int d = family.dimension();
    const int steps = int(pilot.e_gamma_sq.size());
    const double dt = eps / steps;
    Rng rng(seed);
    std::vector<Vector> ys(size_t(n), Vector::Zero(d));
    Matrix increments(n, d);
    Vector m_hat = Vector::Zero(d);       // accumulated n^{-1/2} sum Gamma dB
    Vector m_rebuilt = Vector::Zero(d);   // accumulated GammaBar dB~
    Vector z_eps = Vector::Zero(d);
    EmbedResult out;
    out.qv = Matrix::Zero(d, d);
    const double inv_rt_n = 1.0 / std::sqrt(double(n));
    std::vector<Matrix> gammas(size_t(n));
    for (int k = 0; k < steps; ++k) {
        const double t = pilot.ts[k];
        Matrix gbar_sq = Matrix::Zero(d, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            gammas[size_t(i)] = gamma_matrix(family, t, ys[size_t(i)]);
            gbar_sq += gammas[size_t(i)] * gammas[size_t(i)];
        }
        gbar_sq = symmetrize(gbar_sq / double(n));
        Eigen::SelfAdjointEigenSolver<Matrix> es(gbar_sq);
        const Vector& lam = es.eigenvalues();
        if (!(lam.minCoeff() > 0.0) ||
            lam.maxCoeff() / lam.minCoeff() > kEmbedSingularCondition)
            throw std::runtime_error(
                "martingale_embed: GammaBar numerically singular at step " +
                std::to_string(k));
        const Matrix gbar = symmetrize(es.eigenvectors() *
                                       lam.cwiseSqrt().asDiagonal() *
                                       es.eigenvectors().transpose());
        const Matrix gbar_inv = symmetrize(es.eigenvectors() *
                                           lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                                           es.eigenvectors().transpose());
        const Matrix& e_sqrt = pilot.e_sqrt[size_t(k)];
        const Matrix& e_inv_sqrt = pilot.e_inv_sqrt[size_t(k)];
        const Matrix u =
            sym_sqrt(symmetrize(e_inv_sqrt * gbar_sq * e_inv_sqrt)) * e_sqrt * gbar_inv;
        out.u_orth_dev = std::max(
            out.u_orth_dev,
            (u.transpose() * u - Matrix::Identity(d, d)).cwiseAbs().maxCoeff());

        loc_detail::advance_paths(family, t, dt, ys, &increments, rng);
        Vector dm = Vector::Zero(d);
        for (Eigen::Index i = 0; i < n; ++i)
            dm += gammas[size_t(i)] * increments.row(i).transpose();
        dm *= inv_rt_n;
        const Vector db_tilde = gbar_inv * dm;
        z_eps += e_sqrt * (u * db_tilde);
        m_hat += dm;
        m_rebuilt += gbar * db_tilde;
        out.qv += gbar_sq * dt;
    }
    out.z_eps = z_eps;
    Vector w = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i)
        w += posterior_moments(family, eps, ys[size_t(i)]).mean;
    out.w_part = w * inv_rt_n;
    out.y_eps = std::move(ys);
    out.ito_mismatch = (out.w_part - m_hat).cwiseAbs().maxCoeff();
    out.bookkeeping_dev = (m_rebuilt - m_hat).cwiseAbs().maxCoeff();
    return out;
}

// n_pairs independent draws of (n^{-1/2} sum m_eps^(i), Z_eps).
inline CoupledPairs martingale_embed_couple(const Family& family, Eigen::Index n,
                                            double eps, int steps,
                                            Eigen::Index n_pairs,
                                            Eigen::Index pilot_paths,
                                            std::uint64_t seed) {
    if (!(eps > 0.0 && eps <= 0.5))
        throw std::invalid_argument("martingale_embed_couple: eps must be in (0, 1/2]");
    const PilotMoments pilot = pilot_gamma_moments(
        family, eps, steps, pilot_paths, derive_seed(seed, {0xA0ull}));
    const int d = family.dimension();
    CoupledPairs out;
    out.construction = "martingale_embed";
    out.seed = seed;
    out.w.resize(n_pairs, d);
    out.z.resize(n_pairs, d);
    out.diag_names = {"ito_mismatch", "u_orth_dev"};
    out.diagnostics.resize(n_pairs, 2);
    for (Eigen::Index i = 0; i < n_pairs; ++i) {
        const EmbedResult r = martingale_embed_one(
            family, n, eps, pilot, derive_seed(seed, {0xA1ull, std::uint64_t(i)}));
        out.w.row(i) = r.w_part.transpose();
        out.z.row(i) = r.z_eps.transpose();
        out.diagnostics(i, 0) = r.ito_mismatch;
        out.diagnostics(i, 1) = r.u_orth_dev;
    }
    return out;
}

struct CompositeConfig {
    double c0 = 3.0;       // eps = 1/(c0 * varpi * log(2d)) when eps <= 0
    double eps = 0.0;
    int embed_steps = 64;
    Eigen::Index pilot = 2000;
    SnisFollmerOptions residual;
};

inline double composite_default_eps(const Family& family, double c0) {
    return 1.0 / (c0 * family.poincare_bound() *
                  std::log(2.0 * family.dimension()));
}

// Composite coupling of W = n^{-1/2} sum X_i with Z ~ N(0, Cov(Z_eps) + Sigma_eps):
// the martingale embedding handles the posterior-mean part and a
// self-normalized-score diffusion couples the conditional residual sum, with
// the two parts glued by the frozen pilot Sigma_eps.
inline CoupledPairs composite_clt_couple(const Family& family, Eigen::Index n,
                                         const CompositeConfig& cfg,
                                         Eigen::Index n_pairs, std::uint64_t seed) {
    if (family.is_gaussian() && (family.sigma() - Matrix::Identity(family.dimension(), family.dimension())).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument(
            "composite_clt_couple: core requires an isotropic family; use "
            "spectral_split_couple for general gaussian covariance");
    const int d = family.dimension();
    const double eps = cfg.eps > 0.0 ? cfg.eps : composite_default_eps(family, cfg.c0);
    const PilotMoments pilot = pilot_gamma_moments(
        family, eps, cfg.embed_steps, cfg.pilot, derive_seed(seed, {0xB0ull}));
    if (min_eigenvalue(pilot.sigma_eps) <= 0.0)
        throw std::runtime_error("composite_clt_couple: pilot Sigma_eps is not PD");
    const Matrix sigma_sqrt = sym_sqrt(pilot.sigma_eps, 0.0);
    const Matrix sigma_inv_sqrt = sym_inv_sqrt(pilot.sigma_eps, 0.0);

    CoupledPairs out;
    out.construction = "composite_clt";
    out.seed = seed;
    out.w.resize(n_pairs, d);
    out.z.resize(n_pairs, d);
    out.diag_names = {"ito_mismatch", "t_stop", "min_ess"};
    out.diagnostics.resize(n_pairs, 3);
    const double inv_rt_n = 1.0 / std::sqrt(double(n));
    for (Eigen::Index i = 0; i < n_pairs; ++i) {
        const std::uint64_t pair_seed = derive_seed(seed, {0xB1ull, std::uint64_t(i)});
        const EmbedResult emb = martingale_embed_one(family, n, eps, pilot, pair_seed);
        // residual sampler: centered posterior draws at the realized endpoints
        std::vector<Vector> means(emb.y_eps.size());
        for (size_t ii = 0; ii < emb.y_eps.size(); ++ii)
            means[ii] = posterior_moments(family, eps, emb.y_eps[ii]).mean;
        auto residual_sampler = [&](Rng& rng) {
            Vector s = Vector::Zero(d);
            for (size_t ii = 0; ii < emb.y_eps.size(); ++ii)
                s += posterior_sample(family, eps, emb.y_eps[ii], rng) - means[ii];
            return Vector(sigma_inv_sqrt * s * inv_rt_n);
        };
        const SnisFollmerOutput res = simulate_follmer_snis(
            residual_sampler, d, derive_seed(pair_seed, {0xB2ull}), cfg.residual);
        out.w.row(i) = (emb.w_part + sigma_sqrt * res.y1).transpose();
        out.z.row(i) = (emb.z_eps + sigma_sqrt * res.z).transpose();
        out.diagnostics(i, 0) = emb.ito_mismatch;
        out.diagnostics(i, 1) = res.t_stop;
        out.diagnostics(i, 2) = res.min_ess;
    }
    return out;
}

// Degenerate-covariance reduction: for Z ~ N(0, Sigma) with Sigma = U^T L U of
// rank r, run an isotropic core coupling in R^r and map both coordinates back
// through U^T S.  The projected norms transform by |S U u|.
template <typename CoreFn>
CoupledPairs spectral_split_couple(const Matrix& sigma, CoreFn&& core_in_rank) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sigma));
    const int d = int(sigma.rows());
    const double tol = 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
    std::vector<int> keep;
    for (int j = 0; j < d; ++j)
        if (es.eigenvalues()[j] > tol) keep.push_back(j);
    const int r = int(keep.size());
    if (r == 0) throw std::invalid_argument("spectral_split_couple: zero matrix");
    // rows of U are eigenvectors; S^T = U^T diag(sqrt(lambda)) selector
    Matrix back(d, r);  // maps core coordinates to the original space
    for (int a = 0; a < r; ++a)
        back.col(a) = es.eigenvectors().col(keep[size_t(a)]) *
                      std::sqrt(es.eigenvalues()[keep[size_t(a)]]);
    CoupledPairs core = core_in_rank(r);
    CoupledPairs out;
    out.construction = core.construction + "+spectral_split";
    out.seed = core.seed;
    out.diag_names = core.diag_names;
    out.diagnostics = core.diagnostics;
    out.w = core.w * back.transpose();
    out.z = core.z * back.transpose();
    return out;
}

}  // namespace lcl
