#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lcl/matrix.hpp"
#include "lcl/rng.hpp"

namespace lcl {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// 1-D coordinate law of a product family.  Everything downstream (tilted
// posteriors, quadrature, rejection sampling, Stein kernels) works through
// this interface.
class Coord1D {
  public:
    virtual ~Coord1D() = default;
    virtual double support_lo() const { return kNegInf; }
    virtual double log_density(double x) const = 0;
    virtual double score(double x) const = 0;      // interior only
    virtual double curvature(double x) const = 0;  // (log density)'' , interior
    virtual double sample(Rng& rng) const = 0;
    virtual double mean() const { return 0.0; }
    virtual double variance() const { return 1.0; }
};

// Exp(1) - 1: standardized exponential, support (-1, inf).
class StdExponential1D final : public Coord1D {
  public:
    double support_lo() const override { return -1.0; }
    double log_density(double x) const override {
        return x > -1.0 ? -(x + 1.0) : kNegInf;
    }
    double score(double) const override { return -1.0; }
    double curvature(double) const override { return 0.0; }
    double sample(Rng& rng) const override { return rng.exponential() - 1.0; }
};

// Weibull(shape beta, scale 1), standardized to mean 0 and variance 1.
class StdWeibull1D final : public Coord1D {
  public:
    explicit StdWeibull1D(double beta) : beta_(beta) {
        mu_ = std::tgamma(1.0 + 1.0 / beta);
        const double m2 = std::tgamma(1.0 + 2.0 / beta);
        sigma_ = std::sqrt(m2 - mu_ * mu_);
    }
    double support_lo() const override { return -mu_ / sigma_; }
    double log_density(double x) const override {
        const double w = mu_ + sigma_ * x;
        if (w <= 0.0) return kNegInf;
        return std::log(sigma_) + std::log(beta_) + (beta_ - 1.0) * std::log(w) -
               std::pow(w, beta_);
    }
    double score(double x) const override {
        const double w = mu_ + sigma_ * x;
        return sigma_ * ((beta_ - 1.0) / w - beta_ * std::pow(w, beta_ - 1.0));
    }
    double curvature(double x) const override {
        const double w = mu_ + sigma_ * x;
        return -sigma_ * sigma_ *
               ((beta_ - 1.0) / (w * w) +
                beta_ * (beta_ - 1.0) * std::pow(w, beta_ - 2.0));
    }
    double sample(Rng& rng) const override {
        const double w = std::pow(rng.exponential(), 1.0 / beta_);
        return (w - mu_) / sigma_;
    }
    double raw_mean() const { return mu_; }
    double raw_sd() const { return sigma_; }
    double beta() const { return beta_; }

  private:
    double beta_, mu_, sigma_;
};

// (Gamma(n,1) - n)/sqrt(n): the exact law of a standardized sum of n
// standardized exponentials.  Used as the coordinate law of sum targets.
class GammaSumScaled1D final : public Coord1D {
  public:
    explicit GammaSumScaled1D(std::int64_t n) : n_(n), rt_(std::sqrt(double(n))) {
        if (n < 1) throw std::invalid_argument("GammaSumScaled1D: n must be >= 1");
        lg_ = std::lgamma(double(n));
    }
    double support_lo() const override { return -rt_; }
    double log_density(double x) const override {
        const double w = double(n_) + rt_ * x;
        if (w <= 0.0) return kNegInf;
        return (double(n_) - 1.0) * std::log(w) - w - lg_ + std::log(rt_);
    }
    double score(double x) const override {
        const double w = double(n_) + rt_ * x;
        return rt_ * ((double(n_) - 1.0) / w - 1.0);
    }
    double curvature(double x) const override {
        const double w = double(n_) + rt_ * x;
        return -double(n_) * (double(n_) - 1.0) / (w * w);
    }
    double sample(Rng& rng) const override {
        return (rng.gamma(double(n_)) - double(n_)) / rt_;
    }

  private:
    std::int64_t n_;
    double rt_, lg_;
};

enum class FamilyKind { gaussian, product_exponential, product_weibull };

inline std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::gaussian: return "gaussian";
        case FamilyKind::product_exponential: return "product_exponential";
        case FamilyKind::product_weibull: return "product_weibull";
    }
    return "?";
}

struct SampleMatrix {
    Matrix data;  // n x d, rows i.i.d.
    std::uint64_t seed = 0;
    std::string family_id;
};

// A centered log-concave family with exact sampler, log-density, score and
// analytic moments.  Immutable after construction; safe to share across
// threads.
class Family {
  public:
    static Family gaussian(int d, const Matrix& sigma) {
        if (d < 1) throw std::invalid_argument("Family: dimension must be >= 1");
        if (sigma.rows() != d || sigma.cols() != d)
            throw std::invalid_argument("Family: sigma must be d x d");
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("Family: sigma must be symmetric");
        Family f;
        f.kind_ = FamilyKind::gaussian;
        f.d_ = d;
        f.sigma_ = symmetrize(sigma);
        Eigen::SelfAdjointEigenSolver<Matrix> es(f.sigma_);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo < -1e-10 * std::max(1.0, hi)) {
            std::ostringstream os;
            os << "Family: sigma is not PSD (min eigenvalue " << lo << ")";
            throw std::invalid_argument(os.str());
        }
        f.sigma_sqrt_ = sym_sqrt(f.sigma_, 0.0);
        f.singular_ = lo <= 1e-12 * std::max(1.0, hi);
        f.ulc_epsilon_ = f.singular_ ? 0.0 : 1.0 / hi;
        if (!f.singular_) {
            f.sigma_inv_ = sym_inverse(f.sigma_, 0.0);
            f.log_det_ = es.eigenvalues().array().log().sum();
        }
        f.poincare_bound_ = hi;
        return f;
    }

    static Family product_exponential(int d) {
        if (d < 1) throw std::invalid_argument("Family: dimension must be >= 1");
        Family f;
        f.kind_ = FamilyKind::product_exponential;
        f.d_ = d;
        f.coord_ = std::make_shared<StdExponential1D>();
        // Poincare constant of Exp(1); confirmed by the Rayleigh-quotient
        // oracle in the test suite.
        f.poincare_bound_ = 4.0;
        f.ulc_epsilon_ = 0.0;
        return f;
    }

    static Family product_weibull(int d, double beta) {
        if (d < 1) throw std::invalid_argument("Family: dimension must be >= 1");
        if (!(beta >= 2.0)) {
            std::ostringstream os;
            os << "Family: weibull shape must be >= 2 (got " << beta << ")";
            throw std::invalid_argument(os.str());
        }
        Family f;
        f.kind_ = FamilyKind::product_weibull;
        f.d_ = d;
        f.beta_ = beta;
        auto c = std::make_shared<StdWeibull1D>(beta);
        f.ulc_epsilon_ = (beta - 1.0) * c->raw_sd() * c->raw_sd();
        f.poincare_bound_ = 1.0 / f.ulc_epsilon_;  // Brascamp-Lieb ceiling
        f.coord_ = std::move(c);
        return f;
    }

    FamilyKind kind() const { return kind_; }
    int dimension() const { return d_; }
    double beta() const { return beta_; }
    bool is_product() const { return kind_ != FamilyKind::gaussian; }
    bool is_gaussian() const { return kind_ == FamilyKind::gaussian; }
    const Coord1D& coord() const {
        if (!coord_) throw std::logic_error("Family: no coordinate law (gaussian)");
        return *coord_;
    }
    const Matrix& sigma() const { return sigma_; }
    const Matrix& sigma_sqrt() const { return sigma_sqrt_; }
    const Matrix& sigma_inv() const {
        if (singular_) throw std::domain_error("Family: sigma is singular");
        return sigma_inv_;
    }
    bool sigma_singular() const { return singular_; }

    double poincare_bound() const { return poincare_bound_; }
    void set_poincare_bound(double v) { poincare_bound_ = v; }
    // 0 when the family is not uniformly log-concave.
    double ulc_epsilon() const { return ulc_epsilon_; }

    Vector mean() const { return Vector::Zero(d_); }
    Matrix covariance() const {
        return is_gaussian() ? sigma_ : Matrix::Identity(d_, d_);
    }

    double log_density(const Vector& x) const {
        check_dim(x);
        if (is_gaussian()) {
            if (singular_) throw std::domain_error("Family: singular gaussian has no density");
            return -0.5 * (d_ * std::log(2.0 * M_PI) + log_det_ +
                           x.dot(sigma_inv_ * x));
        }
        double s = 0.0;
        for (int j = 0; j < d_; ++j) {
            s += coord_->log_density(x[j]);
            if (s == kNegInf) return kNegInf;
        }
        return s;
    }

    Vector score(const Vector& x) const {
        check_dim(x);
        if (is_gaussian()) {
            if (singular_) throw std::domain_error("Family: singular gaussian has no score");
            return -sigma_inv_ * x;
        }
        Vector g(d_);
        for (int j = 0; j < d_; ++j) {
            if (x[j] <= coord_->support_lo()) {
                std::ostringstream os;
                os << "Family::score: coordinate " << j << " (value " << x[j]
                   << ") is at or outside the support boundary "
                   << coord_->support_lo();
                throw std::domain_error(os.str());
            }
            g[j] = coord_->score(x[j]);
        }
        return g;
    }

    SampleMatrix sample(Eigen::Index n, std::uint64_t seed) const {
        if (n < 1) throw std::invalid_argument("Family::sample: n must be >= 1");
        Rng rng(seed);
        SampleMatrix out;
        out.data.resize(n, d_);
        out.seed = seed;
        out.family_id = to_json().dump();
        if (is_gaussian()) {
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < d_; ++j) out.data(i, j) = rng.normal();
            out.data = out.data * sigma_sqrt_.transpose();
        } else {
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < d_; ++j) out.data(i, j) = coord_->sample(rng);
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = to_string(kind_);
        j["d"] = d_;
        if (kind_ == FamilyKind::product_weibull) j["beta"] = beta_;
        if (kind_ == FamilyKind::gaussian) {
            std::vector<std::vector<double>> s(d_, std::vector<double>(d_));
            for (int a = 0; a < d_; ++a)
                for (int b = 0; b < d_; ++b) s[a][b] = sigma_(a, b);
            j["sigma"] = s;
        }
        if (poincare_override_) j["poincare_bound"] = poincare_bound_;
        return j;
    }

    static Family from_json(const nlohmann::json& j) {
        const std::string kind = j.at("kind").get<std::string>();
        const int d = j.at("d").get<int>();
        Family f = [&] {
            if (kind == "gaussian") {
                Matrix sigma = Matrix::Identity(d, d);
                if (j.contains("sigma")) {
                    auto s = j["sigma"].get<std::vector<std::vector<double>>>();
                    if (int(s.size()) != d)
                        throw std::invalid_argument("Family: sigma has wrong size");
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b) sigma(a, b) = s.at(a).at(b);
                }
                return gaussian(d, sigma);
            }
            if (kind == "product_exponential") return product_exponential(d);
            if (kind == "product_weibull")
                return product_weibull(d, j.at("beta").get<double>());
            throw std::invalid_argument("Family: unknown kind '" + kind + "'");
        }();
        if (j.contains("poincare_bound")) {
            f.set_poincare_bound(j["poincare_bound"].get<double>());
            f.poincare_override_ = true;
        }
        return f;
    }

  private:
    Family() = default;
    void check_dim(const Vector& x) const {
        if (x.size() != d_)
            throw std::invalid_argument("Family: point has wrong dimension");
    }

    FamilyKind kind_ = FamilyKind::gaussian;
    int d_ = 1;
    double beta_ = 0.0;
    Matrix sigma_, sigma_sqrt_, sigma_inv_;
    double log_det_ = 0.0;
    bool singular_ = false;
    bool poincare_override_ = false;
    std::shared_ptr<const Coord1D> coord_;
    double poincare_bound_ = 1.0;
    double ulc_epsilon_ = 1.0;
};

// Reference worst-case Poincare bound over isotropic log-concave measures in
// dimension d (reporting only; never on a correctness path).
inline double kls_reference_bound(int d) {
    const double l = std::log(double(d));
    return std::max(1.0, std::pow(l, 10.0));
}

inline Family make_family(FamilyKind kind, int d, double beta = 0.0,
                          const Matrix& sigma = Matrix()) {
    switch (kind) {
        case FamilyKind::gaussian:
            return Family::gaussian(
                d, sigma.size() ? sigma : Matrix(Matrix::Identity(d, d)));
        case FamilyKind::product_exponential:
            return Family::product_exponential(d);
        case FamilyKind::product_weibull:
            return Family::product_weibull(d, beta);
    }
    throw std::invalid_argument("make_family: unknown kind");
}

}  // namespace lcl
