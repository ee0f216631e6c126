#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace lcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Spectral f(A) for symmetric A with an eigenvalue floor.  The floor guards
// transient Monte Carlo noise in matrices that are PSD in expectation.
template <typename F>
Matrix sym_apply(const Matrix& m, F f, double floor = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sym_apply: eigendecomposition failed");
    Vector lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = f(std::max(lam[i], floor));
    return symmetrize(es.eigenvectors() * lam.asDiagonal() *
                      es.eigenvectors().transpose());
}

inline Matrix sym_sqrt(const Matrix& m, double floor = 1e-12) {
    return sym_apply(m, [](double x) { return std::sqrt(x); }, floor);
}

inline Matrix sym_inv_sqrt(const Matrix& m, double floor = 1e-12) {
    return sym_apply(m, [](double x) { return 1.0 / std::sqrt(x); }, floor);
}

inline Matrix sym_inverse(const Matrix& m, double floor = 1e-12) {
    return sym_apply(m, [](double x) { return 1.0 / x; }, floor);
}

inline double condition_number(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

// Geometric mean A#B = sqrt(A) sqrt(A^{-1/2} B A^{-1/2}) sqrt(A) of a positive
// definite A and PSD B; symmetrized to kill round-off asymmetry.
inline Matrix geometric_mean(const Matrix& a, const Matrix& b) {
    if (min_eigenvalue(a) <= 0.0)
        throw std::invalid_argument("geometric_mean: first argument is singular");
    const Matrix ra = sym_sqrt(a, 0.0);
    const Matrix rai = sym_inv_sqrt(a, 0.0);
    const Matrix mid = sym_sqrt(symmetrize(rai * b * rai), 0.0);
    return symmetrize(ra * mid * ra);
}

}  // namespace lcl
