#include "amf/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace amf {

namespace {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix, weights come from
// the first component of each normalised eigenvector.
template <class OffDiag>
QuadratureRule golub_welsch(std::size_t n, double mu0, OffDiag off) {
    if (n == 0) throw std::invalid_argument("quadrature rule needs at least one node");
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        jac(i, i - 1) = jac(i - 1, i) = off(k);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    QuadratureRule r;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        r.nodes.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        r.weights.push_back(mu0 * v * v);
    }
    return r;
}

}  // namespace

QuadratureRule gauss_legendre(std::size_t n) {
    return golub_welsch(n, 2.0, [](std::size_t k) {
        const double kk = static_cast<double>(k);
        return kk / std::sqrt(4.0 * kk * kk - 1.0);
    });
}

QuadratureRule gauss_hermite(std::size_t n) {
    return golub_welsch(n, std::sqrt(std::numbers::pi),
                        [](std::size_t k) { return std::sqrt(static_cast<double>(k) / 2.0); });
}

}  // namespace amf
