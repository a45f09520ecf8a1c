#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>

#include "tfde/error.hpp"

namespace tfde {

/// Nodes and weights of an n-point Gaussian rule.
template <class Real>
struct QuadratureRule {
    std::vector<Real> nodes;
    std::vector<Real> weights;

    std::size_t size() const { return nodes.size(); }
};

/// Three-term recurrence of the orthonormal polynomials of a weight:
///   sqrt(beta[j+1]) p_{j+1} = (x - alpha[j]) p_j - sqrt(beta[j]) p_{j-1}
/// with beta[0] unused and mu0 the total mass of the weight.
template <class Real>
struct Recurrence {
    std::vector<Real> alpha;
    std::vector<Real> beta;
    Real mu0;
};

/// Recurrence for the Jacobi weight (1-x)^a (1+x)^b on [-1, 1], n+1 terms.
template <class Real>
Recurrence<Real> jacobi_recurrence(std::size_t n, Real a, Real b)
{
    using std::pow;
    detail::require(a > Real(-1) && b > Real(-1), "Jacobi exponents must exceed -1");
    Recurrence<Real> rec;
    rec.alpha.resize(n + 1);
    rec.beta.resize(n + 1);
    const Real ab = a + b;
    rec.mu0 = pow(Real(2), ab + 1) * boost::math::tgamma(a + 1) * boost::math::tgamma(b + 1) /
              boost::math::tgamma(ab + 2);
    rec.alpha[0] = (b - a) / (ab + 2);
    rec.beta[0] = rec.mu0;
    for (std::size_t j = 1; j <= n; ++j) {
        const Real jj = Real(static_cast<double>(j));
        const Real s = 2 * jj + ab;
        rec.alpha[j] = (b * b - a * a) / (s * (s + 2));
        if (j == 1) {
            rec.beta[j] = 4 * (a + 1) * (b + 1) / ((ab + 2) * (ab + 2) * (ab + 3));
        } else {
            rec.beta[j] = 4 * jj * (jj + a) * (jj + b) * (jj + ab) / (s * s * (s + 1) * (s - 1));
        }
    }
    return rec;
}

namespace detail {

// Orthonormal p_n(x), p_n'(x) and sum_{j<n} p_j(x)^2.
template <class Real>
void orthonormal_eval(const Recurrence<Real>& rec, std::size_t n, const Real& x, Real& p,
                      Real& dp, Real& christoffel)
{
    using std::sqrt;
    Real p_prev = 0;
    Real dp_prev = 0;
    Real p_cur = 1;
    Real dp_cur = 0;
    christoffel = 0;
    for (std::size_t j = 0; j < n; ++j) {
        christoffel += p_cur * p_cur;
        const Real sb_next = sqrt(rec.beta[j + 1]);
        const Real sb = j == 0 ? Real(0) : sqrt(rec.beta[j]);
        const Real p_next = ((x - rec.alpha[j]) * p_cur - sb * p_prev) / sb_next;
        const Real dp_next = (p_cur + (x - rec.alpha[j]) * dp_cur - sb * dp_prev) / sb_next;
        p_prev = p_cur;
        dp_prev = dp_cur;
        p_cur = p_next;
        dp_cur = dp_next;
    }
    p = p_cur;
    dp = dp_cur;
}

} // namespace detail

/// Gauss rule from a recurrence. Nodes are seeded from the double-precision
/// Jacobi-matrix eigenvalues and Newton-polished in Real; weights are the
/// Christoffel numbers mu0 / sum_j p_j(x_k)^2.
template <class Real>
QuadratureRule<Real> gauss_from_recurrence(const Recurrence<Real>& rec, std::size_t n)
{
    using std::abs;
    using std::sqrt;
    detail::require(n >= 1 && rec.alpha.size() > n, "recurrence too short for requested order");

    Eigen::VectorXd diag(static_cast<Eigen::Index>(n));
    Eigen::VectorXd sub(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
    for (std::size_t j = 0; j < n; ++j) {
        diag[static_cast<Eigen::Index>(j)] = static_cast<double>(rec.alpha[j]);
        if (j + 1 < n) {
            sub[static_cast<Eigen::Index>(j)] = std::sqrt(static_cast<double>(rec.beta[j + 1]));
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("Jacobi matrix eigenvalue iteration failed");
    }

    const Real tiny = std::numeric_limits<Real>::epsilon() * 4;
    QuadratureRule<Real> rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        Real x = Real(eig.eigenvalues()[static_cast<Eigen::Index>(k)]);
        Real p;
        Real dp;
        Real chr;
        for (int it = 0; it < 12; ++it) {
            detail::orthonormal_eval(rec, n, x, p, dp, chr);
            const Real dx = p / dp;
            x -= dx;
            if (abs(dx) <= tiny) {
                break;
            }
        }
        detail::orthonormal_eval(rec, n, x, p, dp, chr);
        rule.nodes[k] = x;
        rule.weights[k] = rec.mu0 / chr;
    }
    return rule;
}

/// Gauss–Jacobi rule for (1-x)^a (1+x)^b on [-1, 1].
template <class Real>
QuadratureRule<Real> gauss_jacobi(std::size_t n, Real a, Real b)
{
    return gauss_from_recurrence(jacobi_recurrence<Real>(n, a, b), n);
}

template <class Real>
QuadratureRule<Real> gauss_legendre(std::size_t n)
{
    return gauss_jacobi<Real>(n, Real(0), Real(0));
}

/// Integrates f over [lo, hi] with a Legendre rule given on [-1, 1].
template <class Real, class F>
Real integrate(const QuadratureRule<Real>& rule, Real lo, Real hi, F&& f)
{
    const Real half = (hi - lo) / 2;
    const Real mid = (hi + lo) / 2;
    Real sum = 0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
        sum += rule.weights[k] * f(mid + half * rule.nodes[k]);
    }
    return half * sum;
}

} // namespace tfde
