#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "tfde/cn_solver.hpp"
#include "tfde/error.hpp"
#include "tfde/gauss.hpp"

namespace tfde {

/// Tempered Caputo derivative of u(t) = t^delta (1 < delta < 2), evaluated by
/// quadrature of
///   Gamma(1-alpha)^{-1} int_0^t (t-s)^{-alpha} e^{-lambda(t-s)} (lambda s^delta + delta s^{delta-1}) ds
/// split at t/2. Each half carries its endpoint singularity in a Gauss–Jacobi
/// weight: s^{delta-1} on [0,t/2], (t-s)^{-alpha} on [t/2,t]. The order is
/// doubled from 16 until two estimates agree; rules are cached per order.
class PowerDerivativeOracle {
public:
    static constexpr std::size_t kMaxOrder = 128;

    PowerDerivativeOracle(double delta_reg, double alpha, double lambda, double tolerance = 1e-13)
        : delta_(delta_reg), alpha_(alpha), lambda_(lambda), tol_(tolerance)
    {
        detail::require(delta_reg > 1.0 && delta_reg < 2.0,
                        "PowerDerivativeOracle: delta must lie in (1,2)");
        detail::require(alpha > 0.0 && alpha < 1.0, "PowerDerivativeOracle: alpha must lie in (0,1)");
        detail::require(lambda >= 0.0, "PowerDerivativeOracle: lambda must be >= 0");
        gamma_1ma_ = std::tgamma(1.0L - static_cast<long double>(alpha));
    }

    double operator()(double t)
    {
        detail::require(t >= 0.0, "exact_tempered_caputo_power: t must be >= 0");
        if (t == 0.0) {
            return 0.0;
        }
        long double prev = estimate(t, 16);
        for (std::size_t q = 32; q <= kMaxOrder; q *= 2) {
            const long double cur = estimate(t, q);
            if (std::fabs(cur - prev) <= tol_ * std::max(1.0L, std::fabs(cur))) {
                return static_cast<double>(cur);
            }
            prev = cur;
        }
        throw ToleranceNotMet("exact_tempered_caputo_power: no convergence by order " +
                              std::to_string(kMaxOrder) + " at t = " + std::to_string(t));
    }

private:
    using Rule = QuadratureRule<long double>;

    const std::pair<Rule, Rule>& rules(std::size_t q)
    {
        auto it = cache_.find(q);
        if (it == cache_.end()) {
            const long double d = delta_;
            const long double a = alpha_;
            it = cache_.emplace(q, std::make_pair(gauss_jacobi<long double>(q, 0.0L, d - 1.0L),
                                                  gauss_jacobi<long double>(q, -a, 0.0L)))
                     .first;
        }
        return it->second;
    }

    long double estimate(double t_in, std::size_t q)
    {
        const auto& [left, right] = rules(q);
        const long double t = t_in;
        const long double d = delta_;
        const long double a = alpha_;
        const long double lam = lambda_;
        const long double quarter = t / 4.0L;

        // [0, t/2]: s = quarter (1+x), weight (1+x)^{delta-1}
        long double lo = 0.0L;
        for (std::size_t k = 0; k < left.size(); ++k) {
            const long double s = quarter * (1.0L + left.nodes[k]);
            const long double r = t - s;
            lo += left.weights[k] * std::pow(r, -a) * std::exp(-lam * r) * (lam * s + d);
        }
        lo *= std::pow(quarter, d);

        // [t/2, t]: s = 3 quarter + quarter x, weight (1-x)^{-alpha}
        long double hi = 0.0L;
        for (std::size_t k = 0; k < right.size(); ++k) {
            const long double s = 3.0L * quarter + quarter * right.nodes[k];
            const long double r = t - s;
            hi += right.weights[k] * std::exp(-lam * r) *
                  (lam * std::pow(s, d) + d * std::pow(s, d - 1.0L));
        }
        hi *= std::pow(quarter, 1.0L - a);
        return (lo + hi) / gamma_1ma_;
    }

    double delta_;
    double alpha_;
    double lambda_;
    long double tol_;
    long double gamma_1ma_;
    std::map<std::size_t, std::pair<Rule, Rule>> cache_;
};

inline double exact_tempered_caputo_power(double delta_reg, double alpha, double lambda, double t)
{
    PowerDerivativeOracle oracle(delta_reg, alpha, lambda);
    return oracle(t);
}

/// Manufactured problem with u(x,t) = e^{-lambda t}(t^delta + 1) x^2 (1-x)^2 on (0,1).
struct ManufacturedCase {
    double alpha = 0.5;
    double lambda = 1.0;
    double delta_reg = 1.8;
};

inline double exact_solution_ex2(const ManufacturedCase& c, double x, double t)
{
    const double X = x * x * (1.0 - x) * (1.0 - x);
    return std::exp(-c.lambda * t) * (std::pow(t, c.delta_reg) + 1.0) * X;
}

inline double manufactured_forcing(const ManufacturedCase& c, double x, double t)
{
    const double d = c.delta_reg;
    const double a = c.alpha;
    const double X = x * x * (1.0 - x) * (1.0 - x);
    const double td = std::pow(t, d);
    const double e = std::exp(-c.lambda * t);
    const double time_part = -c.lambda * (td + 1.0) + d * std::pow(t, d - 1.0) +
                             std::tgamma(d + 1.0) / std::tgamma(d - a + 1.0) * std::pow(t, d - a);
    const double uxx = 12.0 * x * x - 12.0 * x + 2.0;
    const double ux = 4.0 * x * x * x - 6.0 * x * x + 2.0 * x;
    return time_part * e * X - (uxx - ux) * (td + 1.0) * e;
}

/// The manufactured case as a solver problem on (0,1) x (0,T].
inline ProblemSpec example2_problem(const ManufacturedCase& c, double t_final = 2.0)
{
    ProblemSpec spec;
    spec.domain_length = 1.0;
    spec.t_final = t_final;
    spec.alpha = c.alpha;
    spec.lambda = c.lambda;
    spec.initial_condition = [c](double x) { return exact_solution_ex2(c, x, 0.0); };
    spec.forcing = [c](double x, double t) { return manufactured_forcing(c, x, t); };
    return spec;
}

} // namespace tfde
