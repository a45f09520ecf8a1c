#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/float128.hpp>

#include "tfde/error.hpp"
#include "tfde/gauss.hpp"

namespace tfde {

/// IEEE quad precision. Exponential sums are built and checked in this type:
/// the kernel t^{-1-alpha} reaches 1e9 near small cutoffs, so an absolute
/// error target of 1e-10 is below double rounding of the kernel itself.
using extended_real = boost::multiprecision::float128;

/// Exponential-sum approximation of t^{-1-alpha} on [delta_cut, t_max]:
///   t^{-1-alpha} ~ sum_l weights[l] * exp(-exponents[l] * t)
template <class Real>
struct SoeApproximation {
    Real alpha = 0;
    Real epsilon = 0;
    Real delta_cut = 0;
    Real t_max = 0;
    std::vector<Real> exponents;
    std::vector<Real> weights;

    std::size_t n_exp() const { return exponents.size(); }

    template <class To>
    SoeApproximation<To> cast() const
    {
        SoeApproximation<To> out;
        out.alpha = static_cast<To>(alpha);
        out.epsilon = static_cast<To>(epsilon);
        out.delta_cut = static_cast<To>(delta_cut);
        out.t_max = static_cast<To>(t_max);
        out.exponents.reserve(n_exp());
        out.weights.reserve(n_exp());
        for (std::size_t l = 0; l < n_exp(); ++l) {
            out.exponents.push_back(static_cast<To>(exponents[l]));
            out.weights.push_back(static_cast<To>(weights[l]));
        }
        return out;
    }
};

using Soe = SoeApproximation<extended_real>;
using SoeTable = SoeApproximation<double>;

struct SoeBuildOptions {
    std::size_t verify_samples = 10000;
    int max_refinements = 3;
    /// Multiplies every panel order before the first attempt (test hook for
    /// exercising the refinement path; 1.0 in normal use).
    double order_scale = 1.0;
};

/// Sum of the exponentials at t. Throws DomainError outside [delta_cut, t_max].
template <class Real>
Real eval_soe(const SoeApproximation<Real>& soe, const Real& t)
{
    using std::exp;
    if (!(t >= soe.delta_cut && t <= soe.t_max)) {
        throw DomainError("eval_soe: t outside the validity window");
    }
    Real sum = 0;
    for (std::size_t l = 0; l < soe.n_exp(); ++l) {
        sum += soe.weights[l] * exp(-soe.exponents[l] * t);
    }
    return sum;
}

namespace detail {

// Terms with s*t beyond this are below 1e-40 of the kernel and are skipped.
inline constexpr double kSoeNegligibleArgument = 120.0;

// Compensated sum in precision F with a running rounding bound. Returns
// false when the bound is not well below the tolerance.
template <class F, class Real>
bool soe_abs_error_fast(const SoeApproximation<Real>& soe, F t, double tolerance, F& err)
{
    const F u = std::numeric_limits<F>::epsilon();
    const F beta = F(1) + static_cast<F>(soe.alpha);
    const F kernel = std::pow(t, -beta);

    F sum = 0;
    F carry = 0;
    F rounding = 0;
    for (std::size_t l = 0; l < soe.n_exp(); ++l) {
        const F x = static_cast<F>(soe.exponents[l]) * t;
        if (x > F(kSoeNegligibleArgument)) {
            continue;
        }
        const F term = static_cast<F>(soe.weights[l]) * std::exp(-x);
        rounding += term * (x + F(4));
        const F y = term - carry;
        const F s = sum + y;
        carry = (s - sum) - y;
        sum = s;
    }
    const F bound = u * (rounding + F(2) * sum + (F(4) + beta * std::fabs(std::log(t))) * kernel);
    err = std::fabs(kernel - sum);
    return bound <= F(1e-2) * static_cast<F>(tolerance);
}

// |t^{-1-alpha} - sum| at one abscissa: double, then long double, then quad
// for samples where the cheaper rounding bound is too coarse.
template <class Real>
double soe_abs_error_at(const SoeApproximation<Real>& soe, long double t, double tolerance)
{
    double err_d = 0;
    if (soe_abs_error_fast<double>(soe, static_cast<double>(t), tolerance, err_d)) {
        return err_d;
    }
    long double err_l = 0;
    if (soe_abs_error_fast<long double>(soe, t, tolerance, err_l)) {
        return static_cast<double>(err_l);
    }

    const long double u = std::numeric_limits<long double>::epsilon();
    using boost::multiprecision::exp;
    using boost::multiprecision::pow;
    // Terms whose long double rounding is negligible against the tolerance
    // skip the (slow) quad exponential.
    const long double cheap = 1e-4L * static_cast<long double>(tolerance) /
                              static_cast<long double>(soe.n_exp() + 1);
    const extended_real te = t;
    extended_real qsum = 0;
    for (std::size_t l = 0; l < soe.n_exp(); ++l) {
        const long double xl = static_cast<long double>(soe.exponents[l]) * t;
        if (xl > kSoeNegligibleArgument) {
            continue;
        }
        const long double term = static_cast<long double>(soe.weights[l]) * std::exp(-xl);
        if (u * term * (xl + 4.0L) <= cheap) {
            qsum += term;
            continue;
        }
        const extended_real x = extended_real(soe.exponents[l]) * te;
        qsum += extended_real(soe.weights[l]) * exp(-x);
    }
    const extended_real qkernel = pow(te, -(extended_real(1) + extended_real(soe.alpha)));
    return static_cast<double>(abs(qkernel - qsum));
}

// sample_count log-spaced abscissas in [lo, hi], endpoints exact.
inline std::vector<long double> log_spaced(long double lo, long double hi, std::size_t count)
{
    std::vector<long double> pts(count);
    const long double span = std::log(hi / lo);
    for (std::size_t j = 0; j < count; ++j) {
        const long double f = static_cast<long double>(j) / static_cast<long double>(count - 1);
        pts[j] = lo * std::exp(f * span);
    }
    pts.front() = lo;
    pts.back() = hi;
    return pts;
}

} // namespace detail

/// Max over sample_count log-spaced points of |t^{-1-alpha} - eval_soe(t)|,
/// measured in extended precision.
template <class Real>
double verify_soe(const SoeApproximation<Real>& soe, std::size_t sample_count)
{
    detail::require(sample_count >= 2, "verify_soe: need at least 2 samples");
    const auto lo = static_cast<long double>(soe.delta_cut);
    const auto hi = static_cast<long double>(soe.t_max);
    detail::require(lo > 0.0L && hi >= lo, "verify_soe: window must satisfy 0 < delta_cut <= t_max");
    const double tol = static_cast<double>(soe.epsilon) > 0.0 ? static_cast<double>(soe.epsilon)
                                                               : 1e-300;
    double worst = 0.0;
    for (long double t : detail::log_spaced(lo, hi, sample_count)) {
        worst = std::max(worst, detail::soe_abs_error_at(soe, t, tol));
    }
    return worst;
}

namespace detail {

struct SoePlan {
    extended_real s0;          // end of the Gauss–Jacobi panel [0, s0]
    std::vector<extended_real> edges; // dyadic panel edges s0 * 2^k
    int jacobi_order;
    std::vector<int> panel_orders;
};

// Tail cut S with  int_S^inf e^{-delta s} s^alpha ds / Gamma(beta) <= eps/4.
inline extended_real soe_tail_cut(const extended_real& alpha, const extended_real& eps,
                                  const extended_real& delta, const extended_real& gamma_beta)
{
    using boost::multiprecision::log;
    using boost::multiprecision::pow;
    extended_real s = 1 / delta;
    for (int it = 0; it < 60; ++it) {
        const extended_real target = 4 * pow(s, alpha) / (delta * gamma_beta * eps);
        extended_real next = log(target > 1 ? target : extended_real(1)) / delta;
        next = next > 2 * alpha / delta ? next : 2 * alpha / delta;
        if (abs(next - s) <= 1e-12 * s) {
            s = next;
            break;
        }
        s = next;
    }
    // Bound uses 1/(delta - alpha/S); margin keeps it honest when delta*S is small.
    return s * extended_real(1.05) + 4 / delta;
}

// Panel order: observed convergence ~ e^{-5q} of q-point Gauss rules on a dyadic
// panel; sized so each panel contributes well under eps/P.
inline int soe_panel_order(const extended_real& panel_mass, std::size_t panels,
                           const extended_real& gamma_beta, const extended_real& eps,
                           double scale)
{
    using boost::multiprecision::log;
    const extended_real ratio =
        8 * panel_mass * extended_real(static_cast<double>(panels + 1)) / (gamma_beta * eps);
    const double lg = ratio > 1 ? static_cast<double>(log(ratio)) : 0.0;
    const int q = static_cast<int>(std::ceil(scale * (lg / 5.0 + 2.5)));
    return std::clamp(q, 4, 400);
}

} // namespace detail

/// Builds an exponential sum for t^{-1-alpha} with uniform absolute error
/// <= epsilon on [delta_cut, t_max].
///
/// t^{-beta} = Gamma(beta)^{-1} int_0^inf e^{-ts} s^{beta-1} ds, beta = 1+alpha,
/// discretized by a Gauss–Jacobi panel on [0, 1/t_max] (weight s^alpha) and
/// Gauss–Legendre panels on dyadic intervals up to a tail cut. The result is
/// checked on verify_samples log-spaced points; on failure every panel order
/// is doubled, up to max_refinements times.
inline Soe build_soe(double alpha, double epsilon, double delta_cut, double t_max,
                     const SoeBuildOptions& options = {})
{
    using boost::multiprecision::exp;
    using boost::multiprecision::log;
    using boost::multiprecision::pow;

    detail::require(alpha > 0.0 && alpha < 1.0, "build_soe: alpha must lie in (0,1)");
    detail::require(epsilon > 0.0, "build_soe: epsilon must be positive");
    detail::require(delta_cut > 0.0 && delta_cut < t_max,
                    "build_soe: need 0 < delta_cut < t_max");
    detail::require(options.verify_samples >= 2, "build_soe: need at least 2 verification samples");

    const extended_real a = alpha;
    const extended_real beta = a + 1;
    const extended_real eps = epsilon;
    const extended_real delta = delta_cut;
    const extended_real tmax = t_max;
    const extended_real gamma_beta = boost::math::tgamma(beta);

    // Verification resolves |kernel - sum| only down to a few quad ulps of the kernel.
    if (eps < 64 * std::numeric_limits<extended_real>::epsilon() * pow(delta, -beta)) {
        std::ostringstream msg;
        msg << "build_soe: epsilon " << epsilon << " is below extended-precision resolution of "
            << "the kernel at delta_cut " << delta_cut;
        throw ConstructionFailure(msg.str());
    }

    detail::SoePlan plan;
    plan.s0 = 1 / tmax;
    const extended_real s_cut = detail::soe_tail_cut(a, eps, delta, gamma_beta);
    plan.edges.push_back(plan.s0);
    while (plan.edges.back() < s_cut) {
        plan.edges.push_back(plan.edges.back() * 2);
    }
    const std::size_t panels = plan.edges.size();
    plan.jacobi_order = detail::soe_panel_order(pow(plan.s0, beta), panels, gamma_beta, eps,
                                                options.order_scale);
    for (std::size_t k = 0; k + 1 < plan.edges.size(); ++k) {
        plan.panel_orders.push_back(detail::soe_panel_order(
            pow(plan.edges[k + 1], beta), panels, gamma_beta, eps, options.order_scale));
    }

    std::map<int, QuadratureRule<extended_real>> legendre_cache;
    for (int attempt = 0; attempt <= options.max_refinements; ++attempt) {
        const int mult = 1 << attempt;
        Soe soe;
        soe.alpha = a;
        soe.epsilon = eps;
        soe.delta_cut = delta;
        soe.t_max = tmax;

        const auto jac = gauss_jacobi<extended_real>(
            static_cast<std::size_t>(plan.jacobi_order * mult), extended_real(0), a);
        const extended_real half0 = plan.s0 / 2;
        const extended_real jac_scale = pow(half0, beta) / gamma_beta;
        for (std::size_t k = 0; k < jac.size(); ++k) {
            soe.exponents.push_back(half0 * (1 + jac.nodes[k]));
            soe.weights.push_back(jac_scale * jac.weights[k]);
        }
        for (std::size_t p = 0; p + 1 < plan.edges.size(); ++p) {
            const int q = plan.panel_orders[p] * mult;
            auto it = legendre_cache.find(q);
            if (it == legendre_cache.end()) {
                it = legendre_cache.emplace(q, gauss_legendre<extended_real>(static_cast<std::size_t>(q)))
                         .first;
            }
            const auto& gl = it->second;
            const extended_real lo = plan.edges[p];
            const extended_real hi = plan.edges[p + 1];
            const extended_real half = (hi - lo) / 2;
            const extended_real mid = (hi + lo) / 2;
            for (std::size_t k = 0; k < gl.size(); ++k) {
                const extended_real s = mid + half * gl.nodes[k];
                soe.exponents.push_back(s);
                soe.weights.push_back(half * gl.weights[k] * pow(s, a) / gamma_beta);
            }
        }

        const double err = verify_soe(soe, options.verify_samples);
        if (err <= epsilon) {
            return soe;
        }
        if (attempt == options.max_refinements) {
            std::ostringstream msg;
            msg << "build_soe: sampled error " << err << " exceeds epsilon " << epsilon
                << " after " << options.max_refinements << " refinements";
            throw ConstructionFailure(msg.str());
        }
    }
    throw ConstructionFailure("build_soe: unreachable");
}

/// Writes `s,w` pairs as CSV (17 significant digits for double, 36 for quad).
template <class Real>
void write_soe_csv(std::ostream& os, const SoeApproximation<Real>& soe)
{
    // Metadata started life as doubles; print their shortest round-trip form.
    const auto meta = [](const Real& v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, static_cast<double>(v));
        return std::string(buf, res.ptr);
    };
    os << "# alpha=" << meta(soe.alpha) << " epsilon=" << meta(soe.epsilon)
       << " delta_cut=" << meta(soe.delta_cut) << " t_max=" << meta(soe.t_max) << "\n";
    os << std::setprecision(std::numeric_limits<Real>::max_digits10) << "s,w\n";
    for (std::size_t l = 0; l < soe.n_exp(); ++l) {
        os << soe.exponents[l] << ',' << soe.weights[l] << '\n';
    }
}

namespace detail {

template <class Real>
Real parse_soe_number(const std::string& text)
{
    try {
        if constexpr (std::is_floating_point_v<Real>) {
            Real v{};
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size()) {
                throw std::invalid_argument(text);
            }
            return v;
        } else {
            return Real(text);
        }
    } catch (const std::exception&) {
        throw InvalidParameter("read_soe_csv: bad number `" + text + "`");
    }
}

} // namespace detail

/// Reads the format produced by write_soe_csv.
template <class Real>
SoeApproximation<Real> read_soe_csv(std::istream& is)
{
    SoeApproximation<Real> soe;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string kv;
            while (meta >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    continue;
                }
                const std::string key = kv.substr(0, eq);
                const Real value = static_cast<Real>(detail::parse_soe_number<double>(kv.substr(eq + 1)));
                if (key == "alpha") soe.alpha = value;
                else if (key == "epsilon") soe.epsilon = value;
                else if (key == "delta_cut") soe.delta_cut = value;
                else if (key == "t_max") soe.t_max = value;
            }
            continue;
        }
        if (!header_seen) {
            if (line != "s,w") {
                throw InvalidParameter("read_soe_csv: missing `s,w` header");
            }
            header_seen = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw InvalidParameter("read_soe_csv: malformed row `" + line + "`");
        }
        soe.exponents.push_back(detail::parse_soe_number<Real>(line.substr(0, comma)));
        soe.weights.push_back(detail::parse_soe_number<Real>(line.substr(comma + 1)));
    }
    if (!header_seen) {
        throw InvalidParameter("read_soe_csv: missing `s,w` header");
    }
    return soe;
}

} // namespace tfde
