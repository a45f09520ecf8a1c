#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tfde/error.hpp"
#include "tfde/gauss.hpp"
#include "tfde/soe.hpp"
#include "tfde/time_mesh.hpp"

namespace tfde {

/// Order alpha, tempering lambda and the mesh the derivative lives on.
/// lambda = 0 is the plain Caputo derivative.
struct TemperedParams {
    double alpha;
    double lambda;
    const TemporalMesh* mesh;
    double gamma_1ma; // Gamma(1 - alpha)

    TemperedParams(double alpha_, double lambda_, const TemporalMesh& mesh_)
        : alpha(alpha_), lambda(lambda_), mesh(&mesh_), gamma_1ma(0)
    {
        detail::require(alpha > 0.0 && alpha < 1.0, "TemperedParams: alpha must lie in (0,1)");
        detail::require(lambda >= 0.0, "TemperedParams: lambda must be >= 0");
        gamma_1ma = std::tgamma(1.0 - alpha);
    }
};

/// Weights of u(t_n) (lam1) and u(t_{n-1}) (lam2) in
///   int_{t_{n-1}}^{t_n} e^{-(lambda+s)(t_{n+1/2}-s')} L u(s') ds'.
struct InterpWeights {
    double lam1;
    double lam2;
};

struct HistoryCoeffs {
    double a;
    double b;
};

namespace detail {

// phi1(x) = (e^{-x} - 1 + x)/x^2,  phi2(x) = (1 - e^{-x}(1 + x))/x^2.
inline void interp_phi(double x, double& phi1, double& phi2)
{
    if (x < 1e-4) {
        phi1 = 0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0;
        phi2 = 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0;
        return;
    }
    if (x < 1.0) {
        // The closed forms still lose ~log10(1/x) digits here.
        double term = 0.5; // (-x)^k/(k+2)!
        phi1 = 0.0;
        phi2 = 0.0;
        for (int k = 0; k < 30 && std::fabs(term) > 1e-18; ++k) {
            phi1 += term;
            phi2 += term * (k + 1);
            term *= -x / (k + 3);
        }
        return;
    }
    const double em = std::expm1(-x);
    phi1 = (em + x) / (x * x);
    phi2 = (-em - x * (em + 1.0)) / (x * x);
}

} // namespace detail

/// lam1/lam2 for the level-n step (1 <= n <= N-1) and exponent s.
inline InterpWeights interp_weights(const TemperedParams& params, double s, std::size_t n)
{
    const TemporalMesh& mesh = *params.mesh;
    detail::require(n >= 1 && n + 1 <= mesh.n_steps, "interp_weights: need 1 <= n <= N-1");
    const double mu = params.lambda + s;
    detail::require(mu > 0.0, "interp_weights: lambda + s must be positive");
    const double tau_n = mesh.tau(n);
    const double shift = std::exp(-mu * 0.5 * mesh.tau(n + 1));
    double phi1;
    double phi2;
    detail::interp_phi(mu * tau_n, phi1, phi2);
    return {shift * tau_n * phi1, shift * tau_n * phi2};
}

/// a_{j,n}, b_{j,n}: weights of u^{n-j} and u^{n-j-1} in the SOE history sum
/// alpha * sum_i w_i int_0^{t_n} e^{-(lambda+s_i)(t_{n+1/2}-s)} L u(s) ds.
template <class Real>
HistoryCoeffs history_coeffs(const TemperedParams& params, const SoeApproximation<Real>& soe,
                             std::size_t j, std::size_t n)
{
    const TemporalMesh& mesh = *params.mesh;
    detail::require(n >= 1 && j + 1 <= n, "history_coeffs: need 0 <= j <= n-1");
    const double lag = mesh.t_half(n) - mesh.t_half(n - j);
    HistoryCoeffs out{0.0, 0.0};
    for (std::size_t i = 0; i < soe.n_exp(); ++i) {
        const double s = static_cast<double>(soe.exponents[i]);
        const double w = static_cast<double>(soe.weights[i]);
        const double decay = std::exp(-(params.lambda + s) * lag);
        const InterpWeights iw = interp_weights(params, s, n - j);
        out.a += w * decay * iw.lam1;
        out.b += w * decay * iw.lam2;
    }
    out.a *= params.alpha;
    out.b *= params.alpha;
    return out;
}

/// Per-exponent step factors shared by every series advanced through the
/// same level: decay e^{-(lambda+s_i)(tau_n+tau_{n+1})/2} and lam1/lam2.
struct HistoryStepFactors {
    std::vector<double> decay;
    std::vector<double> lam1;
    std::vector<double> lam2;
};

inline HistoryStepFactors history_step_factors(const TemperedParams& params, const SoeTable& soe,
                                               std::size_t n)
{
    const TemporalMesh& mesh = *params.mesh;
    detail::require(n >= 1 && n + 1 <= mesh.n_steps,
                    "history_step_factors: history only advances to levels 1..N-1");
    const double gap = 0.5 * (mesh.tau(n) + mesh.tau(n + 1));
    HistoryStepFactors f;
    f.decay.resize(soe.n_exp());
    f.lam1.resize(soe.n_exp());
    f.lam2.resize(soe.n_exp());
    for (std::size_t i = 0; i < soe.n_exp(); ++i) {
        const double s = soe.exponents[i];
        f.decay[i] = std::exp(-(params.lambda + s) * gap);
        const InterpWeights iw = interp_weights(params, s, n);
        f.lam1[i] = iw.lam1;
        f.lam2[i] = iw.lam2;
    }
    return f;
}

/// Running SOE history integrals of one scalar series.
/// At level n, H[i] ~ int_0^{t_n} e^{-(lambda+s_i)(t_{n+1/2}-s)} L u(s) ds.
struct HistoryState {
    const SoeTable* soe = nullptr;
    std::vector<double> H;
    std::size_t level = 0;

    HistoryState() = default;
    explicit HistoryState(const SoeTable& table) : soe(&table), H(table.n_exp(), 0.0) {}
};

inline void advance_history(HistoryState& state, const HistoryStepFactors& f, double u_prev,
                            double u_curr)
{
    for (std::size_t i = 0; i < state.H.size(); ++i) {
        state.H[i] = f.decay[i] * state.H[i] + f.lam1[i] * u_curr + f.lam2[i] * u_prev;
    }
    ++state.level;
}

/// Moves the state from level n-1 to level n = state.level + 1, given
/// u_prev = u(t_{n-1}) and u_curr = u(t_n).
inline void advance_history(HistoryState& state, const TemperedParams& params, double u_prev,
                            double u_curr, std::size_t target_level)
{
    if (state.soe == nullptr) {
        throw InvalidParameter("advance_history: state has no SOE attached");
    }
    if (target_level != state.level + 1) {
        throw LevelOrderError("advance_history: state is at level " + std::to_string(state.level) +
                              ", cannot advance to " + std::to_string(target_level));
    }
    advance_history(state, history_step_factors(params, *state.soe, target_level), u_prev,
                    u_curr);
}

inline void advance_history(HistoryState& state, const TemperedParams& params, double u_prev,
                            double u_curr)
{
    advance_history(state, params, u_prev, u_curr, state.level + 1);
}

namespace detail {

// Coefficients of the fast operator at t_{n+1/2}, apart from the SOE sum:
//   D = c_next*u^{n+1} + c_curr*u^n + c_zero*u^0 - c_hist * sum_i w_i H_i
struct FastStencil {
    double c_next = 0;
    double c_curr = 0;
    double c_zero = 0;
    double c_hist = 0;
};

inline FastStencil fast_stencil(const TemperedParams& params, std::size_t n)
{
    const TemporalMesh& mesh = *params.mesh;
    const double half = 0.5 * mesh.tau(n + 1);
    const double kappa = std::pow(half, params.alpha);
    const double shift = std::exp(-params.lambda * half);
    const double g = 1.0 / params.gamma_1ma;
    const double local = 1.0 / ((1.0 - params.alpha) * kappa);

    FastStencil st;
    st.c_next = g * 0.5 * local;
    st.c_curr = g * (0.5 * local - shift * local);
    if (n >= 1) {
        const double th = mesh.t_half(n);
        st.c_curr += g * shift / kappa;
        st.c_zero = -g * std::exp(-params.lambda * th) / std::pow(th, params.alpha);
        st.c_hist = g * params.alpha;
    }
    return st;
}

inline double soe_history_sum(const SoeTable& soe, std::span<const double> H)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < H.size(); ++i) {
        sum += soe.weights[i] * H[i];
    }
    return sum;
}

} // namespace detail

/// Fast approximation of the tempered Caputo derivative at t_{n+1/2}.
/// The state must sit at level n; at n = 0 the history is empty.
inline double fast_derivative(const HistoryState& state, const TemperedParams& params, double u_0,
                              double u_n, double u_np1, std::size_t n)
{
    detail::require(n + 1 <= params.mesh->n_steps, "fast_derivative: n must be < N");
    if (state.level != n) {
        throw LevelOrderError("fast_derivative: history is at level " +
                              std::to_string(state.level) + ", expected " + std::to_string(n));
    }
    const detail::FastStencil st = detail::fast_stencil(params, n);
    double d = st.c_next * u_np1 + st.c_curr * u_n + st.c_zero * u_0;
    if (n >= 1) {
        d -= st.c_hist * detail::soe_history_sum(*state.soe, state.H);
    }
    return d;
}

/// Direct L1 derivative as a linear functional: D(t_{n+1/2}) = sum_j w[j] u^j,
/// j = 0..n+1. History subintervals use 32-point Gauss–Legendre against the
/// exact tempered kernel; cost O(n).
inline std::vector<double> direct_l1_weights(const TemperedParams& params, std::size_t n)
{
    static const QuadratureRule<double> gl = gauss_legendre<double>(32);
    const TemporalMesh& mesh = *params.mesh;
    detail::require(n + 1 <= mesh.n_steps, "direct_l1_weights: n must be < N");

    const double a = params.alpha;
    const double lam = params.lambda;
    const double th = mesh.t_half(n);
    const double g = 1.0 / params.gamma_1ma;
    std::vector<double> w(n + 2, 0.0);

    // int_{t_k}^{t_{k+1}} K(s) [lam L(s) + slope] ds with K = (th-s)^{-a} e^{-lam(th-s)}
    for (std::size_t k = 0; k < n; ++k) {
        const double lo = mesh.t(k);
        const double tau = mesh.tau(k + 1);
        const double half = 0.5 * tau;
        const double mid = lo + half;
        double m0 = 0.0; // int K
        double m1 = 0.0; // int K (s - lo)/tau
        for (std::size_t q = 0; q < gl.size(); ++q) {
            const double s = mid + half * gl.nodes[q];
            const double r = th - s;
            const double kv = gl.weights[q] * std::pow(r, -a) * std::exp(-lam * r);
            m0 += kv;
            m1 += kv * (s - lo) / tau;
        }
        m0 *= half;
        m1 *= half;
        // L(s) = u_k (1 - theta) + u_{k+1} theta, slope = (u_{k+1} - u_k)/tau
        w[k] += g * (lam * (m0 - m1) - m0 / tau);
        w[k + 1] += g * (lam * m1 + m0 / tau);
    }

    const double hs = 0.5 * mesh.tau(n + 1);
    const double kappa = std::pow(hs, a);
    const double local = g / ((1.0 - a) * kappa);
    const double shift = std::exp(-lam * hs);
    w[n + 1] += 0.5 * local;
    w[n] += 0.5 * local - shift * local;
    return w;
}

/// Quadratic-cost oracle for the tempered derivative at t_{n+1/2};
/// u_values holds u^0..u^{n+1}.
inline double direct_l1_derivative(const TemperedParams& params, std::span<const double> u_values,
                                   std::size_t n)
{
    if (u_values.size() != n + 2) {
        throw DimensionMismatch("direct_l1_derivative: need n+2 values");
    }
    const std::vector<double> w = direct_l1_weights(params, n);
    double d = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        d += w[j] * u_values[j];
    }
    return d;
}

/// Plain Caputo (lambda ignored) L1 derivative at t_{n+1/2} with every
/// kernel integral in closed form.
inline double caputo_l1_derivative(const TemperedParams& params, std::span<const double> u_values,
                                   std::size_t n)
{
    if (u_values.size() != n + 2) {
        throw DimensionMismatch("caputo_l1_derivative: need n+2 values");
    }
    const TemporalMesh& mesh = *params.mesh;
    const double b = 1.0 - params.alpha;
    const double th = mesh.t_half(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double slope = (u_values[k + 1] - u_values[k]) / mesh.tau(k + 1);
        acc += slope * (std::pow(th - mesh.t(k), b) - std::pow(th - mesh.t(k + 1), b)) / b;
    }
    const double hs = 0.5 * mesh.tau(n + 1);
    const double slope = 0.5 * (u_values[n + 1] - u_values[n]) / hs;
    acc += slope * std::pow(hs, b) / b;
    return acc / params.gamma_1ma;
}

} // namespace tfde
