#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "tfde/error.hpp"
#include "tfde/soe.hpp"
#include "tfde/tempered_derivative.hpp"
#include "tfde/time_mesh.hpp"

namespace tfde {

/// u_t + D^{alpha,lambda} u = u_xx - u_x + f on (0,L) x (0,T],
/// u(0,t) = u(L,t) = 0, u(x,0) = phi(x).
struct ProblemSpec {
    double domain_length = 1.0;
    double t_final = 2.0;
    double alpha = 0.5;
    double lambda = 1.0;
    std::function<double(double)> initial_condition = [](double) { return 0.0; };
    std::function<double(double, double)> forcing = [](double, double) { return 0.0; };
};

/// One Crank–Nicolson step on the M-1 interior nodes.
struct TridiagonalSystem {
    std::vector<double> sub;   // M-2 entries, sub[i] multiplies x[i] in row i+1
    std::vector<double> diag;  // M-1 entries
    std::vector<double> super; // M-2 entries, super[i] multiplies x[i+1] in row i
    std::vector<double> rhs;   // M-1 entries

    std::size_t size() const { return diag.size(); }
};

/// Full trajectory; level n occupies levels[n*(M+1) .. n*(M+1)+M].
struct Solution {
    TemporalMesh mesh;
    SpatialGrid grid;
    std::vector<double> levels;

    std::size_t width() const { return grid.n_cells + 1; }
    std::span<const double> level(std::size_t n) const
    {
        return {levels.data() + n * width(), width()};
    }
    std::span<double> level(std::size_t n) { return {levels.data() + n * width(), width()}; }
    double at(std::size_t n, std::size_t i) const { return levels[n * width() + i]; }
};

struct SolveOptions {
    /// Receives non-fatal diagnostics (step-size condition). Defaults to stderr.
    std::function<void(const std::string&)> warn;
};

namespace detail {

inline void emit_warning(const SolveOptions& opts, const std::string& msg)
{
    if (opts.warn) {
        opts.warn(msg);
    } else {
        std::cerr << "warning: " << msg << '\n';
    }
}

} // namespace detail

/// Band coefficients of the step n -> n+1.
struct StepBands {
    double eta;
    double diag;
    double sub;
    double super;
};

inline StepBands step_bands(const TemperedParams& params, double h, std::size_t n)
{
    const double tau = params.mesh->tau(n + 1);
    const double kappa = std::pow(0.5 * tau, params.alpha);
    const double eta = 1.0 / tau + 1.0 / (2.0 * std::tgamma(2.0 - params.alpha) * kappa);
    const double ih2 = 1.0 / (h * h);
    return {eta, eta + ih2, -0.5 * ih2 - 0.25 / h, -0.5 * ih2 + 0.25 / h};
}

/// Assembles the system for U^{n+1}. `known` holds, per interior node, the
/// part of the fractional derivative at t_{n+1/2} that does not involve
/// U^{n+1}; it is where the fast and the direct history routes differ.
inline TridiagonalSystem assemble_step(const ProblemSpec& spec, const TemperedParams& params,
                                       const SpatialGrid& grid, std::span<const double> u_n,
                                       std::span<const double> known, std::size_t n)
{
    const std::size_t m = grid.n_cells;
    if (u_n.size() != m + 1 || known.size() != m - 1) {
        throw DimensionMismatch("assemble_step: level has " + std::to_string(u_n.size()) +
                                " values and history " + std::to_string(known.size()) +
                                " for M = " + std::to_string(m));
    }
    const double h = grid.spacing;
    const StepBands bands = step_bands(params, h, n);
    const double tau = params.mesh->tau(n + 1);
    const double th = params.mesh->t_half(n);
    const double ih2 = 1.0 / (h * h);

    TridiagonalSystem sys;
    sys.diag.assign(m - 1, bands.diag);
    sys.sub.assign(m - 2, bands.sub);
    sys.super.assign(m - 2, bands.super);
    sys.rhs.resize(m - 1);
    for (std::size_t i = 1; i < m; ++i) {
        const double lap = (u_n[i + 1] - 2.0 * u_n[i] + u_n[i - 1]) * ih2;
        const double adv = (u_n[i + 1] - u_n[i - 1]) / (2.0 * h);
        sys.rhs[i - 1] = u_n[i] / tau - known[i - 1] + 0.5 * (lap - adv) +
                         spec.forcing(grid.nodes[i], th);
    }
    return sys;
}

/// Thomas algorithm. Throws BreakdownError on a pivot below 1e-14 * max|diag|.
inline std::vector<double> thomas_solve(const TridiagonalSystem& sys)
{
    const std::size_t n = sys.diag.size();
    if (n == 0 || sys.rhs.size() != n || sys.sub.size() + 1 != n || sys.super.size() + 1 != n) {
        throw DimensionMismatch("thomas_solve: band sizes are inconsistent");
    }
    double scale = 0.0;
    for (double d : sys.diag) {
        scale = std::max(scale, std::fabs(d));
    }
    const double floor = 1e-14 * scale;

    std::vector<double> c(n);
    std::vector<double> x(n);
    double pivot = sys.diag[0];
    if (!(std::fabs(pivot) > floor)) {
        throw BreakdownError("thomas_solve: zero pivot in row 0");
    }
    c[0] = n > 1 ? sys.super[0] / pivot : 0.0;
    x[0] = sys.rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = sys.diag[i] - sys.sub[i - 1] * c[i - 1];
        if (!(std::fabs(pivot) > floor)) {
            throw BreakdownError("thomas_solve: pivot breakdown in row " + std::to_string(i));
        }
        c[i] = i + 1 < n ? sys.super[i] / pivot : 0.0;
        x[i] = (sys.rhs[i] - sys.sub[i - 1] * x[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        x[i] -= c[i] * x[i + 1];
    }
    return x;
}

/// Max-norm of A x - rhs.
inline double residual_max(const TridiagonalSystem& sys, std::span<const double> x)
{
    const std::size_t n = sys.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = sys.diag[i] * x[i] - sys.rhs[i];
        if (i > 0) {
            r += sys.sub[i - 1] * x[i - 1];
        }
        if (i + 1 < n) {
            r += sys.super[i] * x[i + 1];
        }
        worst = std::max(worst, std::fabs(r));
    }
    return worst;
}

/// lambda_k, k = 1..m-1, of the step matrix with the given eta:
///   eta + 1/h^2 + 2 sqrt(1/(4h^4) - 1/(16h^2)) cos(k pi/m).
inline std::vector<double> eigenvalue_check(double eta, double h, std::size_t m)
{
    detail::require(h > 0.0 && m >= 2, "eigenvalue_check: need h > 0 and m >= 2");
    const double prod = (0.25 / h - 0.5 / (h * h)) * (-0.25 / h - 0.5 / (h * h));
    if (prod < 0.0) {
        throw DomainError("eigenvalue_check: h >= 2 gives complex eigenvalues");
    }
    std::vector<double> lam(m - 1);
    for (std::size_t k = 1; k < m; ++k) {
        lam[k - 1] = eta + 1.0 / (h * h) +
                     2.0 * std::sqrt(prod) *
                         std::cos(static_cast<double>(k) * std::numbers::pi / static_cast<double>(m));
    }
    return lam;
}

/// SOE history integrals for many series advanced in lockstep.
class HistoryBank {
public:
    HistoryBank(const SoeTable& soe, std::size_t series)
        : soe_(&soe), n_exp_(soe.n_exp()), series_(series), H_(series * soe.n_exp(), 0.0)
    {
    }

    std::size_t level() const { return level_; }
    std::size_t series() const { return series_; }

    /// Moves every series from level n-1 to n.
    void advance(const TemperedParams& params, std::size_t n, std::span<const double> u_prev,
                 std::span<const double> u_curr)
    {
        if (n != level_ + 1) {
            throw LevelOrderError("HistoryBank: at level " + std::to_string(level_) +
                                  ", cannot advance to " + std::to_string(n));
        }
        if (u_prev.size() != series_ || u_curr.size() != series_) {
            throw DimensionMismatch("HistoryBank: series count mismatch");
        }
        const HistoryStepFactors f = history_step_factors(params, *soe_, n);
        for (std::size_t j = 0; j < series_; ++j) {
            double* h = H_.data() + j * n_exp_;
            const double up = u_prev[j];
            const double uc = u_curr[j];
            for (std::size_t i = 0; i < n_exp_; ++i) {
                h[i] = f.decay[i] * h[i] + f.lam1[i] * uc + f.lam2[i] * up;
            }
        }
        level_ = n;
    }

    /// sum_i w_i H_i of one series.
    double weighted_sum(std::size_t j) const
    {
        return detail::soe_history_sum(*soe_, {H_.data() + j * n_exp_, n_exp_});
    }

private:
    const SoeTable* soe_;
    std::size_t n_exp_;
    std::size_t series_;
    std::vector<double> H_;
    std::size_t level_ = 0;
};

namespace detail {

inline void check_solve_inputs(const ProblemSpec& spec, const TemporalMesh& mesh,
                               const SpatialGrid& grid, const SolveOptions& opts)
{
    detail::require(spec.alpha > 0.0 && spec.alpha < 1.0, "solve: alpha must lie in (0,1)");
    detail::require(spec.lambda >= 0.0, "solve: lambda must be >= 0");
    detail::require(std::fabs(mesh.t_final - spec.t_final) <= 1e-12 * spec.t_final,
                    "solve: mesh does not end at the problem's t_final");
    detail::require(std::fabs(grid.length - spec.domain_length) <= 1e-12 * spec.domain_length,
                    "solve: grid length differs from the problem's domain length");
    detail::require(grid.spacing < 2.0, "solve: h must be < 2 for a real eigenvalue spectrum");
    detail::require(static_cast<bool>(spec.forcing) && static_cast<bool>(spec.initial_condition),
                    "solve: forcing and initial condition must be set");

    const std::vector<bool> ok = check_step_condition(mesh, spec.alpha);
    std::size_t bad = 0;
    for (bool b : ok) {
        bad += b ? 0 : 1;
    }
    if (bad > 0) {
        emit_warning(opts, std::to_string(bad) + " of " + std::to_string(ok.size()) +
                               " steps violate (tau/2)^(2-2 alpha) < 1/3");
    }
}

inline Solution initial_solution(const ProblemSpec& spec, const TemporalMesh& mesh,
                                 const SpatialGrid& grid)
{
    Solution sol{mesh, grid, std::vector<double>((mesh.n_steps + 1) * (grid.n_cells + 1), 0.0)};
    auto u0 = sol.level(0);
    for (std::size_t i = 1; i < grid.n_cells; ++i) {
        u0[i] = spec.initial_condition(grid.nodes[i]);
    }
    return sol;
}

inline void store_interior(std::span<double> level, const std::vector<double>& x)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        level[i + 1] = x[i];
    }
}

} // namespace detail

/// SOE for solving on this mesh: valid for kernel arguments down to
/// min(tau_1, tau_2/2) (the history kernel is sampled at tau_{n+1}/2).
inline Soe build_soe_for_mesh(double alpha, double epsilon, const TemporalMesh& mesh,
                              const SoeBuildOptions& options = {})
{
    const double cut = std::min(mesh.tau(1), 0.5 * mesh.tau(2));
    return build_soe(alpha, epsilon, cut, mesh.t_final, options);
}

/// Fast Crank–Nicolson march with a prebuilt SOE table.
inline Solution solve(const ProblemSpec& spec, const TemporalMesh& mesh, const SpatialGrid& grid,
                      const SoeTable& soe, const SolveOptions& opts = {})
{
    detail::check_solve_inputs(spec, mesh, grid, opts);
    const double cut = std::min(mesh.tau(1), 0.5 * mesh.tau(2));
    detail::require(soe.delta_cut <= cut * (1.0 + 1e-12) && soe.t_max >= mesh.t_final * (1.0 - 1e-12),
                    "solve: SOE validity window does not cover the mesh");

    const TemperedParams params(spec.alpha, spec.lambda, mesh);
    const std::size_t m = grid.n_cells;
    Solution sol = detail::initial_solution(spec, mesh, grid);
    HistoryBank bank(soe, m - 1);
    std::vector<double> known(m - 1);

    for (std::size_t n = 0; n < mesh.n_steps; ++n) {
        const detail::FastStencil st = detail::fast_stencil(params, n);
        const auto u_n = sol.level(n);
        const auto u_0 = sol.level(0);
        for (std::size_t i = 1; i < m; ++i) {
            double r = st.c_curr * u_n[i] + st.c_zero * u_0[i];
            if (n >= 1) {
                r -= st.c_hist * bank.weighted_sum(i - 1);
            }
            known[i - 1] = r;
        }
        const TridiagonalSystem sys = assemble_step(spec, params, grid, u_n, known, n);
        detail::store_interior(sol.level(n + 1), thomas_solve(sys));
        if (n + 1 < mesh.n_steps) {
            bank.advance(params, n + 1, sol.level(n).subspan(1, m - 1),
                         sol.level(n + 1).subspan(1, m - 1));
        }
    }
    return sol;
}

/// Builds the SOE (delta_cut from the mesh, t_max = T) and marches.
inline Solution solve(const ProblemSpec& spec, const TemporalMesh& mesh, const SpatialGrid& grid,
                      double epsilon, const SolveOptions& opts = {})
{
    const SoeTable soe = build_soe_for_mesh(spec.alpha, epsilon, mesh).cast<double>();
    return solve(spec, mesh, grid, soe, opts);
}

/// Reference march: same assembly, history from the direct L1 sums (O(N^2 M)).
inline Solution solve_reference(const ProblemSpec& spec, const TemporalMesh& mesh,
                                const SpatialGrid& grid, const SolveOptions& opts = {})
{
    detail::check_solve_inputs(spec, mesh, grid, opts);
    const TemperedParams params(spec.alpha, spec.lambda, mesh);
    const std::size_t m = grid.n_cells;
    Solution sol = detail::initial_solution(spec, mesh, grid);
    std::vector<double> known(m - 1);

    for (std::size_t n = 0; n < mesh.n_steps; ++n) {
        const std::vector<double> w = direct_l1_weights(params, n);
        std::fill(known.begin(), known.end(), 0.0);
        for (std::size_t j = 0; j <= n; ++j) {
            const auto u_j = sol.level(j);
            const double wj = w[j];
            for (std::size_t i = 1; i < m; ++i) {
                known[i - 1] += wj * u_j[i];
            }
        }
        const TridiagonalSystem sys = assemble_step(spec, params, grid, sol.level(n), known, n);
        detail::store_interior(sol.level(n + 1), thomas_solve(sys));
    }
    return sol;
}

/// CSV with header `x,t,u`, one row per (level, node), levels outermost.
inline void write_solution_csv(std::ostream& os, const Solution& sol)
{
    os << "x,t,u\n" << std::setprecision(17);
    for (std::size_t n = 0; n <= sol.mesh.n_steps; ++n) {
        for (std::size_t i = 0; i <= sol.grid.n_cells; ++i) {
            os << sol.grid.nodes[i] << ',' << sol.mesh.nodes[n] << ',' << sol.at(n, i) << '\n';
        }
    }
}

/// Dense matrix read back from an export: rows = spatial nodes (M+1),
/// cols = time levels (N+1), row-major.
struct SolutionMatrix {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<double> data;

    double at(std::size_t i, std::size_t n) const { return data[i * cols + n]; }
};

/// Binary dump: uint64 M+1, uint64 N+1, then (M+1)(N+1) doubles with
/// U_i^n at position i*(N+1) + n. Native byte order.
inline void write_solution_binary(std::ostream& os, const Solution& sol)
{
    const std::uint64_t rows = sol.grid.n_cells + 1;
    const std::uint64_t cols = sol.mesh.n_steps + 1;
    os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
        for (std::uint64_t n = 0; n < cols; ++n) {
            row[n] = sol.at(n, i);
        }
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(cols * sizeof(double)));
    }
}

inline SolutionMatrix read_solution_binary(std::istream& is)
{
    SolutionMatrix out;
    is.read(reinterpret_cast<char*>(&out.rows), sizeof out.rows);
    is.read(reinterpret_cast<char*>(&out.cols), sizeof out.cols);
    if (!is || out.rows == 0 || out.cols == 0 || out.rows > (1u << 28) / out.cols) {
        throw InvalidParameter("read_solution_binary: bad header");
    }
    out.data.resize(out.rows * out.cols);
    is.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(out.data.size() * sizeof(double)));
    if (!is) {
        throw InvalidParameter("read_solution_binary: truncated data");
    }
    return out;
}

/// Parses the `x,t,u` CSV back into a matrix with the binary layout.
inline SolutionMatrix read_solution_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != "x,t,u") {
        throw InvalidParameter("read_solution_csv: missing `x,t,u` header");
    }
    std::vector<double> xs;
    std::vector<double> ts;
    std::vector<double> us;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        double x;
        double t;
        double u;
        char c1;
        char c2;
        if (!(row >> x >> c1 >> t >> c2 >> u) || c1 != ',' || c2 != ',') {
            throw InvalidParameter("read_solution_csv: malformed row `" + line + "`");
        }
        xs.push_back(x);
        ts.push_back(t);
        us.push_back(u);
    }
    std::size_t rows = 0;
    while (rows < ts.size() && ts[rows] == ts[0]) {
        ++rows;
    }
    if (rows == 0 || us.size() % rows != 0) {
        throw InvalidParameter("read_solution_csv: ragged table");
    }
    SolutionMatrix out;
    out.rows = rows;
    out.cols = us.size() / rows;
    out.data.resize(us.size());
    for (std::size_t n = 0; n < out.cols; ++n) {
        for (std::size_t i = 0; i < rows; ++i) {
            out.data[i * out.cols + n] = us[n * rows + i];
        }
    }
    return out;
}

} // namespace tfde
