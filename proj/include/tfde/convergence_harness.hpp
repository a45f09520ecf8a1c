#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tfde/cn_solver.hpp"
#include "tfde/error.hpp"
#include "tfde/reference_oracles.hpp"
#include "tfde/soe.hpp"
#include "tfde/tempered_derivative.hpp"
#include "tfde/time_mesh.hpp"

namespace tfde {

struct ErrorRow {
    std::size_t n_steps;
    double error;
    std::optional<double> order;
};

struct ErrorTable {
    std::string experiment;
    double alpha = 0;
    double lambda = 0;
    double delta_reg = 0;
    double grading = 0;
    double t_final = 0;
    double epsilon = 0;
    std::string m_coupling; // empty for the derivative experiment
    std::size_t n_exp = 0;  // terms of the SOE used
    std::vector<ErrorRow> rows;
};

/// log(e_coarse/e_fine) / log(ratio).
inline double observed_order(double e_coarse, double e_fine, double ratio)
{
    detail::require(e_coarse > 0.0 && e_fine > 0.0, "observed_order: errors must be positive");
    detail::require(ratio > 0.0 && ratio != 1.0, "observed_order: ratio must be positive and != 1");
    return std::log(e_coarse / e_fine) / std::log(ratio);
}

/// sqrt(h sum_{i=0}^{M} (u(x_i,t_n) - U_i^n)^2).
inline double l2_error(const Solution& sol, const std::function<double(double, double)>& exact,
                       std::size_t level)
{
    const double t = sol.mesh.t(level);
    double acc = 0.0;
    for (std::size_t i = 0; i <= sol.grid.n_cells; ++i) {
        const double d = exact(sol.grid.nodes[i], t) - sol.at(level, i);
        acc += d * d;
    }
    return std::sqrt(sol.grid.spacing * acc);
}

/// Grid-function L2 norm sqrt(h sum_i v_i^2).
inline double l2_norm(std::span<const double> v, double h)
{
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(h * acc);
}

/// Parallel cell count: TFDE_THREADS if set to a positive integer, otherwise
/// the hardware concurrency.
inline std::size_t worker_count()
{
    if (const char* env = std::getenv("TFDE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(k) for k in [0, count) on up to worker_count() threads. The
/// first exception thrown by any cell is rethrown.
inline void parallel_cells(std::size_t count, const std::function<void(std::size_t)>& body)
{
    const std::size_t workers = std::min(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) {
            body(k);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace detail {

inline void require_doubling(const std::vector<std::size_t>& ns)
{
    detail::require(!ns.empty(), "harness: need at least one N");
    for (std::size_t k = 1; k < ns.size(); ++k) {
        detail::require(ns[k] == 2 * ns[k - 1], "harness: N values must double");
    }
}

inline double smallest_cut(const std::vector<std::size_t>& ns, double t_final, double r)
{
    double cut = t_final;
    for (std::size_t n : ns) {
        const TemporalMesh mesh = graded_mesh(t_final, n, r);
        cut = std::min({cut, mesh.tau(1), 0.5 * mesh.tau(2)});
    }
    return cut;
}

} // namespace detail

struct Example1Config {
    std::vector<double> alphas{0.1, 0.3, 0.5};
    double lambda = 1.0;
    double delta_reg = 1.5;
    double grading = 1.5;
    double t_final = 2.0;
    std::vector<std::size_t> ns{80, 160, 320, 640};
    double epsilon = 1e-12;
};

/// Max over half-points of |exact - fast| for u = t^delta on one mesh.
inline double example1_error(const Example1Config& cfg, double alpha, std::size_t n_steps,
                             const SoeTable& soe, PowerDerivativeOracle& oracle)
{
    const TemporalMesh mesh = graded_mesh(cfg.t_final, n_steps, cfg.grading);
    const TemperedParams params(alpha, cfg.lambda, mesh);
    std::vector<double> u(n_steps + 1);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        u[n] = std::pow(mesh.t(n), cfg.delta_reg);
    }
    HistoryState state(soe);
    double worst = 0.0;
    for (std::size_t n = 0; n < n_steps; ++n) {
        const double fast = fast_derivative(state, params, u[0], u[n], u[n + 1], n);
        worst = std::max(worst, std::fabs(oracle(mesh.t_half(n)) - fast));
        if (n + 1 < n_steps) {
            advance_history(state, params, u[n], u[n + 1]);
        }
    }
    return worst;
}

/// Table of E_max(N) and log2(E_max(N/2)/E_max(N)) per alpha. One SOE per
/// alpha, valid on the finest mesh's window (and hence on every coarser one).
inline std::vector<ErrorTable> run_example1(const Example1Config& cfg)
{
    detail::require_doubling(cfg.ns);
    const double cut = detail::smallest_cut(cfg.ns, cfg.t_final, cfg.grading);
    std::vector<ErrorTable> tables(cfg.alphas.size());
    parallel_cells(cfg.alphas.size(), [&](std::size_t k) {
        const double alpha = cfg.alphas[k];
        const SoeTable soe = build_soe(alpha, cfg.epsilon, cut, cfg.t_final).cast<double>();
        PowerDerivativeOracle oracle(cfg.delta_reg, alpha, cfg.lambda);
        ErrorTable& tab = tables[k];
        tab.experiment = "example1";
        tab.alpha = alpha;
        tab.lambda = cfg.lambda;
        tab.delta_reg = cfg.delta_reg;
        tab.grading = cfg.grading;
        tab.t_final = cfg.t_final;
        tab.epsilon = cfg.epsilon;
        tab.n_exp = soe.n_exp();
        for (std::size_t j = 0; j < cfg.ns.size(); ++j) {
            const double e = example1_error(cfg, alpha, cfg.ns[j], soe, oracle);
            std::optional<double> order;
            if (j > 0) {
                order = observed_order(tab.rows.back().error, e, 2.0);
            }
            tab.rows.push_back({cfg.ns[j], e, order});
        }
    });
    return tables;
}

struct Example2Config {
    std::vector<double> alphas{0.1, 0.3, 0.5};
    double lambda = 1.0;
    double delta_reg = 1.8;
    double grading = 3.0;
    double t_final = 2.0;
    std::vector<std::size_t> ns{10, 20, 40, 80, 160};
    double epsilon = 1e-10;
    /// M = m_factor * N (the reproduction uses M = N).
    std::size_t m_factor = 1;
    /// Fixed M overriding the coupling when nonzero.
    std::size_t m_fixed = 0;
    /// Replaces the manufactured data with phi = 0, f = 0.
    bool zero_problem = false;
};

inline std::size_t example2_cells(const Example2Config& cfg, std::size_t n)
{
    return cfg.m_fixed != 0 ? cfg.m_fixed : cfg.m_factor * n;
}

/// e_max(M,N) = max_{1<=n<=N} l2 error and the order
/// log(e_N/e_2N)/log(tau_N/tau_2N) with tau_N the final step of each mesh.
inline std::vector<ErrorTable> run_example2(const Example2Config& cfg,
                                            const SolveOptions& opts = {})
{
    detail::require_doubling(cfg.ns);
    detail::require(cfg.m_factor >= 1 || cfg.m_fixed >= 2, "run_example2: bad M coupling");
    const double cut = detail::smallest_cut(cfg.ns, cfg.t_final, cfg.grading);
    std::vector<ErrorTable> tables(cfg.alphas.size());
    parallel_cells(cfg.alphas.size(), [&](std::size_t k) {
        const double alpha = cfg.alphas[k];
        const SoeTable soe = build_soe(alpha, cfg.epsilon, cut, cfg.t_final).cast<double>();
        const ManufacturedCase mc{alpha, cfg.lambda, cfg.delta_reg};
        ProblemSpec spec = example2_problem(mc, cfg.t_final);
        std::function<double(double, double)> exact = [mc](double x, double t) {
            return exact_solution_ex2(mc, x, t);
        };
        if (cfg.zero_problem) {
            spec.initial_condition = [](double) { return 0.0; };
            spec.forcing = [](double, double) { return 0.0; };
            exact = [](double, double) { return 0.0; };
        }
        ErrorTable& tab = tables[k];
        tab.experiment = "example2";
        tab.alpha = alpha;
        tab.lambda = cfg.lambda;
        tab.delta_reg = cfg.delta_reg;
        tab.grading = cfg.grading;
        tab.t_final = cfg.t_final;
        tab.epsilon = cfg.epsilon;
        tab.n_exp = soe.n_exp();
        tab.m_coupling = cfg.m_fixed != 0 ? "M=" + std::to_string(cfg.m_fixed)
                                          : (cfg.m_factor == 1 ? std::string("M=N")
                                                               : "M=" + std::to_string(cfg.m_factor) + "N");
        double prev_tau = 0.0;
        for (std::size_t j = 0; j < cfg.ns.size(); ++j) {
            const std::size_t n = cfg.ns[j];
            const TemporalMesh mesh = graded_mesh(cfg.t_final, n, cfg.grading);
            const SpatialGrid grid = uniform_grid(1.0, example2_cells(cfg, n));
            const Solution sol = solve(spec, mesh, grid, soe, opts);
            double e = 0.0;
            for (std::size_t lvl = 1; lvl <= n; ++lvl) {
                e = std::max(e, l2_error(sol, exact, lvl));
            }
            const double tau_last = mesh.tau(n);
            std::optional<double> order;
            if (j > 0 && e > 0.0 && tab.rows.back().error > 0.0) {
                order = observed_order(tab.rows.back().error, e, prev_tau / tau_last);
            }
            tab.rows.push_back({n, e, order});
            prev_tau = tau_last;
        }
    });
    return tables;
}

struct StabilityConfig {
    double alpha = 0.5;
    double lambda = 1.0;
    double delta_reg = 1.8;
    double grading = 3.0;
    double t_final = 2.0;
    std::size_t n_steps = 64;
    std::size_t n_cells = 32;
    std::size_t trials = 20;
    double epsilon = 1e-10;
    std::uint64_t seed = 42;
};

struct StabilityTrial {
    std::size_t trial;
    double initial_gap; // ||U^0 - V^0||
    double max_ratio;   // max_n ||U^n - V^n|| / ||U^0 - V^0||
};

struct StabilityReport {
    StabilityConfig config;
    std::size_t n_exp = 0;
    std::vector<StabilityTrial> trials;
    std::size_t skipped = 0; // identical initial data

    double worst_ratio() const
    {
        double w = 0.0;
        for (const auto& t : trials) {
            w = std::max(w, t.max_ratio);
        }
        return w;
    }
};

/// Pairs of random initial grid functions under the Example 2 forcing; the
/// scheme is stable if the L2 gap between the two trajectories never grows.
inline StabilityReport run_stability_suite(const StabilityConfig& cfg,
                                           const SolveOptions& opts = {})
{
    const TemporalMesh mesh = graded_mesh(cfg.t_final, cfg.n_steps, cfg.grading);
    const SpatialGrid grid = uniform_grid(1.0, cfg.n_cells);
    const SoeTable soe = build_soe_for_mesh(cfg.alpha, cfg.epsilon, mesh).cast<double>();
    const ManufacturedCase mc{cfg.alpha, cfg.lambda, cfg.delta_reg};
    const ProblemSpec base = example2_problem(mc, cfg.t_final);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const std::size_t width = grid.n_cells + 1;

    StabilityReport report;
    report.config = cfg;
    report.n_exp = soe.n_exp();
    for (std::size_t k = 0; k < cfg.trials; ++k) {
        std::vector<double> a(width, 0.0);
        std::vector<double> b(width, 0.0);
        for (std::size_t i = 1; i < grid.n_cells; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
        }
        const auto lookup = [&grid](const std::vector<double>& v) {
            return [&grid, v](double x) {
                return v[static_cast<std::size_t>(std::lround(x / grid.spacing))];
            };
        };
        ProblemSpec pa = base;
        ProblemSpec pb = base;
        pa.initial_condition = lookup(a);
        pb.initial_condition = lookup(b);
        const Solution ua = solve(pa, mesh, grid, soe, opts);
        const Solution ub = solve(pb, mesh, grid, soe, opts);

        std::vector<double> diff(width);
        const auto gap = [&](std::size_t n) {
            for (std::size_t i = 0; i < width; ++i) {
                diff[i] = ua.at(n, i) - ub.at(n, i);
            }
            return l2_norm(diff, grid.spacing);
        };
        const double g0 = gap(0);
        if (g0 == 0.0) {
            ++report.skipped;
            continue;
        }
        double worst = 0.0;
        for (std::size_t n = 1; n <= mesh.n_steps; ++n) {
            worst = std::max(worst, gap(n) / g0);
        }
        report.trials.push_back({k, g0, worst});
    }
    return report;
}

struct TimingConfig {
    double alpha = 0.5;
    double lambda = 1.0;
    double delta_reg = 1.8;
    double grading = 3.0;
    double t_final = 2.0;
    std::vector<std::size_t> ns{64, 128, 256};
    std::size_t n_cells = 32;
    double epsilon = 1e-10;
    std::size_t repeats = 3;
    bool include_reference = true;
    /// Short solves are batched until one sample lasts at least this long.
    double min_sample_seconds = 0.05;
};

struct TimingRow {
    std::size_t n_steps;
    double fast_seconds;
    double reference_seconds; // 0 when skipped
};

struct TimingReport {
    TimingConfig config;
    std::size_t n_exp = 0;
    std::vector<TimingRow> rows;
};

/// Wall time per solve of the fast and the reference march (best of `repeats`). One
/// SOE, built for the finest mesh, serves every N so only marching is timed.
inline TimingReport run_timing_sweep(const TimingConfig& cfg)
{
    detail::require(!cfg.ns.empty() && cfg.repeats >= 1, "run_timing_sweep: empty sweep");
    const double cut = detail::smallest_cut(cfg.ns, cfg.t_final, cfg.grading);
    const SoeTable soe = build_soe(cfg.alpha, cfg.epsilon, cut, cfg.t_final).cast<double>();
    const ProblemSpec spec =
        example2_problem(ManufacturedCase{cfg.alpha, cfg.lambda, cfg.delta_reg}, cfg.t_final);
    const SpatialGrid grid = uniform_grid(1.0, cfg.n_cells);
    SolveOptions quiet;
    quiet.warn = [](const std::string&) {};

    const auto seconds = [](const std::function<void()>& run, std::size_t batch) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t b = 0; b < batch; ++b) {
            run();
        }
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(batch);
    };

    struct Job {
        std::function<void()> run;
        double* best;
        std::size_t batch = 1;
    };
    std::vector<TemporalMesh> meshes;
    meshes.reserve(cfg.ns.size());
    TimingReport report;
    report.config = cfg;
    report.n_exp = soe.n_exp();
    report.rows.reserve(cfg.ns.size());
    std::vector<Job> jobs;
    for (std::size_t n : cfg.ns) {
        const TemporalMesh& mesh = meshes.emplace_back(graded_mesh(cfg.t_final, n, cfg.grading));
        TimingRow& row = report.rows.emplace_back(TimingRow{n, 1e300, 0.0});
        jobs.push_back({[&, mesh_ptr = &mesh] { (void)solve(spec, *mesh_ptr, grid, soe, quiet); },
                        &row.fast_seconds});
        if (cfg.include_reference) {
            row.reference_seconds = 1e300;
            jobs.push_back({[&, mesh_ptr = &mesh] { (void)solve_reference(spec, *mesh_ptr, grid, quiet); },
                            &row.reference_seconds});
        }
    }
    for (Job& job : jobs) {
        const double once = seconds(job.run, 1); // also warms caches
        job.batch = static_cast<std::size_t>(std::ceil(cfg.min_sample_seconds / std::max(once, 1e-9)));
        job.batch = std::max<std::size_t>(job.batch, 1);
    }
    // Rounds visit every job in turn, so slow drift in machine speed hits all
    // sizes alike instead of skewing the ratios. Best time per job is kept.
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        for (Job& job : jobs) {
            *job.best = std::min(*job.best, seconds(job.run, job.batch));
        }
    }
    return report;
}

namespace detail {

inline std::string format_sci(double v, int digits = 4)
{
    std::ostringstream os;
    os << std::scientific << std::setprecision(digits) << v;
    return os.str();
}

inline std::string format_fixed(double v, int digits = 4)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace detail

/// `N,error,order`; the first row has an empty order field.
inline void write_table_csv(std::ostream& os, const ErrorTable& tab)
{
    os << "N,error,order\n";
    for (const auto& row : tab.rows) {
        os << row.n_steps << ',' << detail::format_sci(row.error, 10) << ',';
        if (row.order) {
            os << detail::format_fixed(*row.order, 6);
        }
        os << '\n';
    }
}

/// Side-by-side markdown: one error and one order column per table.
inline void write_tables_markdown(std::ostream& os, const std::vector<ErrorTable>& tables)
{
    if (tables.empty()) {
        return;
    }
    os << "| N |";
    for (const auto& t : tables) {
        os << " alpha=" << t.alpha << " error | order |";
    }
    os << "\n|---|";
    for (std::size_t k = 0; k < tables.size(); ++k) {
        os << "---|---|";
    }
    os << '\n';
    for (std::size_t r = 0; r < tables.front().rows.size(); ++r) {
        os << "| " << tables.front().rows[r].n_steps << " |";
        for (const auto& t : tables) {
            const ErrorRow& row = t.rows.at(r);
            os << ' ' << detail::format_sci(row.error) << " | "
               << (row.order ? detail::format_fixed(*row.order) : std::string("-")) << " |";
        }
        os << '\n';
    }
}

/// One JSON object per row carrying the full table configuration.
inline void write_table_jsonl(std::ostream& os, const ErrorTable& tab, std::uint64_t seed)
{
    for (const auto& row : tab.rows) {
        nlohmann::json j;
        j["experiment"] = tab.experiment;
        j["alpha"] = tab.alpha;
        j["lambda"] = tab.lambda;
        j["delta"] = tab.delta_reg;
        j["r"] = tab.grading;
        j["T"] = tab.t_final;
        j["epsilon"] = tab.epsilon;
        j["n_exp"] = tab.n_exp;
        j["seed"] = seed;
        if (!tab.m_coupling.empty()) {
            j["m_coupling"] = tab.m_coupling;
        }
        j["N"] = row.n_steps;
        j["error"] = row.error;
        j["order"] = row.order ? nlohmann::json(*row.order) : nlohmann::json(nullptr);
        os << j.dump() << '\n';
    }
}

} // namespace tfde
