#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfde/cli_config.hpp"
#include "tfde/cn_solver.hpp"
#include "tfde/convergence_harness.hpp"
#include "tfde/error.hpp"
#include "tfde/reference_oracles.hpp"
#include "tfde/soe.hpp"

namespace tfde {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Writes via a sibling temp file and rename, so readers never see a
/// partial file.
inline void write_atomically(const std::string& path, const std::string& bytes)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw InvalidParameter("cannot open `" + tmp.string() + "` for writing");
        }
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os.flush();
        if (!os) {
            throw InvalidParameter("write to `" + tmp.string() + "` failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw InvalidParameter("cannot move output into `" + path + "`: " + ec.message());
    }
}

namespace detail {

inline void emit_tables(std::ostream& os, const std::vector<ErrorTable>& tables,
                        OutputFormat format, std::uint64_t seed)
{
    switch (format) {
    case OutputFormat::Markdown:
        write_tables_markdown(os, tables);
        return;
    case OutputFormat::Jsonl:
        for (const auto& t : tables) {
            write_table_jsonl(os, t, seed);
        }
        return;
    case OutputFormat::Csv:
        if (tables.size() == 1) {
            write_table_csv(os, tables.front());
            return;
        }
        os << "alpha,N,error,order\n";
        for (const auto& t : tables) {
            std::ostringstream body;
            write_table_csv(body, t);
            std::istringstream lines(body.str());
            std::string line;
            std::getline(lines, line); // header
            while (std::getline(lines, line)) {
                os << t.alpha << ',' << line << '\n';
            }
        }
        return;
    case OutputFormat::Binary:
        break;
    }
    throw InvalidParameter("format=binary is only available for `solve`");
}

inline std::string run_soe_check(const ResolvedConfig& rc, std::ostream& err)
{
    const double alpha = rc.alphas.front();
    double cut = 0.0;
    if (rc.delta_cut) {
        cut = *rc.delta_cut;
    } else {
        const TemporalMesh mesh = graded_mesh(rc.t_final, rc.n_steps, rc.grading);
        cut = std::min(mesh.tau(1), 0.5 * mesh.tau(2));
    }
    const Soe soe = build_soe(alpha, rc.epsilon, cut, rc.t_final);
    const double worst = verify_soe(soe, rc.samples);
    err << "soe-check: alpha=" << alpha << " epsilon=" << rc.epsilon << " window=[" << cut << ", "
        << rc.t_final << "] n_exp=" << soe.n_exp() << " max_error=" << worst << " ("
        << rc.samples << " samples)\n";
    std::ostringstream os;
    write_soe_csv(os, soe);
    return os.str();
}

inline std::string run_solve(const ResolvedConfig& rc, const RunConfig& cfg, std::ostream& err)
{
    const double alpha = rc.alphas.front();
    const std::size_t m = rc.n_cells.value_or(rc.n_steps);
    const TemporalMesh mesh = graded_mesh(rc.t_final, rc.n_steps, rc.grading);
    const SpatialGrid grid = uniform_grid(rc.length, m);
    ProblemSpec spec;
    if (cfg.problem == ProblemKind::Example2) {
        detail::require(rc.length == 1.0, "problem=example2 requires L=1");
        spec = example2_problem(ManufacturedCase{alpha, rc.lambda, rc.delta_reg}, rc.t_final);
    } else {
        spec.alpha = alpha;
        spec.lambda = rc.lambda;
        spec.t_final = rc.t_final;
        spec.domain_length = rc.length;
    }
    SolveOptions opts;
    opts.warn = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
    const Solution sol = solve(spec, mesh, grid, rc.epsilon, opts);
    std::ostringstream os;
    if (cfg.format == OutputFormat::Binary) {
        write_solution_binary(os, sol);
    } else if (cfg.format == OutputFormat::Csv) {
        write_solution_csv(os, sol);
    } else {
        throw InvalidParameter("solve writes format=csv or format=binary");
    }
    return os.str();
}

inline std::string run_stability(const ResolvedConfig& rc, std::ostream& err)
{
    StabilityConfig sc;
    sc.alpha = rc.alphas.front();
    sc.lambda = rc.lambda;
    sc.delta_reg = rc.delta_reg;
    sc.grading = rc.grading;
    sc.t_final = rc.t_final;
    sc.n_steps = rc.n_steps;
    sc.n_cells = rc.n_cells.value_or(32);
    sc.trials = rc.trials;
    sc.epsilon = rc.epsilon;
    sc.seed = rc.seed;
    SolveOptions opts;
    opts.warn = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
    const StabilityReport rep = run_stability_suite(sc, opts);
    std::ostringstream os;
    os << "trial,initial_gap,max_ratio\n" << std::setprecision(17);
    for (const auto& t : rep.trials) {
        os << t.trial << ',' << t.initial_gap << ',' << t.max_ratio << '\n';
    }
    err << "stability: " << rep.trials.size() << " trials, worst ratio " << std::setprecision(17)
        << rep.worst_ratio() << ", skipped " << rep.skipped << '\n';
    return os.str();
}

inline std::string run_timing(const ResolvedConfig& rc)
{
    TimingConfig tc;
    tc.alpha = rc.alphas.front();
    tc.lambda = rc.lambda;
    tc.delta_reg = rc.delta_reg;
    tc.grading = rc.grading;
    tc.t_final = rc.t_final;
    tc.ns = rc.ns;
    tc.n_cells = rc.n_cells.value_or(32);
    tc.epsilon = rc.epsilon;
    tc.repeats = rc.repeats;
    const TimingReport rep = run_timing_sweep(tc);
    std::ostringstream os;
    os << "N,fast_seconds,reference_seconds,ratio\n" << std::setprecision(6);
    for (const auto& row : rep.rows) {
        os << row.n_steps << ',' << row.fast_seconds << ',' << row.reference_seconds << ','
           << row.reference_seconds / row.fast_seconds << '\n';
    }
    return os.str();
}

inline std::string run_experiment(const RunConfig& cfg, std::ostream& err)
{
    const ResolvedConfig rc = resolve(cfg);
    std::ostringstream os;
    switch (rc.experiment) {
    case Experiment::SoeCheck:
        return run_soe_check(rc, err);
    case Experiment::Solve:
        return run_solve(rc, cfg, err);
    case Experiment::Stability:
        return run_stability(rc, err);
    case Experiment::Timing:
        return run_timing(rc);
    case Experiment::DerivTable:
    case Experiment::Table1: {
        Example1Config c;
        c.alphas = rc.alphas;
        c.lambda = rc.lambda;
        c.delta_reg = rc.delta_reg;
        c.grading = rc.grading;
        c.t_final = rc.t_final;
        c.ns = rc.ns;
        c.epsilon = rc.epsilon;
        emit_tables(os, run_example1(c), cfg.format, rc.seed);
        return os.str();
    }
    case Experiment::Table2: {
        Example2Config c;
        c.alphas = rc.alphas;
        c.lambda = rc.lambda;
        c.delta_reg = rc.delta_reg;
        c.grading = rc.grading;
        c.t_final = rc.t_final;
        c.ns = rc.ns;
        c.epsilon = rc.epsilon;
        c.m_fixed = rc.n_cells.value_or(0);
        c.zero_problem = cfg.problem == ProblemKind::Zero;
        SolveOptions opts;
        opts.warn = [&err](const std::string& msg) { err << "warning: " << msg << '\n'; };
        emit_tables(os, run_example2(c, opts), cfg.format, rc.seed);
        return os.str();
    }
    }
    throw InvalidParameter("unhandled experiment");
}

inline const char* usage_text()
{
    return "usage: tfde <experiment> [--config FILE] [--key value ...]\n"
           "experiments: soe-check, deriv-table, solve, table1, table2, stability, timing\n"
           "keys: alpha lambda delta r T L N M epsilon seed output format problem\n"
           "      n-min n-max trials samples delta-cut repeats\n"
           "Flags override values read from --config. Run `tfde <experiment> --help` for details.\n";
}

} // namespace detail

/// Full command-line entry point. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    if (argc < 2) {
        err << detail::usage_text();
        return kExitValidation;
    }
    CLI::App app{"Tempered time-fractional advection-dispersion solver", "tfde"};
    std::string experiment;
    std::string config_path;
    app.add_option("experiment", experiment,
                   "soe-check | deriv-table | solve | table1 | table2 | stability | timing");
    app.add_option("--config", config_path, "key = value file; flags override it");
    std::vector<std::pair<std::string, std::optional<std::string>>> flags;
    flags.reserve(config_keys().size());
    for (const auto& key : config_keys()) {
        if (key == "experiment") {
            continue;
        }
        flags.emplace_back(key, std::nullopt);
    }
    for (auto& [key, slot] : flags) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        std::string names = "--" + dashed;
        if (dashed != key) {
            names += ",--" + key;
        }
        app.add_option(names, slot);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << detail::usage_text();
        return kExitValidation;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                throw InvalidParameter("cannot read config file `" + config_path + "`");
            }
            std::stringstream buf;
            buf << in.rdbuf();
            parse_config_text(cfg, buf.str(), config_path);
        }
        for (const auto& [key, slot] : flags) {
            if (slot) {
                apply_config_value(cfg, key, *slot, "--" + key);
            }
        }
        if (!experiment.empty()) {
            apply_config_value(cfg, "experiment", experiment, "command line");
        }
        const std::string bytes = detail::run_experiment(cfg, err);
        if (cfg.output.empty()) {
            out << bytes;
            out.flush();
        } else {
            write_atomically(cfg.output, bytes);
        }
        return kExitOk;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}

} // namespace tfde
