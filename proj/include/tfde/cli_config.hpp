#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tfde/error.hpp"

namespace tfde {

enum class Experiment { SoeCheck, DerivTable, Solve, Table1, Table2, Stability, Timing };
enum class OutputFormat { Csv, Markdown, Jsonl, Binary };
enum class ProblemKind { Example2, Zero };

/// Flat run configuration. Unset optionals take experiment-specific
/// defaults in resolve().
struct RunConfig {
    std::optional<Experiment> experiment;
    std::optional<double> alpha;
    double lambda = 1.0;
    std::optional<double> delta_reg;
    std::optional<double> grading;
    double t_final = 2.0;
    double length = 1.0;
    std::optional<std::size_t> n_steps;
    std::optional<std::size_t> n_cells;
    std::optional<double> epsilon;
    std::uint64_t seed = 42;
    std::string output; // empty = stdout
    OutputFormat format = OutputFormat::Csv;
    ProblemKind problem = ProblemKind::Example2;
    std::optional<std::size_t> n_min;
    std::optional<std::size_t> n_max;
    std::size_t trials = 20;
    std::size_t samples = 100000;
    std::optional<double> delta_cut;
    std::size_t repeats = 3;
};

/// Keys accepted in files and, with `--`, as flags. `-` and `_` are
/// interchangeable.
inline const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys{
        "experiment", "alpha",  "lambda",  "delta",     "r",       "T",     "L",
        "N",          "M",      "epsilon", "seed",      "output",  "format", "problem",
        "n_min",      "n_max",  "trials",  "samples",   "delta_cut", "repeats"};
    return keys;
}

inline std::string normalize_key(std::string key)
{
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

inline std::optional<Experiment> parse_experiment(std::string_view s)
{
    static const std::array<std::pair<std::string_view, Experiment>, 7> names{{
        {"soe-check", Experiment::SoeCheck},
        {"deriv-table", Experiment::DerivTable},
        {"solve", Experiment::Solve},
        {"table1", Experiment::Table1},
        {"table2", Experiment::Table2},
        {"stability", Experiment::Stability},
        {"timing", Experiment::Timing},
    }};
    for (const auto& [name, e] : names) {
        if (s == name) {
            return e;
        }
    }
    return std::nullopt;
}

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v, const std::string& where)
{
    const char* begin = v.c_str();
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(x)) {
        throw InvalidParameter(where + ": `" + key + "` expects a real number, got `" + v + "`");
    }
    return x;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v,
                                 const std::string& where)
{
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw InvalidParameter(where + ": `" + key + "` expects a nonnegative integer, got `" + v +
                               "`");
    }
    return x;
}

inline void range(bool ok, const std::string& where, const std::string& key,
                  const std::string& value, const std::string& rule)
{
    if (!ok) {
        throw InvalidParameter(where + ": " + key + "=" + value + " violates " + rule);
    }
}

} // namespace detail

/// Applies one key=value pair; `where` prefixes diagnostics (line or flag).
inline void apply_config_value(RunConfig& cfg, const std::string& raw_key, const std::string& value,
                               const std::string& where)
{
    using detail::range;
    const std::string key = normalize_key(raw_key);
    const auto real = [&] { return detail::parse_real(key, value, where); };
    const auto count = [&] { return static_cast<std::size_t>(detail::parse_count(key, value, where)); };

    if (key == "experiment") {
        cfg.experiment = parse_experiment(value);
        if (!cfg.experiment) {
            throw InvalidParameter(where + ": unknown experiment `" + value + "`");
        }
    } else if (key == "alpha") {
        const double a = real();
        range(a > 0.0 && a < 1.0, where, key, value, "0 < alpha < 1");
        cfg.alpha = a;
    } else if (key == "lambda") {
        const double l = real();
        range(l >= 0.0, where, key, value, "lambda >= 0");
        cfg.lambda = l;
    } else if (key == "delta") {
        const double d = real();
        range(d > 1.0 && d < 2.0, where, key, value, "1 < delta < 2");
        cfg.delta_reg = d;
    } else if (key == "r") {
        const double r = real();
        range(r >= 1.0, where, key, value, "r >= 1");
        cfg.grading = r;
    } else if (key == "T") {
        const double t = real();
        range(t > 0.0, where, key, value, "T > 0");
        cfg.t_final = t;
    } else if (key == "L") {
        const double l = real();
        range(l > 0.0, where, key, value, "L > 0");
        cfg.length = l;
    } else if (key == "N") {
        const std::size_t n = count();
        range(n >= 2, where, key, value, "N >= 2");
        cfg.n_steps = n;
    } else if (key == "M") {
        const std::size_t m = count();
        range(m >= 2, where, key, value, "M >= 2");
        cfg.n_cells = m;
    } else if (key == "epsilon") {
        const double e = real();
        range(e > 0.0 && e < 1.0, where, key, value, "0 < epsilon < 1");
        cfg.epsilon = e;
    } else if (key == "seed") {
        cfg.seed = detail::parse_count(key, value, where);
    } else if (key == "output") {
        cfg.output = value;
    } else if (key == "format") {
        if (value == "csv") cfg.format = OutputFormat::Csv;
        else if (value == "markdown") cfg.format = OutputFormat::Markdown;
        else if (value == "jsonl") cfg.format = OutputFormat::Jsonl;
        else if (value == "binary") cfg.format = OutputFormat::Binary;
        else range(false, where, key, value, "format in {csv, markdown, jsonl, binary}");
    } else if (key == "problem") {
        if (value == "example2") cfg.problem = ProblemKind::Example2;
        else if (value == "zero") cfg.problem = ProblemKind::Zero;
        else range(false, where, key, value, "problem in {example2, zero}");
    } else if (key == "n_min") {
        const std::size_t n = count();
        range(n >= 2, where, key, value, "n_min >= 2");
        cfg.n_min = n;
    } else if (key == "n_max") {
        const std::size_t n = count();
        range(n >= 2, where, key, value, "n_max >= 2");
        cfg.n_max = n;
    } else if (key == "trials") {
        const std::size_t n = count();
        range(n >= 1, where, key, value, "trials >= 1");
        cfg.trials = n;
    } else if (key == "samples") {
        const std::size_t n = count();
        range(n >= 2, where, key, value, "samples >= 2");
        cfg.samples = n;
    } else if (key == "delta_cut") {
        const double d = real();
        range(d > 0.0, where, key, value, "delta_cut > 0");
        cfg.delta_cut = d;
    } else if (key == "repeats") {
        const std::size_t n = count();
        range(n >= 1, where, key, value, "repeats >= 1");
        cfg.repeats = n;
    } else {
        throw InvalidParameter(where + ": unknown key `" + raw_key + "`");
    }
}

/// Parses `key = value` lines; `#` starts a comment. Errors name the line.
inline void parse_config_text(RunConfig& cfg, std::string_view text,
                              const std::string& source = "config")
{
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string body = detail::trim(line);
        if (body.empty()) {
            continue;
        }
        const std::string where = source + ":" + std::to_string(lineno);
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw InvalidParameter(where + ": expected `key = value`, got `" + body + "`");
        }
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw InvalidParameter(where + ": empty key or value");
        }
        apply_config_value(cfg, key, value, where);
    }
}

inline RunConfig parse_config_text(std::string_view text, const std::string& source = "config")
{
    RunConfig cfg;
    parse_config_text(cfg, text, source);
    return cfg;
}

/// Parameters with every experiment default filled in.
struct ResolvedConfig {
    Experiment experiment;
    std::vector<double> alphas;
    double lambda;
    double delta_reg;
    double grading;
    double t_final;
    double length;
    std::size_t n_steps;
    std::optional<std::size_t> n_cells;
    double epsilon;
    std::uint64_t seed;
    std::vector<std::size_t> ns;
    std::size_t trials;
    std::size_t samples;
    std::optional<double> delta_cut;
    std::size_t repeats;
};

inline ResolvedConfig resolve(const RunConfig& cfg)
{
    if (!cfg.experiment) {
        throw InvalidParameter("no experiment given");
    }
    const Experiment e = *cfg.experiment;
    ResolvedConfig r{};
    r.experiment = e;
    r.lambda = cfg.lambda;
    r.t_final = cfg.t_final;
    r.length = cfg.length;
    r.seed = cfg.seed;
    r.trials = cfg.trials;
    r.samples = cfg.samples;
    r.delta_cut = cfg.delta_cut;
    r.repeats = cfg.repeats;
    r.n_cells = cfg.n_cells;

    const bool ex1 = e == Experiment::Table1 || e == Experiment::DerivTable;
    const bool ex2 = e == Experiment::Table2;
    r.delta_reg = cfg.delta_reg.value_or(ex1 ? 1.5 : 1.8);
    r.grading = cfg.grading.value_or(ex1 ? 1.5 : 3.0);
    r.epsilon = cfg.epsilon.value_or(ex1 ? 1e-12 : 1e-10);

    if (cfg.alpha) {
        r.alphas = {*cfg.alpha};
    } else if (e == Experiment::Table1 || ex2) {
        r.alphas = {0.1, 0.3, 0.5};
    } else {
        r.alphas = {0.5};
    }

    std::size_t lo = cfg.n_min.value_or(ex1 ? 80 : (ex2 ? 10 : 64));
    std::size_t hi = cfg.n_max.value_or(ex1 ? 640 : (ex2 ? 160 : (e == Experiment::Timing ? 256 : lo)));
    if (e == Experiment::Stability || e == Experiment::Solve || e == Experiment::SoeCheck) {
        lo = hi = cfg.n_steps.value_or(e == Experiment::Stability ? 64 : 80);
    }
    if (hi < lo) {
        throw InvalidParameter("n_max=" + std::to_string(hi) + " violates n_max >= n_min=" +
                               std::to_string(lo));
    }
    for (std::size_t n = lo; n <= hi; n *= 2) {
        r.ns.push_back(n);
    }
    if (r.ns.back() != hi) {
        throw InvalidParameter("n_max=" + std::to_string(hi) + " is not n_min=" +
                               std::to_string(lo) + " times a power of 2");
    }
    r.n_steps = r.ns.back();
    if (r.n_cells && r.length / static_cast<double>(*r.n_cells) >= 2.0) {
        throw InvalidParameter("M=" + std::to_string(*r.n_cells) + " violates h = L/M < 2");
    }
    return r;
}

} // namespace tfde
