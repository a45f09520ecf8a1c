#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tfde/error.hpp"

namespace tfde {

/// Graded temporal mesh t_n = T (n/N)^r.
struct TemporalMesh {
    double t_final = 0;
    std::size_t n_steps = 0;
    double grading = 1;
    std::vector<double> nodes;       // t_0 .. t_N
    std::vector<double> steps;       // steps[k] = tau_{k+1} = t_{k+1} - t_k
    std::vector<double> half_points; // half_points[k] = t_{k+1/2}

    /// tau_k for 1 <= k <= N (one-based, as in the scheme).
    double tau(std::size_t k) const { return steps.at(k - 1); }
    double t(std::size_t n) const { return nodes.at(n); }
    double t_half(std::size_t n) const { return half_points.at(n); }
};

struct SpatialGrid {
    double length = 0;
    std::size_t n_cells = 0;
    double spacing = 0;
    std::vector<double> nodes;
};

inline TemporalMesh graded_mesh(double t_final, std::size_t n_steps, double grading)
{
    detail::require(t_final > 0.0, "graded_mesh: t_final must be positive");
    detail::require(n_steps >= 2, "graded_mesh: need at least 2 steps");
    detail::require(grading >= 1.0, "graded_mesh: grading r must be >= 1");

    TemporalMesh mesh;
    mesh.t_final = t_final;
    mesh.n_steps = n_steps;
    mesh.grading = grading;
    mesh.nodes.resize(n_steps + 1);
    const double inv_n = 1.0 / static_cast<double>(n_steps);
    for (std::size_t n = 0; n <= n_steps; ++n) {
        mesh.nodes[n] = t_final * std::pow(static_cast<double>(n) * inv_n, grading);
    }
    mesh.nodes.front() = 0.0;
    mesh.nodes.back() = t_final;

    mesh.steps.resize(n_steps);
    mesh.half_points.resize(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        mesh.steps[k] = mesh.nodes[k + 1] - mesh.nodes[k];
        mesh.half_points[k] = 0.5 * (mesh.nodes[k] + mesh.nodes[k + 1]);
    }
    return mesh;
}

inline SpatialGrid uniform_grid(double length, std::size_t n_cells)
{
    detail::require(length > 0.0, "uniform_grid: length must be positive");
    detail::require(n_cells >= 2, "uniform_grid: need at least 2 cells");
    SpatialGrid grid;
    grid.length = length;
    grid.n_cells = n_cells;
    grid.spacing = length / static_cast<double>(n_cells);
    grid.nodes.resize(n_cells + 1);
    for (std::size_t i = 0; i <= n_cells; ++i) {
        grid.nodes[i] = static_cast<double>(i) * grid.spacing;
    }
    grid.nodes.back() = length;
    return grid;
}

/// Per step n = 0..N-1: whether (tau_{n+1}/2)^{2-2 alpha} < 1/3.
/// The stability argument needs it; violations are reported, not fatal.
inline std::vector<bool> check_step_condition(const TemporalMesh& mesh, double alpha)
{
    detail::require(alpha > 0.0 && alpha < 1.0, "check_step_condition: alpha must lie in (0,1)");
    std::vector<bool> ok(mesh.steps.size());
    for (std::size_t k = 0; k < mesh.steps.size(); ++k) {
        ok[k] = std::pow(0.5 * mesh.steps[k], 2.0 - 2.0 * alpha) < 1.0 / 3.0;
    }
    return ok;
}

} // namespace tfde
