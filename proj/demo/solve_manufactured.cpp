// Solves the manufactured problem on a graded mesh and compares the final
// level with the exact solution.
#include <cmath>
#include <cstdio>

#include "tfde/tfde.hpp"

int main()
{
    const tfde::ManufacturedCase mc{0.4, 1.0, 1.8};
    const auto spec = tfde::example2_problem(mc, 2.0);
    const auto mesh = tfde::graded_mesh(2.0, 64, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 64);

    const tfde::Solution sol = tfde::solve(spec, mesh, grid, 1e-10);

    const std::size_t last = mesh.n_steps;
    std::printf("    x        U(x,T)            u(x,T)\n");
    for (std::size_t i = 0; i <= grid.n_cells; i += 8) {
        const double x = grid.nodes[i];
        std::printf("%6.3f  %.12f  %.12f\n", x, sol.at(last, i),
                    tfde::exact_solution_ex2(mc, x, mesh.t(last)));
    }
    const auto exact = [&mc](double x, double t) { return tfde::exact_solution_ex2(mc, x, t); };
    std::printf("L2 error at T: %.4e\n", tfde::l2_error(sol, exact, last));
}
