#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "tfde/cn_solver.hpp"
#include "tfde/convergence_harness.hpp"
#include "tfde/reference_oracles.hpp"

namespace {

tfde::ProblemSpec zero_problem(double alpha = 0.5)
{
    tfde::ProblemSpec spec;
    spec.alpha = alpha;
    return spec;
}

TEST(AssembleStep, ZeroDataGivesZeroRhs)
{
    const auto mesh = tfde::graded_mesh(2.0, 10, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 8);
    const tfde::TemperedParams p(0.5, 1.0, mesh);
    const std::vector<double> u(9, 0.0);
    const std::vector<double> known(7, 0.0);
    const auto sys = tfde::assemble_step(zero_problem(), p, grid, u, known, 0);
    for (double r : sys.rhs) {
        EXPECT_EQ(r, 0.0);
    }
}

TEST(AssembleStep, BandValues)
{
    // tau_1 = 0.1 from a uniform mesh with T = 1, N = 10; h = 0.25.
    const auto mesh = tfde::graded_mesh(1.0, 10, 1.0);
    const auto grid = tfde::uniform_grid(1.0, 4);
    const tfde::TemperedParams p(0.5, 1.0, mesh);
    const std::vector<double> u(5, 0.0);
    const std::vector<double> known(3, 0.0);
    const auto sys = tfde::assemble_step(zero_problem(), p, grid, u, known, 0);
    const double diag = 1 / 0.1 + 1 / (2 * (std::sqrt(std::numbers::pi) / 2) * std::sqrt(0.05)) + 16;
    EXPECT_NEAR(diag, 28.523132522020160048, 1e-12);
    for (double d : sys.diag) {
        EXPECT_NEAR(d, diag, 1e-12);
    }
    for (double s : sys.sub) {
        EXPECT_DOUBLE_EQ(s, -9.0);
    }
    for (double s : sys.super) {
        EXPECT_DOUBLE_EQ(s, -7.0);
    }
}

TEST(AssembleStep, FirstStepHasOnlyLocalTerms)
{
    const auto mesh = tfde::graded_mesh(2.0, 10, 3.0);
    const tfde::TemperedParams p(0.4, 1.5, mesh);
    const auto st = tfde::detail::fast_stencil(p, 0);
    EXPECT_EQ(st.c_zero, 0.0);
    EXPECT_EQ(st.c_hist, 0.0);
    const double half = mesh.tau(1) / 2;
    const double local = 1 / (std::tgamma(0.6) * 0.6 * std::pow(half, 0.4));
    EXPECT_NEAR(st.c_curr, local * (0.5 - std::exp(-1.5 * half)), 1e-12 * local);
    EXPECT_NEAR(st.c_next, 0.5 * local, 1e-12 * local);
}

TEST(AssembleStep, DimensionMismatch)
{
    const auto mesh = tfde::graded_mesh(2.0, 10, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 8);
    const tfde::TemperedParams p(0.5, 1.0, mesh);
    const std::vector<double> u(8, 0.0);
    const std::vector<double> known(7, 0.0);
    EXPECT_THROW(tfde::assemble_step(zero_problem(), p, grid, u, known, 0),
                 tfde::DimensionMismatch);
}

TEST(ThomasSolve, Identity)
{
    tfde::TridiagonalSystem sys{{0, 0}, {1, 1, 1}, {0, 0}, {3, -1, 2}};
    const auto x = tfde::thomas_solve(sys);
    EXPECT_EQ(x, sys.rhs);
}

TEST(ThomasSolve, TwoByTwo)
{
    tfde::TridiagonalSystem sys{{1}, {2, 2}, {1}, {3, 3}};
    const auto x = tfde::thomas_solve(sys);
    EXPECT_NEAR(x[0], 1.0, 1e-15);
    EXPECT_NEAR(x[1], 1.0, 1e-15);
}

TEST(ThomasSolve, MatchesDenseEliminationOnRandomSystems)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const int n = 50;
    for (int trial = 0; trial < 5; ++trial) {
        tfde::TridiagonalSystem sys;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            const double lo = i > 0 ? d(rng) : 0.0;
            const double hi = i + 1 < n ? d(rng) : 0.0;
            const double di = std::fabs(lo) + std::fabs(hi) + 0.1 + std::fabs(d(rng));
            sys.diag.push_back(di);
            A(i, i) = di;
            if (i > 0) {
                sys.sub.push_back(lo);
                A(i, i - 1) = lo;
            }
            if (i + 1 < n) {
                sys.super.push_back(hi);
                A(i, i + 1) = hi;
            }
            b[i] = d(rng);
            sys.rhs.push_back(b[i]);
        }
        const Eigen::VectorXd ref = A.partialPivLu().solve(b);
        const auto x = tfde::thomas_solve(sys);
        for (int i = 0; i < n; ++i) {
            EXPECT_NEAR(x[i], ref[i], 1e-11);
        }
        EXPECT_LE(tfde::residual_max(sys, x), 1e-12 * (1 + b.cwiseAbs().maxCoeff()));
    }
}

TEST(ThomasSolve, ZeroPivotBreaksDown)
{
    tfde::TridiagonalSystem sys{{1}, {0, 1}, {1}, {1, 1}};
    EXPECT_THROW(tfde::thomas_solve(sys), tfde::BreakdownError);
    tfde::TridiagonalSystem sys2{{1}, {1, 1}, {1}, {1, 1}}; // second pivot 1 - 1 = 0
    EXPECT_THROW(tfde::thomas_solve(sys2), tfde::BreakdownError);
}

TEST(ThomasSolve, InconsistentBands)
{
    tfde::TridiagonalSystem sys{{1, 1}, {2, 2}, {1}, {3, 3}};
    EXPECT_THROW(tfde::thomas_solve(sys), tfde::DimensionMismatch);
}

TEST(EigenvalueCheck, QuarterWaveModeIsCentre)
{
    const double eta = 3.0;
    const double h = 0.1;
    const auto lam = tfde::eigenvalue_check(eta, h, 4);
    EXPECT_NEAR(lam[1], eta + 1 / (h * h), 1e-10); // k = 2: cos(pi/2) = 0
}

TEST(EigenvalueCheck, BoundedBelowByEta)
{
    const auto lam = tfde::eigenvalue_check(10.0, 0.01, 100);
    EXPECT_EQ(lam.size(), 99u);
    for (double l : lam) {
        EXPECT_GE(l, 10.0);
    }
}

TEST(EigenvalueCheck, MatchesDenseSpectrum)
{
    const std::size_t m = 8;
    const double h = 1.0 / m;
    const double eta = 7.5;
    const double diag = eta + 1 / (h * h);
    const double sub = -0.5 / (h * h) - 0.25 / h;
    const double sup = -0.5 / (h * h) + 0.25 / h;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m - 1, m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        A(i, i) = diag;
        if (i > 0) A(i, i - 1) = sub;
        if (i + 2 < m) A(i, i + 1) = sup;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    std::vector<double> dense;
    for (int k = 0; k < es.eigenvalues().size(); ++k) {
        EXPECT_NEAR(es.eigenvalues()[k].imag(), 0.0, 1e-9);
        dense.push_back(es.eigenvalues()[k].real());
    }
    auto formula = tfde::eigenvalue_check(eta, h, m);
    std::sort(dense.begin(), dense.end());
    std::sort(formula.begin(), formula.end());
    for (std::size_t k = 0; k < dense.size(); ++k) {
        EXPECT_NEAR(formula[k], dense[k], 1e-10 * diag);
    }
}

TEST(EigenvalueCheck, CoarseSpacingIsOutsideDomain)
{
    EXPECT_THROW(tfde::eigenvalue_check(1.0, 3.0, 4), tfde::DomainError);
}

TEST(Solve, ZeroProblemStaysZero)
{
    const auto mesh = tfde::graded_mesh(2.0, 16, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 8);
    const auto sol = tfde::solve(zero_problem(), mesh, grid, 1e-10);
    for (double v : sol.levels) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Solve, BoundaryAndInitialLevel)
{
    const tfde::ManufacturedCase mc{0.3, 1.0, 1.8};
    const auto spec = tfde::example2_problem(mc);
    const auto mesh = tfde::graded_mesh(2.0, 12, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 10);
    const auto sol = tfde::solve(spec, mesh, grid, 1e-10);
    for (std::size_t n = 0; n <= 12; ++n) {
        EXPECT_EQ(sol.at(n, 0), 0.0);
        EXPECT_EQ(sol.at(n, 10), 0.0);
    }
    for (std::size_t i = 0; i <= 10; ++i) {
        EXPECT_DOUBLE_EQ(sol.at(0, i), tfde::exact_solution_ex2(mc, grid.nodes[i], 0.0));
    }
}

TEST(Solve, Example2CoarsestError)
{
    const tfde::ManufacturedCase mc{0.5, 1.0, 1.8};
    const auto mesh = tfde::graded_mesh(2.0, 10, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 10);
    const auto sol = tfde::solve(tfde::example2_problem(mc), mesh, grid, 1e-10);
    double e = 0.0;
    for (std::size_t n = 1; n <= 10; ++n) {
        e = std::max(e, tfde::l2_error(sol, [&](double x, double t) {
            return tfde::exact_solution_ex2(mc, x, t);
        }, n));
    }
    EXPECT_NEAR(e, 1.3802e-03, 0.25 * 1.3802e-03);
}

TEST(Solve, DifferenceOfTrajectoriesDoesNotGrow)
{
    const tfde::ManufacturedCase mc{0.5, 1.0, 1.8};
    auto a = tfde::example2_problem(mc);
    auto b = a;
    b.initial_condition = [](double x) { return std::sin(std::numbers::pi * x) + 0.3 * x * (1 - x); };
    const auto mesh = tfde::graded_mesh(2.0, 40, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 20);
    const auto soe = tfde::build_soe_for_mesh(0.5, 1e-10, mesh).cast<double>();
    const auto ua = tfde::solve(a, mesh, grid, soe);
    const auto ub = tfde::solve(b, mesh, grid, soe);
    std::vector<double> diff(21);
    const auto gap = [&](std::size_t n) {
        for (std::size_t i = 0; i <= 20; ++i) diff[i] = ua.at(n, i) - ub.at(n, i);
        return tfde::l2_norm(diff, grid.spacing);
    };
    const double g0 = gap(0);
    for (std::size_t n = 1; n <= 40; ++n) {
        EXPECT_LE(gap(n), g0 * (1 + 1e-10)) << n;
    }
}

TEST(Solve, EveryStepSatisfiesItsSystemAndTheScheme)
{
    // Re-run the march by hand and check each accepted step against both the
    // linear system and the difference equation it encodes.
    const tfde::ManufacturedCase mc{0.7, 1.0, 1.8};
    const auto spec = tfde::example2_problem(mc);
    const auto mesh = tfde::graded_mesh(2.0, 24, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 16);
    const auto soe = tfde::build_soe_for_mesh(0.7, 1e-10, mesh).cast<double>();
    const auto sol = tfde::solve(spec, mesh, grid, soe);
    const tfde::TemperedParams p(0.7, 1.0, mesh);
    tfde::HistoryBank bank(soe, 15);
    const double h = grid.spacing;
    std::vector<double> known(15);
    for (std::size_t n = 0; n < 24; ++n) {
        const auto st = tfde::detail::fast_stencil(p, n);
        for (std::size_t i = 1; i < 16; ++i) {
            known[i - 1] = st.c_curr * sol.at(n, i) + st.c_zero * sol.at(0, i) -
                           (n >= 1 ? st.c_hist * bank.weighted_sum(i - 1) : 0.0);
        }
        const auto sys = tfde::assemble_step(spec, p, grid, sol.level(n), known, n);
        const auto next = sol.level(n + 1).subspan(1, 15);
        double scale = 0.0;
        for (double r : sys.rhs) scale = std::max(scale, std::fabs(r));
        EXPECT_LE(tfde::residual_max(sys, next), 1e-11 * (1 + scale)) << n;

        for (std::size_t i = 1; i < 16; ++i) {
            const auto U = [&](std::size_t lvl, std::size_t j) { return sol.at(lvl, j); };
            const double dt = (U(n + 1, i) - U(n, i)) / mesh.tau(n + 1);
            const double frac = st.c_next * U(n + 1, i) + known[i - 1];
            const auto L = [&](std::size_t lvl) {
                return (U(lvl, i + 1) - 2 * U(lvl, i) + U(lvl, i - 1)) / (h * h) -
                       (U(lvl, i + 1) - U(lvl, i - 1)) / (2 * h);
            };
            const double f = dt + frac - 0.5 * (L(n + 1) + L(n));
            const double ref = spec.forcing(grid.nodes[i], mesh.t_half(n));
            EXPECT_NEAR(f, ref, 1e-10 * (1 + std::fabs(ref) + scale)) << "n=" << n << " i=" << i;
        }
        if (n + 1 < 24) {
            bank.advance(p, n + 1, sol.level(n).subspan(1, 15), sol.level(n + 1).subspan(1, 15));
        }
    }
}

TEST(Solve, FastAndReferenceTrajectoriesAgree)
{
    const double eps = 1e-10;
    for (double alpha : {0.2, 0.8}) {
        const tfde::ManufacturedCase mc{alpha, 1.0, 1.8};
        const auto spec = tfde::example2_problem(mc);
        const auto mesh = tfde::graded_mesh(2.0, 48, 3.0);
        const auto grid = tfde::uniform_grid(1.0, 24);
        const auto fast = tfde::solve(spec, mesh, grid, eps);
        const auto ref = tfde::solve_reference(spec, mesh, grid);
        double worst = 0.0;
        for (std::size_t k = 0; k < fast.levels.size(); ++k) {
            worst = std::max(worst, std::fabs(fast.levels[k] - ref.levels[k]));
        }
        EXPECT_LE(worst, 10 * eps * std::exp(2.0)) << alpha;
    }
}

TEST(Solve, WarnsOnStepConditionViolation)
{
    auto spec = zero_problem(0.1);
    spec.t_final = 20.0;
    const auto mesh = tfde::graded_mesh(20.0, 4, 1.0);
    const auto grid = tfde::uniform_grid(1.0, 4);
    std::vector<std::string> seen;
    tfde::SolveOptions opts;
    opts.warn = [&](const std::string& m) { seen.push_back(m); };
    (void)tfde::solve(spec, mesh, grid, 1e-8, opts);
    ASSERT_EQ(seen.size(), 1u);
    EXPECT_NE(seen[0].find("4 of 4"), std::string::npos);
}

TEST(Solve, RejectsMismatchedInputs)
{
    const auto mesh = tfde::graded_mesh(1.0, 8, 1.0); // ProblemSpec default T = 2
    const auto grid = tfde::uniform_grid(1.0, 4);
    EXPECT_THROW(tfde::solve(zero_problem(), mesh, grid, 1e-8), tfde::InvalidParameter);
    auto spec = zero_problem();
    spec.domain_length = 10.0;
    spec.t_final = 1.0;
    const auto coarse = tfde::uniform_grid(10.0, 4); // h = 2.5
    EXPECT_THROW(tfde::solve(spec, mesh, coarse, 1e-8), tfde::InvalidParameter);
}

TEST(SolutionExport, CsvAndBinaryRoundTrip)
{
    const tfde::ManufacturedCase mc{0.5, 1.0, 1.8};
    const auto mesh = tfde::graded_mesh(2.0, 6, 3.0);
    const auto grid = tfde::uniform_grid(1.0, 5);
    const auto sol = tfde::solve(tfde::example2_problem(mc), mesh, grid, 1e-10);

    std::stringstream csv;
    tfde::write_solution_csv(csv, sol);
    const auto from_csv = tfde::read_solution_csv(csv);
    std::stringstream bin;
    tfde::write_solution_binary(bin, sol);
    const auto from_bin = tfde::read_solution_binary(bin);
    for (const auto* m : {&from_csv, &from_bin}) {
        ASSERT_EQ(m->rows, 6u);
        ASSERT_EQ(m->cols, 7u);
        for (std::size_t i = 0; i <= 5; ++i) {
            for (std::size_t n = 0; n <= 6; ++n) {
                EXPECT_EQ(m->at(i, n), sol.at(n, i));
            }
        }
    }
}

TEST(SolutionExport, RejectsDamagedInput)
{
    std::istringstream bad_header("x,u\n");
    EXPECT_THROW(tfde::read_solution_csv(bad_header), tfde::InvalidParameter);
    std::string truncated(16, '\0');
    truncated[0] = 2;
    truncated[8] = 2;
    std::istringstream bin(truncated);
    EXPECT_THROW(tfde::read_solution_binary(bin), tfde::InvalidParameter);
}

} // namespace
