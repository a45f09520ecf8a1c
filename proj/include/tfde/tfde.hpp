#pragma once

#include "tfde/error.hpp"
#include "tfde/gauss.hpp"
#include "tfde/soe.hpp"
#include "tfde/time_mesh.hpp"
#include "tfde/tempered_derivative.hpp"
#include "tfde/cn_solver.hpp"
#include "tfde/reference_oracles.hpp"
#include "tfde/convergence_harness.hpp"
#include "tfde/cli_config.hpp"
