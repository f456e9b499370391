#pragma once

#include "oswitch/bsde_dp.hpp"
#include "oswitch/drivers.hpp"

#include <vector>

namespace oswitch {

/// Unreflected data plus the cumulative reflection K_k = sum_{i<k} Delta K_i
/// (K_0 = 0). `reflection` keeps the per-step increments.
struct ReflectedSolution : BsdeSolution {
    FieldPath K;
    double penalty_level = 0.0;
};

/// [K+1] x n obstacle values for a single equation.
using BarrierProfile = std::vector<std::vector<BarrierLevel>>;

BarrierProfile constant_profile(Index steps, const std::vector<BarrierLevel>& levels);

/// Y_k = max(L_k, P Y_{k+1}), Y_K = terminal. Throws TerminalDominationFailed
/// if L_K > terminal somewhere.
ReflectedSolution snell_envelope(const Generator& gen, const TimeGrid& grid, const BarrierProfile& barrier,
                                 const Vector& terminal);

/// First k >= k0 along `states` (state at each grid time) with
/// Y_k = L_k within tol, or steps if none.
Index optimal_stopping_index(const ReflectedSolution& sol, const BarrierProfile& barrier,
                             const std::vector<Index>& states, Index k0 = 0, double tol = 1e-12);

/// Scalar reflected step: y* from the unreflected implicit solve, then
/// Y_k = max(L_k, y*) and Delta K_k = Y_k - y*.
ReflectedSolution solve_rbsde_scalar(const Generator& gen, const TimeGrid& grid, const ScalarDriverFn& f,
                                     const Vector& source, const BarrierProfile& barrier, const Vector& terminal);

/// Minimal solution of the obliquely reflected system. Each sweep solves
/// every mode backward with the off-diagonal driver arguments and the
/// obstacles H^j(x, Y^{m-1}) frozen at the previous iterate.
ReflectedSolution solve_oblique_iterative(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                          const BarrierSystem& bar, const PathEnvelope& env,
                                          const PicardOptions& opts = {});

/// One unreflected solve per level n with the implicit penalty
/// n (y^j - H^j(x, y))^-; K^n accumulates dt n (Y - H)^-. Checks that the
/// sequence is nondecreasing in n.
std::vector<ReflectedSolution> solve_oblique_penalized(const Generator& gen, const TimeGrid& grid,
                                                       const DriverSystem& drv, const BarrierSystem& bar,
                                                       const PathEnvelope& env, const std::vector<double>& levels,
                                                       const PicardOptions& opts = {});

/// max over (k, j, x) of Delta K_k^j(x) (Y_k^j(x) - H^j(x, Y_k(x))). Rows
/// with empty A_j contribute Delta K times infinity if Delta K > 0.
double complementarity_residual(const ReflectedSolution& sol, const BarrierSystem& bar);

/// max over (k, j, x) of (H^j(x, Y_k) - Y_k^j)^+.
double domination_residual(const BsdeSolution& sol, const BarrierSystem& bar);

/// Number of (k, j, x) with Delta K > 0 while Y - H >= tol.
std::int64_t off_contact_pushes(const ReflectedSolution& sol, const BarrierSystem& bar, double tol);

/// Smallest Delta K over the path (negative means a downward push).
double min_reflection_increment(const ReflectedSolution& sol);

}  // namespace oswitch
