#pragma once

#include "oswitch/chain_model.hpp"
#include "oswitch/drivers.hpp"
#include "oswitch/linalg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace oswitch {

/// Uniform grid t_k = k dt, k = 0..steps.
struct TimeGrid {
    double dt = 0.0;
    Index steps = 0;
    /// Largest admissible dt * max exit rate.
    double guard = 0.5;

    double horizon() const { return dt * static_cast<double>(steps); }

    static TimeGrid make(double dt, Index steps, double guard = 0.5);
    /// Throws GridTooCoarse when dt * max exit rate exceeds the guard.
    void check_resolution(const Generator& gen) const;

    bool operator==(const TimeGrid&) const = default;
};

struct PicardOptions {
    double tol = 1e-10;
    int max_sweeps = 10000;
    /// Throw MonotonicityBroken when an iterate decreases.
    bool enforce_monotone = true;
    /// Use already updated modes at the same time step (default: Jacobi).
    bool gauss_seidel = false;
    /// Replaces the lower envelope as the starting iterate.
    std::optional<FieldPath> start;
};

struct SolveMeta {
    int sweeps = 0;
    double final_increment = 0.0;
    std::int64_t root_solves = 0;
    int max_root_iterations = 0;
    std::int64_t monotone_checks = 0;
    std::int64_t monotone_violations = 0;
    /// Largest decrease seen between consecutive iterates (0 if none).
    double worst_decrease = 0.0;
};

/// Y[k] is the N x n field at t_k. drift[k] = dt (f(x, Y_k) + mu) and
/// reflection[k] = Delta K_k from the final sweep, so that
///   Y_k = P Y_{k+1} + drift[k] + reflection[k]
/// holds row by row to root precision. drift[K] and reflection[K] are zero.
struct BsdeSolution {
    TimeGrid grid;
    Index states = 0;
    FieldPath Y;
    FieldPath drift;
    FieldPath reflection;
    SolveMeta meta;

    Index modes() const { return Y.empty() ? 0 : Y.front().rows(); }
};

/// Scalar driver y -> f(x, y), nonincreasing in y, with its derivative.
struct ScalarDriverFn {
    std::function<double(Index, double)> value;
    std::function<double(Index, double)> slope;

    static ScalarDriverFn zero();
    static ScalarDriverFn constant(Vector c);
    /// Mode j of a driver system with the other modes frozen at `others` (N x n).
    static ScalarDriverFn slice(const DriverSystem& drv, Index j, ModeField others);
};

struct RootResult {
    double root = 0.0;
    int iterations = 0;
};

/// Root of an increasing function g with derivative dg, starting from
/// `guess`: bracket by geometric expansion, then safeguarded Newton with
/// bisection fallback. Throws RootBracketFailure if no sign change is found.
RootResult solve_increasing_root(const std::function<double(double)>& g, const std::function<double(double)>& dg,
                                 double guess);

/// Y_k(x) = (P Y_{k+1})(x) + dt f(x, Y_k(x)) + dt source(x), Y_K = terminal.
BsdeSolution solve_bsde_scalar(const Generator& gen, const TimeGrid& grid, const Vector& terminal,
                               const Vector& source, const ScalarDriverFn& f);

/// Time-dependent envelope pair for the finite-horizon schemes: replicated
/// processes with Y_k = P Y_{k+1} + dt g and terminal min_j xi^j (capped at
/// 0 for coupled kinds) resp. sum_j (xi^j)^+.
struct PathEnvelope {
    FieldPath lower;
    FieldPath upper;
};

PathEnvelope build_path_envelope(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const BarrierSystem& bar);

/// Minimal solution of the unreflected system by monotone Picard iteration
/// from the lower envelope; each sweep solves every mode backward with the
/// other modes frozen at the previous iterate.
BsdeSolution solve_system_picard(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const PathEnvelope& env, const PicardOptions& opts = {});

/// Evidence that two driver systems have ordered data xi <= xi', mu <= mu',
/// f <= f'.
struct DataOrder {
    bool ordered = false;
    std::string reason;
};

DataOrder certify_order(const DriverSystem& a, const DriverSystem& b, std::int64_t sample_budget = 2000,
                        std::uint64_t seed = 7);

/// True iff a.Y <= b.Y + slack at every (k, j, x). Throws GridMismatch if
/// the solutions live on different grids and InvalidArgument if the order
/// evidence is negative.
bool comparison_check(const BsdeSolution& a, const BsdeSolution& b, const DataOrder& order, double slack = 1e-9);

/// max_{k,x,j} |E[Delta M_k | X_k = x]| with
///   Delta M_k(x -> x') = Y_{k+1}(x') - (Y_k - drift_k - reflection_k)(x)
/// and the cemetery (Y = 0) included as a target.
double martingale_check(const BsdeSolution& sol, const Generator& gen);

}  // namespace oswitch
