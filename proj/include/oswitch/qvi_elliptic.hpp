#pragma once

#include "oswitch/chain_model.hpp"
#include "oswitch/drivers.hpp"
#include "oswitch/monte_carlo.hpp"

#include <cstdint>
#include <vector>

namespace oswitch {

struct QviOptions {
    double tol = 1e-10;
    int max_sweeps = 10000;
    int max_policy_iterations = 500;
    int max_newton = 100;
    bool enforce_monotone = true;
};

struct PdeSolution {
    ModeField u;
    int sweeps = 0;
    double residual = 0.0;
    std::int64_t monotone_checks = 0;
    std::int64_t monotone_violations = 0;
};

/// -L u^j = f^j(x, u) + mu^j without obstacles: monotone Picard from the
/// lower envelope, Newton per mode with the other modes frozen.
PdeSolution solve_pde_system(const Generator& gen, const DriverSystem& drv, const Envelope& env,
                             const QviOptions& opts = {});

enum class PolicyStart { Lower, Upper };

/// u, nu and the contact set of the stationary system
///   min(-L u^j - f^j(u) - mu^j, u^j - H^j(u)) = 0.
/// policy(j, x) is -1 where the stay equation holds, else the switch target.
struct QviSolution {
    ModeField u;
    ModeField nu;
    Eigen::MatrixXi policy;
    double raw_nu_min = 0.0;
    double row_residual = 0.0;
    double complementarity = 0.0;
    double domination = 0.0;
    double scale = 1.0;
    int iterations = 0;

    bool active(Index j, Index x) const { return policy(j, x) >= 0; }
};

/// Howard policy iteration with a full-system Newton solve per policy. The
/// start policy is the residual argmin at the chosen envelope.
QviSolution solve_qvi_policy_iteration(const Generator& gen, const DriverSystem& drv, const BarrierSystem& bar,
                                       const Envelope& env, PolicyStart start = PolicyStart::Lower,
                                       const QviOptions& opts = {});

struct PenalizedLevel {
    double level = 0.0;
    ModeField u;
    int sweeps = 0;
};

/// -L u_n^j = f^j(u_n) + n (u_n^j - H^j(u_n))^- + mu^j for each level;
/// checks that u_n is nondecreasing in n.
std::vector<PenalizedLevel> solve_qvi_penalized(const Generator& gen, const DriverSystem& drv,
                                                const BarrierSystem& bar, const Envelope& env,
                                                const std::vector<double>& levels, const QviOptions& opts = {});

struct FkResult {
    Index mode = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    double target = 0.0;
    double z = 0.0;
};

/// Monte Carlo estimate of E_x0 int_0^zeta (f^j(u) + mu^j + nu^j)(X_r) dr per
/// mode with z-scores against u^j(x0).
std::vector<FkResult> feynman_kac_check(const Generator& gen, const QviSolution& sol, const DriverSystem& drv,
                                        Index x0, std::int64_t paths, std::uint64_t seed);

struct HorizonRow {
    Index steps = 0;
    double horizon = 0.0;
    double gap = 0.0;
    /// max_x P(zeta > horizon increment) since the previous row.
    double survival = 1.0;
    double ratio = 0.0;
    bool ratio_checked = false;
    bool ok = true;
};

struct HorizonReport {
    std::vector<HorizonRow> rows;
    ModeField reference;
    bool ok = true;
};

/// Reflected finite-horizon solves with terminal = lower envelope at each
/// horizon, compared with the stationary solution for the dt-step generator
/// (P_dt - I)/dt. Consecutive gaps must shrink by at most 1.1 x the
/// survival factor of the horizon increment.
HorizonReport elliptic_from_horizon(const Generator& gen, double dt, const std::vector<Index>& steps,
                                    const DriverSystem& drv, const BarrierSystem& bar);

struct TvBound {
    bool applicable = false;
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = true;
};

/// ||nu||_TV <= ||f(u)||_1 + ||f(u_up)||_1 + 2 ||mu||_TV + ||beta||_TV with
/// beta = -L u_up - f(u_up) - mu; only applicable when the chain has a
/// sub-Markov dual.
TvBound tv_bound_check(const Generator& gen, const QviSolution& sol, const DriverSystem& drv, const Envelope& env);

double envelope_scale(const Envelope& env);

}  // namespace oswitch
