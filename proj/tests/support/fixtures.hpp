#pragma once

#include "oswitch/bsde_dp.hpp"
#include "oswitch/chain_model.hpp"
#include "oswitch/drivers.hpp"
#include "oswitch/errors.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace fixtures {

using oswitch::BarrierSystem;
using oswitch::DriverSystem;
using oswitch::FieldPath;
using oswitch::Generator;
using oswitch::Index;
using oswitch::Matrix;
using oswitch::ModeField;
using oswitch::Vector;

using Rng = std::mt19937_64;

// ---- instances ------------------------------------------------------------

/// Single state with killing rate kappa.
Generator single_state(double kappa);

/// Two states, jump rate q each way, uniform killing kappa.
Generator symmetric_walk(double q, double kappa);

/// Random rates in [0, rate_max] with density `fill` and killing drawn from
/// [kappa_min, kappa_max] at every state.
Generator random_generator(Rng& rng, Index n, double fill = 0.6, double rate_max = 1.0, double kappa_min = 0.2,
                           double kappa_max = 1.0);

/// Random psi in [lo, hi], mu in [0, mu_max] and a mode-independent terminal.
DriverSystem random_decoupled(Rng& rng, Index modes, Index n, double lo = -1.0, double hi = 3.0,
                              double mu_max = 0.5);

/// Random diagonally dominant affine coupling.
DriverSystem random_affine(Rng& rng, Index modes, Index n);

/// Random smooth-coupled driver.
DriverSystem random_smooth(Rng& rng, Index modes, Index n);

/// Random cost-form barrier with at most `max_degree` targets per mode and
/// costs in [floor, floor + spread].
BarrierSystem random_cost_barrier(Rng& rng, Index modes, Index n, Index max_degree, double floor = 0.05,
                                  double spread = 1.0);

/// Cost-form barrier with a constant cost on every edge of `adjacency`
/// (0-based targets).
BarrierSystem uniform_cost_barrier(Index n, const std::vector<std::vector<Index>>& adjacency, double cost,
                                   double floor = 0.01);

/// The single-state, two-mode instance psi = (3, 1), unit costs both ways.
struct TwoMode {
    Generator gen;
    DriverSystem drv;
    BarrierSystem bar;
};
TwoMode two_mode();

// ---- oracles --------------------------------------------------------------

/// exp(dt L) from the Pade/scaling-squaring implementation in Eigen.
Matrix expm(const Matrix& rates, double dt);

/// Monte Carlo of int_0^zeta g(X_r) dr with a self-contained simulator
/// (std::exponential_distribution, linear scan for the jump target).
struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};
McEstimate mc_occupation(const Generator& gen, Index x0, const Vector& g, std::int64_t paths, std::uint64_t seed);

/// Damped Newton on the full stationary system -L u^j = f^j(x, u) + mu^j
/// (all N n unknowns at once, dense Jacobian).
ModeField newton_pde(const Generator& gen, const DriverSystem& drv, double tol = 1e-13);

/// Full implicit per-step system Y_k = P Y_{k+1} + dt f(x, Y_k) + dt mu solved
/// by an N-dimensional Newton at every (k, x).
FieldPath newton_bsde(const Generator& gen, const oswitch::TimeGrid& grid, const DriverSystem& drv);

/// Truncated Neumann series for an affine driver: with A = -L (x) I - diag G
/// and B the off-diagonal part of G, u = sum_m (A^{-1} B)^m A^{-1} b.
ModeField neumann_affine(const Generator& gen, const DriverSystem& drv, int terms);

/// Switching value on a single state chain by enumerating every mode
/// sequence w_0..w_{K-1}; moving between modes costs the cheapest path in the
/// adjacency graph. Returns V_0^j for each start mode j.
Vector enumerate_single_state_switching(double survival, double dt, const Vector& psi, const Vector& mu,
                                        const BarrierSystem& bar, Index steps, double terminal);

/// Kind of the oswitch::Error thrown by f, or nullopt if it returns.
template <typename F>
std::optional<oswitch::ErrorKind> thrown_kind(F&& f) {
    try {
        f();
    } catch (const oswitch::Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

/// Largest entrywise difference, or +infinity on a shape mismatch.
double max_abs_diff(const ModeField& a, const ModeField& b);

}  // namespace fixtures
