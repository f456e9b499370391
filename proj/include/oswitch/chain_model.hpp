#pragma once

#include "oswitch/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oswitch {

/// Sub-Markovian rate matrix of a killed continuous-time chain.
///
/// Off-diagonal rates are nonnegative, every row sums to -kappa(x) <= 0, and
/// -rates has a certified entrywise-nonnegative inverse (the potential
/// operator). Construction fails otherwise, so a Generator in hand is always
/// transient.
class Generator {
public:
    static Generator from_rates(Matrix rates, std::vector<std::string> labels = {});

    Index size() const { return rates_.rows(); }
    const Matrix& rates() const { return rates_; }
    const std::vector<std::string>& labels() const { return labels_; }

    double killing(Index x) const { return -rates_.row(x).sum(); }
    Vector killing_rates() const { return -rates_.rowwise().sum(); }
    double exit_rate(Index x) const { return -rates_(x, x); }
    double max_exit_rate() const;

    /// (-rates)^{-1}, entrywise >= 0.
    const Matrix& potential() const { return potential_; }

    /// Expected lifetime from each state, ((-L)^{-1} 1)(x).
    Vector mean_lifetime() const { return potential_.rowwise().sum(); }

    /// Column sums of the rates are <= 0 (the chain has a sub-Markov dual).
    bool has_dual_markov(double tol = 1e-12) const;

    /// The generator (P_dt - I)/dt whose stationary equations are solved
    /// exactly by the fixed points of a dt-step backward recursion.
    Generator time_step_generator(double dt) const;

private:
    Generator() = default;
    Matrix rates_;
    Matrix potential_;
    std::vector<std::string> labels_;
};

/// Density of a measure w.r.t. the counting measure on the state space.
struct MeasureDensity {
    Vector values;

    double total_variation() const { return values.cwiseAbs().sum(); }
    Index size() const { return values.size(); }
};

struct TransitionKernel {
    double dt = 0.0;
    Matrix matrix;
};

/// One realisation of the killed chain. states[0] is the start; states[i]
/// is entered at jump_times[i-1]. If `capped` the path was still alive at
/// the horizon cap and killed_at holds the cap.
struct Path {
    std::vector<double> jump_times;
    std::vector<Index> states;
    double killed_at = 0.0;
    bool capped = false;

    Index state_at(double t) const;
};

enum class ChainFamily { DriftDiffusion, JumpKernel, Explicit };

/// Instance description of a chain family. Killing is added on top of the
/// family's own rates.
struct ChainSpec {
    Index states = 0;
    ChainFamily family = ChainFamily::Explicit;
    // drift-diffusion: nearest-neighbour upwind stencil of a u'' + b u' on mesh h
    double diffusion = 1.0;
    double drift = 0.0;
    double mesh = 1.0;
    // jump-kernel: rate(x,y) = intensity / (|x-y| h)^{1+alpha(x)} for 0 < |x-y| <= range
    double intensity = 1.0;
    double alpha_min = 1.0;
    double alpha_max = 1.0;
    Index range = 1;
    // explicit: row-major rates
    std::vector<double> rates;
    Vector killing;  // per state; empty means zero
    std::vector<std::string> labels;
};

Generator build_generator(const ChainSpec& spec);

/// Solves -L u = g exactly by a direct factorisation.
Vector resolvent_solve(const Generator& gen, const MeasureDensity& g);

/// exp(dt L) by uniformisation with scaling and squaring; the Poisson
/// series is truncated once its tail mass drops below 1e-12.
TransitionKernel transition_step(const Generator& gen, double dt);

/// Exact event-driven simulation until killing or `horizon_cap`.
Path sample_path(const Generator& gen, Index x0, std::uint64_t seed, double horizon_cap);

/// int_0^{killed_at} g(X_r) dr, plus terminal_cap_value when the path was
/// censored by the horizon cap.
double path_functional(const Path& path, const MeasureDensity& running, double terminal_cap_value);

/// Horizon cap under which the survival probability is below 2^-40 from
/// every start state (iterated Markov bound on the lifetime).
double negligible_survival_horizon(const Generator& gen);

}  // namespace oswitch
