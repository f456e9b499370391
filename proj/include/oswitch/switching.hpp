#pragma once

#include "oswitch/bsde_dp.hpp"
#include "oswitch/drivers.hpp"
#include "oswitch/monte_carlo.hpp"

#include <cstdint>
#include <vector>

namespace oswitch {

/// Feedback switching rule: action(k, j, x) is -1 (stay) or a target in A_j,
/// for grid times k = 0..steps-1. No switching happens at the horizon.
class FeedbackPolicy {
public:
    static constexpr int kStay = -1;

    FeedbackPolicy() = default;
    FeedbackPolicy(Index steps, Index modes, Index states);
    static FeedbackPolicy never_switch(Index steps, Index modes, Index states) { return {steps, modes, states}; }

    Index steps() const { return steps_; }
    Index modes() const { return modes_; }
    Index states() const { return states_; }

    int action(Index k, Index j, Index x) const { return actions_[offset(k, j, x)]; }
    void set(Index k, Index j, Index x, int a) { actions_[offset(k, j, x)] = a; }

    /// Mode reached from j at (k, x) after following switches, or -1 when
    /// the switches close a cycle.
    Index settle(Index k, Index j, Index x) const;

    bool operator==(const FeedbackPolicy&) const = default;

private:
    std::size_t offset(Index k, Index j, Index x) const {
        return static_cast<std::size_t>((k * modes_ + j) * states_ + x);
    }
    Index steps_ = 0, modes_ = 0, states_ = 0;
    std::vector<int> actions_;
};

/// Throws InvalidAction if some target is not in A_j.
void validate_policy(const FeedbackPolicy& pol, const BarrierSystem& bar);

struct SwitchingValue {
    TimeGrid grid;
    FieldPath V;
    FeedbackPolicy policy;
    std::int64_t switch_count_bound = 0;
    /// Scale used for the contact tolerance: max|V|, at least 1.
    double scale = 1.0;
};

/// Mode-augmented dynamic programming for decoupled drivers and cost-form
/// barriers with a mode-independent terminal vector. Within each step the
/// mode sweep V^j = max(stay^j, H^j(V)) runs to its fixed point.
SwitchingValue value_via_dp(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                            const BarrierSystem& bar, const Vector& terminal);

/// Exact expected payoff of a feedback policy for every (k, j, x).
FieldPath evaluate_feedback_policy(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                   const BarrierSystem& bar, const Vector& terminal, const FeedbackPolicy& pol);

/// Number of feedback policies bounded as (max_j |A_j| + 1)^(K n N).
double policy_space_bound(const BarrierSystem& bar, Index steps);

/// Exhaustive maximisation over all feedback policies; policies whose
/// switches close a loop at some point are skipped (a loop only pays costs).
/// Throws CapExceeded when the bound exceeds the cap.
SwitchingValue brute_force_value(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const BarrierSystem& bar, const Vector& terminal, double enumeration_cap);

/// Switch at (k, x, j) iff V^j <= H^j(V) + 1e-9 scale, to the smallest
/// attaining target.
FeedbackPolicy extract_optimal_strategy(const SwitchingValue& val, const BarrierSystem& bar);

struct SwitchEvent {
    Index step = 0;
    Index from = 0;
    Index to = 0;
};

/// Switches made along one sequence of visited states (one per grid time).
std::vector<SwitchEvent> trace_switches(const FeedbackPolicy& pol, Index j0, const std::vector<Index>& states);

/// Monte Carlo estimate of the payoff of `pol` from (x0, j0) along exact
/// chain paths; rewards accrue as dt psi(X_{t_k}) at grid times while the
/// chain is alive and switches happen at grid times only.
McStats simulate_strategy(const Generator& gen, const TimeGrid& grid, Index x0, Index j0, const DriverSystem& drv,
                          const BarrierSystem& bar, const Vector& terminal, const FeedbackPolicy& pol,
                          std::int64_t paths, std::uint64_t seed);

}  // namespace oswitch
