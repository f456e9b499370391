#include "oswitch/switching.hpp"

#include "oswitch/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <optional>

namespace oswitch {

FeedbackPolicy::FeedbackPolicy(Index steps, Index modes, Index states)
    : steps_(steps), modes_(modes), states_(states),
      actions_(static_cast<std::size_t>(steps * modes * states), kStay) {
    require(steps >= 0 && modes >= 1 && states >= 1, ErrorKind::InvalidArgument, "invalid policy dimensions");
}

Index FeedbackPolicy::settle(Index k, Index j, Index x) const {
    Index cur = j;
    for (Index hop = 0; hop <= modes_; ++hop) {
        const int a = action(k, cur, x);
        if (a == kStay) return cur;
        cur = a;
    }
    return -1;
}

void validate_policy(const FeedbackPolicy& pol, const BarrierSystem& bar) {
    require(pol.modes() == bar.modes() && pol.states() == bar.states(), ErrorKind::DimensionMismatch,
            "policy and barrier dimensions differ");
    for (Index k = 0; k < pol.steps(); ++k)
        for (Index j = 0; j < pol.modes(); ++j)
            for (Index x = 0; x < pol.states(); ++x) {
                const int a = pol.action(k, j, x);
                if (a != FeedbackPolicy::kStay && !bar.allows(j, a))
                    fail(ErrorKind::InvalidAction, "switch " + std::to_string(j) + " -> " + std::to_string(a) +
                                                       " not allowed at step " + std::to_string(k));
            }
}

namespace {

struct Prepared {
    Matrix P;
    Index N = 0, n = 0, K = 0;
    double dt = 0.0;
};

Prepared prepare(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv, const BarrierSystem& bar,
                 const Vector& terminal) {
    require(drv.kind() == DriverKind::Decoupled, ErrorKind::NonDecoupledDriver,
            "switching solvers need a driver that does not depend on y");
    require(drv.states() == gen.size() && bar.states() == gen.size() && bar.modes() == drv.modes(),
            ErrorKind::DimensionMismatch, "generator, driver and barrier dimensions differ");
    require(terminal.size() == gen.size(), ErrorKind::DimensionMismatch, "terminal needs n entries");
    grid.check_resolution(gen);
    return {transition_step(gen, grid.dt).matrix, drv.modes(), gen.size(), grid.steps, grid.dt};
}

// stay^j(x) at step k given the next field.
ModeField stay_values(const Prepared& p, const DriverSystem& drv, const ModeField& next) {
    ModeField stay(p.N, p.n);
    Vector row(p.n);
    for (Index j = 0; j < p.N; ++j) {
        row = next.row(j).transpose();
        for (Index x = 0; x < p.n; ++x)
            stay(j, x) = continuation(p.P, x, row.data(), p.n) + p.dt * drv.mu()(j, x) + p.dt * drv.psi()(j, x);
    }
    return stay;
}

FieldPath evaluate_prepared(const Prepared& p, const DriverSystem& drv, const BarrierSystem& bar,
                            const Vector& terminal, const FeedbackPolicy& pol) {
    FieldPath J(static_cast<std::size_t>(p.K + 1));
    J.back() = terminal.transpose().replicate(p.N, 1);
    for (Index k = p.K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const ModeField stay = stay_values(p, drv, J[ks + 1]);
        J[ks].resize(p.N, p.n);
        for (Index x = 0; x < p.n; ++x)
            for (Index j = 0; j < p.N; ++j) {
                double paid = 0.0;
                Index cur = j;
                Index hops = 0;
                for (int a = pol.action(k, cur, x); a != FeedbackPolicy::kStay; a = pol.action(k, cur, x)) {
                    if (++hops > p.N)
                        fail(ErrorKind::InvalidAction, "policy switches in a loop at step " + std::to_string(k));
                    paid += bar.cost(cur, a, x);
                    cur = a;
                }
                J[ks](j, x) = stay(cur, x) - paid;
            }
    }
    return J;
}

bool policy_loop_free(const FeedbackPolicy& pol) {
    for (Index k = 0; k < pol.steps(); ++k)
        for (Index j = 0; j < pol.modes(); ++j)
            for (Index x = 0; x < pol.states(); ++x)
                if (pol.settle(k, j, x) < 0) return false;
    return true;
}

std::int64_t count_bound(const FieldPath& V, const BarrierSystem& bar) {
    double floor = bar.form() == BarrierForm::Cost ? bar.cost_floor() : 0.0;
    if (floor <= 0.0) {
        floor = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < bar.modes(); ++j)
            for (const auto& e : bar.edges(j)) floor = std::min(floor, e.cost.minCoeff());
    }
    if (!std::isfinite(floor)) return 0;  // no edges: no switch is possible
    if (floor <= 0.0) return -1;
    double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
    for (const auto& f : V) {
        hi = std::max(hi, f.maxCoeff());
        lo = std::min(lo, f.minCoeff());
    }
    return static_cast<std::int64_t>(std::floor((hi - lo) / floor)) + 1;
}

double value_scale(const FieldPath& V) { return std::max(1.0, sup_norm(V)); }

}  // namespace

SwitchingValue value_via_dp(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                            const BarrierSystem& bar, const Vector& terminal) {
    const Prepared p = prepare(gen, grid, drv, bar, terminal);
    require(check_no_loop(bar).ok, ErrorKind::NoLoopViolation, "barrier admits a zero-cost switching loop");

    SwitchingValue out;
    out.grid = grid;
    out.V.resize(static_cast<std::size_t>(p.K + 1));
    out.V.back() = terminal.transpose().replicate(p.N, 1);
    const int cap = static_cast<int>(10 * p.N + 10);
    for (Index k = p.K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const ModeField stay = stay_values(p, drv, out.V[ks + 1]);
        ModeField V = stay;
        for (Index x = 0; x < p.n; ++x) {
            bool changed = true;
            int sweeps = 0;
            while (changed) {
                require(++sweeps <= cap, ErrorKind::NoConvergence, "within-step switching sweep did not settle");
                changed = false;
                for (Index j = 0; j < p.N; ++j) {
                    const double nv = bar.level(j, x, V.col(x)).clamp(stay(j, x));
                    if (nv != V(j, x)) {
                        V(j, x) = nv;
                        changed = true;
                    }
                }
            }
        }
        out.V[ks] = std::move(V);
    }
    out.scale = value_scale(out.V);
    out.switch_count_bound = count_bound(out.V, bar);
    out.policy = extract_optimal_strategy(out, bar);
    return out;
}

FieldPath evaluate_feedback_policy(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                   const BarrierSystem& bar, const Vector& terminal, const FeedbackPolicy& pol) {
    const Prepared p = prepare(gen, grid, drv, bar, terminal);
    require(pol.steps() == p.K, ErrorKind::DimensionMismatch, "policy must cover steps 0..K-1");
    validate_policy(pol, bar);
    return evaluate_prepared(p, drv, bar, terminal, pol);
}

double policy_space_bound(const BarrierSystem& bar, Index steps) {
    std::size_t widest = 0;
    for (Index j = 0; j < bar.modes(); ++j) widest = std::max(widest, bar.edges(j).size());
    const double exponent = static_cast<double>(steps * bar.states() * bar.modes());
    return std::pow(static_cast<double>(widest + 1), exponent);
}

SwitchingValue brute_force_value(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const BarrierSystem& bar, const Vector& terminal, double enumeration_cap) {
    const Prepared p = prepare(gen, grid, drv, bar, terminal);
    const double bound = policy_space_bound(bar, p.K);
    if (bound > enumeration_cap)
    {
        char msg[128];
        std::snprintf(msg, sizeof msg, "policy space bound %.6g exceeds cap %.6g", bound, enumeration_cap);
        fail(ErrorKind::CapExceeded, msg);
    }

    // Mixed-radix enumeration over the (k, j, x) slots.
    struct Slot {
        Index k, j, x;
    };
    std::vector<Slot> slots;
    std::vector<std::uint64_t> radix;
    std::uint64_t total = 1;
    for (Index k = 0; k < p.K; ++k)
        for (Index j = 0; j < p.N; ++j)
            for (Index x = 0; x < p.n; ++x) {
                slots.push_back({k, j, x});
                radix.push_back(bar.edges(j).size() + 1);
                total *= radix.back();
            }
    auto decode = [&](std::uint64_t code) {
        FeedbackPolicy pol(p.K, p.N, p.n);
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto digit = code % radix[s];
            code /= radix[s];
            if (digit > 0)
                pol.set(slots[s].k, slots[s].j, slots[s].x,
                        static_cast<int>(bar.edges(slots[s].j)[digit - 1].target));
        }
        return pol;
    };
    using Result = std::optional<FieldPath>;
    auto run = [&](auto&& visit) {
        constexpr std::uint64_t chunk = 4096;
        for (std::uint64_t start = 0; start < total; start += chunk) {
            const auto m = static_cast<std::int64_t>(std::min(chunk, total - start));
            auto results = parallel_samples<Result>(m, [&](std::int64_t i) -> Result {
                const FeedbackPolicy pol = decode(start + static_cast<std::uint64_t>(i));
                if (!policy_loop_free(pol)) return std::nullopt;
                return evaluate_prepared(p, drv, bar, terminal, pol);
            });
            for (std::int64_t i = 0; i < m; ++i)
                if (results[static_cast<std::size_t>(i)])
                    if (visit(start + static_cast<std::uint64_t>(i), *results[static_cast<std::size_t>(i)])) return;
        }
    };

    SwitchingValue out;
    out.grid = grid;
    run([&](std::uint64_t, const FieldPath& J) {
        if (out.V.empty()) {
            out.V = J;
        } else {
            for (std::size_t k = 0; k < J.size(); ++k) out.V[k] = out.V[k].cwiseMax(J[k]);
        }
        return false;
    });
    require(!out.V.empty(), ErrorKind::InvariantViolated, "no loop-free policy found");

    bool found = false;
    run([&](std::uint64_t code, const FieldPath& J) {
        for (std::size_t k = 0; k < J.size(); ++k)
            if ((J[k].array() < out.V[k].array() - 1e-12).any()) return false;
        out.policy = decode(code);
        found = true;
        return true;
    });
    require(found, ErrorKind::InvariantViolated, "no enumerated policy attains the pointwise maximum");
    out.scale = value_scale(out.V);
    out.switch_count_bound = count_bound(out.V, bar);
    return out;
}

FeedbackPolicy extract_optimal_strategy(const SwitchingValue& val, const BarrierSystem& bar) {
    require(!val.V.empty(), ErrorKind::InvalidArgument, "empty value");
    const Index K = static_cast<Index>(val.V.size()) - 1;
    const Index N = val.V.front().rows();
    const Index n = val.V.front().cols();
    require(bar.modes() == N && bar.states() == n, ErrorKind::DimensionMismatch, "value and barrier differ");
    const double tol = 1e-9 * val.scale;
    FeedbackPolicy pol(K, N, n);
    for (Index k = 0; k < K; ++k) {
        const ModeField& V = val.V[static_cast<std::size_t>(k)];
        for (Index x = 0; x < n; ++x)
            for (Index j = 0; j < N; ++j) {
                const BarrierLevel h = bar.level(j, x, V.col(x));
                if (h.is_none() || V(j, x) > h.value() + tol) continue;
                pol.set(k, j, x, static_cast<int>(bar.attaining_target(j, x, V.col(x), tol)));
            }
    }
    return pol;
}

std::vector<SwitchEvent> trace_switches(const FeedbackPolicy& pol, Index j0, const std::vector<Index>& states) {
    std::vector<SwitchEvent> events;
    Index j = j0;
    const Index last = std::min(pol.steps(), static_cast<Index>(states.size()));
    for (Index k = 0; k < last; ++k) {
        const Index x = states[static_cast<std::size_t>(k)];
        Index hops = 0;
        for (int a = pol.action(k, j, x); a != FeedbackPolicy::kStay; a = pol.action(k, j, x)) {
            if (++hops > pol.modes()) fail(ErrorKind::InvalidAction, "policy switches in a loop");
            events.push_back({k, j, a});
            j = a;
        }
    }
    return events;
}

McStats simulate_strategy(const Generator& gen, const TimeGrid& grid, Index x0, Index j0, const DriverSystem& drv,
                          const BarrierSystem& bar, const Vector& terminal, const FeedbackPolicy& pol,
                          std::int64_t paths, std::uint64_t seed) {
    require(paths >= 1, ErrorKind::InvalidArgument, "simulation needs at least one path");
    const Prepared p = prepare(gen, grid, drv, bar, terminal);
    require(x0 >= 0 && x0 < p.n && j0 >= 0 && j0 < p.N, ErrorKind::InvalidArgument, "start state/mode out of range");
    require(pol.steps() == p.K, ErrorKind::DimensionMismatch, "policy must cover steps 0..K-1");
    validate_policy(pol, bar);
    require(policy_loop_free(pol), ErrorKind::InvalidAction, "policy switches in a loop");
    const double horizon = grid.horizon();

    const auto samples = parallel_samples<double>(paths, [&](std::int64_t i) {
        const Path path = sample_path(gen, x0, path_seed(seed, static_cast<std::uint64_t>(i)), horizon);
        CompensatedSum total;
        Index j = j0;
        for (Index k = 0; k < p.K; ++k) {
            const double t = p.dt * static_cast<double>(k);
            if (!(t < path.killed_at)) return total.value();
            const Index x = path.state_at(t);
            Index hops = 0;
            for (int a = pol.action(k, j, x); a != FeedbackPolicy::kStay && hops < p.N; a = pol.action(k, j, x)) {
                ++hops;
                total.add(-bar.cost(j, a, x));
                j = a;
            }
            total.add(p.dt * (drv.psi()(j, x) + drv.mu()(j, x)));
        }
        if (path.capped) total.add(terminal(path.state_at(horizon)));
        return total.value();
    });
    return summarize(samples);
}

}  // namespace oswitch
