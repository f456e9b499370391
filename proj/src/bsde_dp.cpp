#include "oswitch/bsde_dp.hpp"

#include "oswitch/errors.hpp"
#include "picard_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

namespace oswitch {

TimeGrid TimeGrid::make(double dt, Index steps, double guard) {
    require(std::isfinite(dt) && dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive and finite");
    require(steps >= 1, ErrorKind::InvalidArgument, "steps must be >= 1");
    require(guard > 0.0, ErrorKind::InvalidArgument, "resolution guard must be positive");
    return TimeGrid{dt, steps, guard};
}

void TimeGrid::check_resolution(const Generator& gen) const {
    require(dt > 0.0 && steps >= 1, ErrorKind::InvalidArgument, "grid needs dt > 0 and steps >= 1");
    const double product = dt * gen.max_exit_rate();
    if (product > guard * (1.0 + 1e-12))
        fail(ErrorKind::GridTooCoarse, "dt * max exit rate = " + std::to_string(product) + " exceeds guard " +
                                           std::to_string(guard));
}

ScalarDriverFn ScalarDriverFn::zero() {
    return {[](Index, double) { return 0.0; }, [](Index, double) { return 0.0; }};
}

ScalarDriverFn ScalarDriverFn::constant(Vector c) {
    return {[c](Index x, double) { return c(x); }, [](Index, double) { return 0.0; }};
}

ScalarDriverFn ScalarDriverFn::slice(const DriverSystem& drv, Index j, ModeField others) {
    require(others.rows() == drv.modes() && others.cols() == drv.states(), ErrorKind::DimensionMismatch,
            "frozen field must be N x n");
    auto frozen = std::make_shared<const ModeField>(std::move(others));
    return {[&drv, j, frozen](Index x, double y) {
                Vector z = frozen->col(x);
                z(j) = y;
                return drv.value(j, x, z);
            },
            [&drv, j, frozen](Index x, double y) {
                Vector z = frozen->col(x);
                z(j) = y;
                return drv.slope(j, j, x, z);
            }};
}

RootResult solve_increasing_root(const std::function<double(double)>& g, const std::function<double(double)>& dg,
                                 double guess) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double y = guess;
    double gy = g(y);
    require(std::isfinite(gy), ErrorKind::RootBracketFailure, "non-finite residual at the initial guess");
    if (gy == 0.0) return {y, 0};

    // Bracket: g increasing, so the root lies above y when g(y) < 0.
    double lo = y, hi = y, glo = gy, ghi = gy;
    const double dir = gy < 0.0 ? 1.0 : -1.0;
    double width = 1.0 + std::abs(y);
    bool bracketed = false;
    for (int e = 0; e < 64; ++e) {
        const double other = y + dir * width;
        const double go = g(other);
        if (!std::isfinite(go)) break;
        if (dir > 0.0) {
            if (go >= 0.0) { hi = other; ghi = go; bracketed = true; break; }
            lo = other; glo = go;
        } else {
            if (go <= 0.0) { lo = other; glo = go; bracketed = true; break; }
            hi = other; ghi = go;
        }
        width *= 2.0;
    }
    if (!bracketed)
        fail(ErrorKind::RootBracketFailure, "no sign change found; the driver is not nonincreasing in its own variable");
    if (glo == 0.0) return {lo, 1};
    if (ghi == 0.0) return {hi, 1};

    int newton_steps = 0;
    double best = y, gbest = std::abs(gy);
    for (int it = 1; it <= 220; ++it) {
        const double d = dg(y);
        double cand = y - gy / d;
        const bool newton_ok = newton_steps < 20 && std::isfinite(cand) && d > 0.0 && cand > lo && cand < hi;
        if (newton_ok) {
            ++newton_steps;
        } else {
            cand = 0.5 * (lo + hi);
        }
        const double step = cand - y;
        y = cand;
        gy = g(y);
        if (std::abs(gy) < gbest) { gbest = std::abs(gy); best = y; }
        if (gy == 0.0) return {y, it};
        if (gy < 0.0) lo = y; else hi = y;
        const double ulp = 4.0 * eps * std::max(1.0, std::abs(y));
        if (hi - lo <= ulp || (newton_ok && std::abs(step) <= ulp)) return {best, it};
    }
    return {best, 220};
}

namespace detail {

// y - dt f(y) - dt n (h - y)^+ - rhs = 0
RowSolve solve_row(double rhs, double dt, const std::function<double(double)>& f,
                   const std::function<double(double)>& df, double penalty, BarrierLevel h) {
    const bool penalised = penalty > 0.0 && !h.is_none();
    const double hv = penalised ? h.value() : 0.0;
    auto pen = [&](double y) { return penalised ? penalty * std::max(hv - y, 0.0) : 0.0; };
    auto g = [&](double y) { return y - dt * f(y) - dt * pen(y) - rhs; };
    auto dg = [&](double y) { return 1.0 - dt * df(y) + ((penalised && y < hv) ? dt * penalty : 0.0); };
    const double guess = rhs + dt * (f(rhs) + pen(rhs));
    const auto r = solve_increasing_root(g, dg, guess);
    return {r.root, r.iterations};
}

FieldPath zero_path(Index K, Index N, Index n) { return FieldPath(static_cast<std::size_t>(K + 1), ModeField::Zero(N, n)); }

}  // namespace detail

using detail::solve_row;
using detail::zero_path;

BsdeSolution solve_bsde_scalar(const Generator& gen, const TimeGrid& grid, const Vector& terminal,
                               const Vector& source, const ScalarDriverFn& f) {
    const Index n = gen.size();
    require(terminal.size() == n && source.size() == n, ErrorKind::DimensionMismatch,
            "terminal and source must have one entry per state");
    require(terminal.allFinite() && source.allFinite(), ErrorKind::InvalidArgument, "non-finite data");
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    const Index K = grid.steps;
    const double dt = grid.dt;

    BsdeSolution sol;
    sol.grid = grid;
    sol.states = n;
    sol.Y = zero_path(K, 1, n);
    sol.drift = zero_path(K, 1, n);
    sol.reflection = zero_path(K, 1, n);
    sol.Y[static_cast<std::size_t>(K)].row(0) = terminal.transpose();

    Vector next = terminal;
    for (Index k = K - 1; k >= 0; --k) {
        auto& Yk = sol.Y[static_cast<std::size_t>(k)];
        for (Index x = 0; x < n; ++x) {
            const double cont = continuation(P, x, next.data(), n);
            const double rhs = cont + dt * source(x);
            const auto fv = [&](double y) { return f.value(x, y); };
            const auto fd = [&](double y) { return f.slope(x, y); };
            const auto r = solve_row(rhs, dt, fv, fd, 0.0, BarrierLevel::none());
            Yk(0, x) = r.root;
            sol.drift[static_cast<std::size_t>(k)](0, x) = dt * f.value(x, r.root) + dt * source(x);
            ++sol.meta.root_solves;
            sol.meta.max_root_iterations = std::max(sol.meta.max_root_iterations, r.iterations);
        }
        next = Yk.row(0).transpose();
    }
    sol.meta.sweeps = 1;
    return sol;
}

namespace detail {

double solution_scale(const PathEnvelope& env) { return sup_norm(env.upper) + sup_norm(env.lower); }

BsdeSolution run_picard(const PicardProblem& pb) {
    const DriverSystem& drv = *pb.drv;
    const Matrix& P = *pb.kernel;
    const Index N = drv.modes();
    const Index n = drv.states();
    const Index K = pb.grid.steps;
    const double dt = pb.grid.dt;
    require(static_cast<Index>(pb.start.size()) == K + 1, ErrorKind::DimensionMismatch, "start path needs K+1 fields");
    for (const auto& f : pb.start)
        require(f.rows() == N && f.cols() == n, ErrorKind::DimensionMismatch, "start field must be N x n");
    require(pb.terminal.rows() == N && pb.terminal.cols() == n, ErrorKind::DimensionMismatch, "terminal must be N x n");

    const bool barrier_active = pb.bar != nullptr && !pb.bar->all_empty() && (pb.reflect || pb.penalty > 0.0);
    const bool coupled = drv.kind() != DriverKind::Decoupled || barrier_active;
    const double scale = std::max({1.0, sup_norm(pb.start), pb.upper ? sup_norm(*pb.upper) : 0.0});
    const double order_tol = 1e-12 * scale;

    BsdeSolution sol;
    sol.grid = pb.grid;
    sol.states = n;
    FieldPath prev = pb.start;

    Vector next(n);
    Vector z(N);
    for (int sweep = 1; sweep <= pb.opts.max_sweeps; ++sweep) {
        FieldPath Y = zero_path(K, N, n);
        FieldPath drift = zero_path(K, N, n);
        FieldPath refl = zero_path(K, N, n);
        Y[static_cast<std::size_t>(K)] = pb.terminal;

        for (Index k = K - 1; k >= 0; --k) {
            const auto ks = static_cast<std::size_t>(k);
            for (Index j = 0; j < N; ++j) {
                next = Y[ks + 1].row(j).transpose();
                for (Index x = 0; x < n; ++x) {
                    z = prev[ks].col(x);
                    if (pb.opts.gauss_seidel)
                        for (Index i = 0; i < j; ++i) z(i) = Y[ks](i, x);
                    const BarrierLevel h =
                        barrier_active ? pb.bar->level(j, x, z) : BarrierLevel::none();
                    const double cont = continuation(P, x, next.data(), n);
                    const double rhs = cont + dt * drv.mu()(j, x);
                    const auto fv = [&](double y) { z(j) = y; return drv.value(j, x, z); };
                    const auto fd = [&](double y) { z(j) = y; return drv.slope(j, j, x, z); };
                    const auto r = solve_row(rhs, dt, fv, fd, pb.reflect ? 0.0 : pb.penalty, h);
                    ++sol.meta.root_solves;
                    sol.meta.max_root_iterations = std::max(sol.meta.max_root_iterations, r.iterations);

                    z(j) = r.root;
                    drift[ks](j, x) = dt * drv.value(j, x, z) + dt * drv.mu()(j, x);
                    if (pb.reflect) {
                        Y[ks](j, x) = h.clamp(r.root);
                        refl[ks](j, x) = Y[ks](j, x) - r.root;
                    } else {
                        Y[ks](j, x) = r.root;
                        if (pb.penalty > 0.0 && !h.is_none())
                            refl[ks](j, x) = dt * pb.penalty * std::max(h.value() - r.root, 0.0);
                    }
                }
            }
        }

        double increment = 0.0;
        double decrease = 0.0;
        double excess = 0.0;
        for (Index k = 0; k <= K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const ModeField diff = Y[ks] - prev[ks];
            increment = std::max(increment, diff.cwiseAbs().maxCoeff());
            decrease = std::max(decrease, -diff.minCoeff());
            if (pb.upper) excess = std::max(excess, (Y[ks] - (*pb.upper)[ks]).maxCoeff());
        }
        ++sol.meta.monotone_checks;
        if (decrease > order_tol) {
            ++sol.meta.monotone_violations;
            sol.meta.worst_decrease = std::max(sol.meta.worst_decrease, decrease);
            if (pb.opts.enforce_monotone)
                fail(ErrorKind::MonotonicityBroken,
                     "Picard iterate decreased by " + std::to_string(decrease) + " at sweep " + std::to_string(sweep));
        }
        if (pb.upper && pb.opts.enforce_monotone && excess > order_tol)
            fail(ErrorKind::InvariantViolated,
                 "Picard iterate exceeds the upper envelope by " + std::to_string(excess));

        sol.meta.sweeps = sweep;
        sol.meta.final_increment = increment;
        if (!coupled || increment < pb.opts.tol) {
            sol.Y = std::move(Y);
            sol.drift = std::move(drift);
            sol.reflection = std::move(refl);
            return sol;
        }
        prev = std::move(Y);
    }
    fail(ErrorKind::NoConvergence, "Picard iteration hit the cap of " + std::to_string(pb.opts.max_sweeps) +
                                       " sweeps (last increment " + std::to_string(sol.meta.final_increment) + ")");
}

}  // namespace detail

PathEnvelope build_path_envelope(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const BarrierSystem& bar) {
    const Index n = gen.size();
    const Index N = drv.modes();
    require(drv.states() == n && bar.states() == n && bar.modes() == N, ErrorKind::DimensionMismatch,
            "generator, driver and barrier dimensions differ");
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    const Vector g_low = envelope_lower_rate(drv);
    const Vector g_up = envelope_upper_rate(drv);

    Vector low(n), up(n);
    for (Index x = 0; x < n; ++x) {
        low(x) = drv.xi().col(x).minCoeff();
        if (drv.kind() != DriverKind::Decoupled) low(x) = std::min(low(x), 0.0);
        up(x) = drv.xi().col(x).cwiseMax(0.0).sum();
    }

    const Index K = grid.steps;
    PathEnvelope env;
    env.lower.resize(static_cast<std::size_t>(K + 1));
    env.upper.resize(static_cast<std::size_t>(K + 1));
    for (Index k = K;; --k) {
        env.lower[static_cast<std::size_t>(k)] = low.transpose().replicate(N, 1);
        env.upper[static_cast<std::size_t>(k)] = up.transpose().replicate(N, 1);
        check_envelope({env.lower[static_cast<std::size_t>(k)], env.upper[static_cast<std::size_t>(k)]}, bar);
        if (k == 0) break;
        Vector lo_next(n), up_next(n);
        for (Index x = 0; x < n; ++x) {
            lo_next(x) = continuation(P, x, low.data(), n) + grid.dt * g_low(x);
            up_next(x) = continuation(P, x, up.data(), n) + grid.dt * g_up(x);
        }
        low = lo_next;
        up = up_next;
    }
    return env;
}

BsdeSolution solve_system_picard(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                 const PathEnvelope& env, const PicardOptions& opts) {
    require(drv.states() == gen.size(), ErrorKind::DimensionMismatch, "driver and generator sizes differ");
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    detail::PicardProblem pb;
    pb.kernel = &P;
    pb.grid = grid;
    pb.drv = &drv;
    pb.terminal = drv.xi();
    pb.start = opts.start ? *opts.start : env.lower;
    pb.upper = opts.start ? nullptr : &env.upper;
    pb.opts = opts;
    return detail::run_picard(pb);
}

DataOrder certify_order(const DriverSystem& a, const DriverSystem& b, std::int64_t sample_budget,
                        std::uint64_t seed) {
    if (a.modes() != b.modes() || a.states() != b.states()) return {false, "dimension mismatch"};
    if ((a.xi().array() > b.xi().array()).any()) return {false, "terminal data not ordered"};
    if ((a.mu().array() > b.mu().array()).any()) return {false, "source densities not ordered"};

    bool same_coupling = a.kind() == b.kind();
    if (same_coupling && a.kind() == DriverKind::Affine)
        for (std::size_t x = 0; x < a.coupling().size(); ++x)
            same_coupling = same_coupling && a.coupling()[x] == b.coupling()[x];
    if (same_coupling && a.kind() == DriverKind::SmoothCoupled)
        same_coupling = a.lambda() == b.lambda() && a.alpha() == b.alpha();
    if (same_coupling) {
        if ((a.psi().array() > b.psi().array()).any()) return {false, "psi not ordered"};
        return {true, "identical coupling, psi/mu/xi ordered entrywise"};
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-10.0, 10.0);
    std::uniform_int_distribution<Index> state(0, a.states() - 1);
    Vector y(a.modes());
    for (std::int64_t s = 0; s < sample_budget; ++s) {
        const Index x = state(rng);
        for (Index i = 0; i < a.modes(); ++i) y(i) = coord(rng);
        for (Index j = 0; j < a.modes(); ++j) {
            const double fa = a.value(j, x, y);
            if (fa > b.value(j, x, y) + 1e-12 * (1.0 + std::abs(fa))) return {false, "sampled f > f'"};
        }
    }
    return {true, "mu/xi ordered entrywise, f <= f' on " + std::to_string(sample_budget) + " samples"};
}

bool comparison_check(const BsdeSolution& a, const BsdeSolution& b, const DataOrder& order, double slack) {
    if (!(a.grid == b.grid) || a.states != b.states || a.modes() != b.modes() || a.Y.size() != b.Y.size())
        fail(ErrorKind::GridMismatch, "solutions live on different grids");
    require(order.ordered, ErrorKind::InvalidArgument, "data order not certified: " + order.reason);
    for (std::size_t k = 0; k < a.Y.size(); ++k)
        if ((a.Y[k].array() > b.Y[k].array() + slack).any()) return false;
    return true;
}

double martingale_check(const BsdeSolution& sol, const Generator& gen) {
    require(sol.states == gen.size(), ErrorKind::DimensionMismatch, "solution and generator sizes differ");
    const Matrix P = transition_step(gen, sol.grid.dt).matrix;
    const Index n = sol.states;
    const Index N = sol.modes();
    double worst = 0.0;
    Vector next(n);
    for (std::size_t k = 0; k + 1 < sol.Y.size(); ++k) {
        for (Index j = 0; j < N; ++j) {
            next = sol.Y[k + 1].row(j).transpose();
            for (Index x = 0; x < n; ++x) {
                const double base = sol.Y[k](j, x) - sol.drift[k](j, x) - sol.reflection[k](j, x);
                // Sum_{x'} P(x,x') (Y_{k+1}(x') - base) + (1 - Sum P)(0 - base)
                worst = std::max(worst, std::abs(continuation(P, x, next.data(), n) - base));
            }
        }
    }
    return worst;
}

}  // namespace oswitch
