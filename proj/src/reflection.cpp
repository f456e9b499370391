#include "oswitch/reflection.hpp"

#include "oswitch/errors.hpp"
#include "picard_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oswitch {

namespace {

void check_profile(const BarrierProfile& barrier, Index steps, Index n) {
    require(static_cast<Index>(barrier.size()) == steps + 1, ErrorKind::DimensionMismatch,
            "barrier profile needs K+1 rows");
    for (const auto& row : barrier)
        require(static_cast<Index>(row.size()) == n, ErrorKind::DimensionMismatch, "barrier row needs n entries");
}

void check_terminal(const std::vector<BarrierLevel>& last, const Vector& terminal) {
    for (std::size_t x = 0; x < last.size(); ++x)
        if (last[x].slack(terminal(static_cast<Index>(x))) < 0.0)
            fail(ErrorKind::TerminalDominationFailed,
                 "barrier exceeds terminal value at state " + std::to_string(x));
}

void accumulate_k(ReflectedSolution& sol) {
    sol.K.assign(sol.reflection.size(), ModeField::Zero(sol.modes(), sol.states));
    for (std::size_t k = 0; k + 1 < sol.reflection.size(); ++k) sol.K[k + 1] = sol.K[k] + sol.reflection[k];
}

ReflectedSolution wrap(BsdeSolution base) {
    ReflectedSolution out;
    static_cast<BsdeSolution&>(out) = std::move(base);
    accumulate_k(out);
    return out;
}

void check_terminal_domination(const DriverSystem& drv, const BarrierSystem& bar) {
    for (Index x = 0; x < drv.states(); ++x)
        for (Index j = 0; j < drv.modes(); ++j) {
            const BarrierLevel h = bar.level(j, x, drv.xi().col(x));
            if (h.slack(drv.xi()(j, x)) < -1e-12 * (1.0 + std::abs(drv.xi()(j, x))))
                fail(ErrorKind::TerminalDominationFailed,
                     "terminal value below its obstacle at mode " + std::to_string(j) + ", state " + std::to_string(x));
        }
}

}  // namespace

BarrierProfile constant_profile(Index steps, const std::vector<BarrierLevel>& levels) {
    return BarrierProfile(static_cast<std::size_t>(steps + 1), levels);
}

ReflectedSolution snell_envelope(const Generator& gen, const TimeGrid& grid, const BarrierProfile& barrier,
                                 const Vector& terminal) {
    const Index n = gen.size();
    require(terminal.size() == n, ErrorKind::DimensionMismatch, "terminal needs n entries");
    check_profile(barrier, grid.steps, n);
    check_terminal(barrier.back(), terminal);
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    const Index K = grid.steps;

    BsdeSolution sol;
    sol.grid = grid;
    sol.states = n;
    sol.Y = detail::zero_path(K, 1, n);
    sol.drift = detail::zero_path(K, 1, n);
    sol.reflection = detail::zero_path(K, 1, n);
    sol.Y.back().row(0) = terminal.transpose();
    Vector next = terminal;
    for (Index k = K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        for (Index x = 0; x < n; ++x) {
            const double cont = continuation(P, x, next.data(), n);
            sol.Y[ks](0, x) = barrier[ks][static_cast<std::size_t>(x)].clamp(cont);
            sol.reflection[ks](0, x) = sol.Y[ks](0, x) - cont;
        }
        next = sol.Y[ks].row(0).transpose();
    }
    sol.meta.sweeps = 1;
    return wrap(std::move(sol));
}

Index optimal_stopping_index(const ReflectedSolution& sol, const BarrierProfile& barrier,
                             const std::vector<Index>& states, Index k0, double tol) {
    const Index K = sol.grid.steps;
    require(static_cast<Index>(states.size()) >= K + 1, ErrorKind::DimensionMismatch,
            "state sequence must cover every grid time");
    for (Index k = k0; k <= K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const Index x = states[ks];
        const BarrierLevel& b = barrier[ks][static_cast<std::size_t>(x)];
        if (!b.is_none() && sol.Y[ks](0, x) <= b.value() + tol) return k;
    }
    return K;
}

ReflectedSolution solve_rbsde_scalar(const Generator& gen, const TimeGrid& grid, const ScalarDriverFn& f,
                                     const Vector& source, const BarrierProfile& barrier, const Vector& terminal) {
    const Index n = gen.size();
    require(terminal.size() == n && source.size() == n, ErrorKind::DimensionMismatch,
            "terminal and source need n entries");
    check_profile(barrier, grid.steps, n);
    check_terminal(barrier.back(), terminal);
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    const Index K = grid.steps;
    const double dt = grid.dt;

    BsdeSolution sol;
    sol.grid = grid;
    sol.states = n;
    sol.Y = detail::zero_path(K, 1, n);
    sol.drift = detail::zero_path(K, 1, n);
    sol.reflection = detail::zero_path(K, 1, n);
    sol.Y.back().row(0) = terminal.transpose();
    Vector next = terminal;
    for (Index k = K - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        for (Index x = 0; x < n; ++x) {
            const double cont = continuation(P, x, next.data(), n);
            const double rhs = cont + dt * source(x);
            const auto fv = [&](double y) { return f.value(x, y); };
            const auto fd = [&](double y) { return f.slope(x, y); };
            const auto r = detail::solve_row(rhs, dt, fv, fd, 0.0, BarrierLevel::none());
            ++sol.meta.root_solves;
            sol.meta.max_root_iterations = std::max(sol.meta.max_root_iterations, r.iterations);
            sol.Y[ks](0, x) = barrier[ks][static_cast<std::size_t>(x)].clamp(r.root);
            sol.drift[ks](0, x) = dt * f.value(x, r.root) + dt * source(x);
            sol.reflection[ks](0, x) = sol.Y[ks](0, x) - r.root;
        }
        next = sol.Y[ks].row(0).transpose();
    }
    sol.meta.sweeps = 1;
    return wrap(std::move(sol));
}

ReflectedSolution solve_oblique_iterative(const Generator& gen, const TimeGrid& grid, const DriverSystem& drv,
                                          const BarrierSystem& bar, const PathEnvelope& env,
                                          const PicardOptions& opts) {
    require(drv.states() == gen.size() && bar.states() == gen.size() && bar.modes() == drv.modes(),
            ErrorKind::DimensionMismatch, "generator, driver and barrier dimensions differ");
    const NoLoopReport loop = check_no_loop(bar);
    require(loop.ok, ErrorKind::NoLoopViolation, "barrier admits a zero-cost switching loop");
    check_terminal_domination(drv, bar);
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;

    detail::PicardProblem pb;
    pb.kernel = &P;
    pb.grid = grid;
    pb.drv = &drv;
    pb.bar = &bar;
    pb.reflect = true;
    pb.terminal = drv.xi();
    pb.start = opts.start ? *opts.start : env.lower;
    pb.upper = opts.start ? nullptr : &env.upper;
    pb.opts = opts;
    return wrap(detail::run_picard(pb));
}

std::vector<ReflectedSolution> solve_oblique_penalized(const Generator& gen, const TimeGrid& grid,
                                                       const DriverSystem& drv, const BarrierSystem& bar,
                                                       const PathEnvelope& env, const std::vector<double>& levels,
                                                       const PicardOptions& opts) {
    require(drv.states() == gen.size() && bar.states() == gen.size() && bar.modes() == drv.modes(),
            ErrorKind::DimensionMismatch, "generator, driver and barrier dimensions differ");
    require(!levels.empty(), ErrorKind::InvalidArgument, "need at least one penalty level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        require(std::isfinite(levels[i]) && levels[i] >= 0.0, ErrorKind::InvalidArgument,
                "penalty levels must be finite and >= 0");
        require(i == 0 || levels[i] > levels[i - 1], ErrorKind::InvalidArgument,
                "penalty levels must be strictly increasing");
    }
    grid.check_resolution(gen);
    const Matrix P = transition_step(gen, grid.dt).matrix;
    const double slack = 1e-9 * std::max(1.0, detail::solution_scale(env));

    std::vector<ReflectedSolution> out;
    for (double level : levels) {
        detail::PicardProblem pb;
        pb.kernel = &P;
        pb.grid = grid;
        pb.drv = &drv;
        pb.bar = &bar;
        pb.penalty = level;
        pb.terminal = drv.xi();
        // The previous level is a subsolution for the next one.
        pb.start = out.empty() ? (opts.start ? *opts.start : env.lower) : out.back().Y;
        pb.upper = opts.start ? nullptr : &env.upper;
        pb.opts = opts;
        ReflectedSolution sol = wrap(detail::run_picard(pb));
        sol.penalty_level = level;
        if (!out.empty())
            for (std::size_t k = 0; k < sol.Y.size(); ++k)
                if ((sol.Y[k].array() < out.back().Y[k].array() - slack).any())
                    fail(ErrorKind::MonotonicityBroken, "penalized solution decreased in the penalty level");
        out.push_back(std::move(sol));
    }
    return out;
}

double complementarity_residual(const ReflectedSolution& sol, const BarrierSystem& bar) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.Y.size(); ++k)
        for (Index x = 0; x < sol.states; ++x)
            for (Index j = 0; j < sol.modes(); ++j) {
                const double dk = sol.reflection[k](j, x);
                if (dk == 0.0) continue;
                const BarrierLevel h = bar.level(j, x, sol.Y[k].col(x));
                if (h.is_none()) return std::numeric_limits<double>::infinity();
                worst = std::max(worst, dk * (sol.Y[k](j, x) - h.value()));
            }
    return worst;
}

double domination_residual(const BsdeSolution& sol, const BarrierSystem& bar) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.Y.size(); ++k)
        for (Index x = 0; x < sol.states; ++x)
            for (Index j = 0; j < sol.modes(); ++j) {
                const BarrierLevel h = bar.level(j, x, sol.Y[k].col(x));
                if (!h.is_none()) worst = std::max(worst, h.value() - sol.Y[k](j, x));
            }
    return worst;
}

std::int64_t off_contact_pushes(const ReflectedSolution& sol, const BarrierSystem& bar, double tol) {
    std::int64_t count = 0;
    for (std::size_t k = 0; k < sol.Y.size(); ++k)
        for (Index x = 0; x < sol.states; ++x)
            for (Index j = 0; j < sol.modes(); ++j) {
                if (sol.reflection[k](j, x) <= 0.0) continue;
                const BarrierLevel h = bar.level(j, x, sol.Y[k].col(x));
                if (h.slack(sol.Y[k](j, x)) >= tol) ++count;
            }
    return count;
}

double min_reflection_increment(const ReflectedSolution& sol) {
    double m = 0.0;
    for (const auto& f : sol.reflection) m = std::min(m, f.minCoeff());
    return m;
}

}  // namespace oswitch
