#include "oswitch/qvi_elliptic.hpp"

#include "oswitch/bsde_dp.hpp"
#include "oswitch/errors.hpp"
#include "oswitch/reflection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oswitch {

namespace {

constexpr int kStay = -1;
constexpr double kSwitchMargin = 1e-12;

// Damped Newton on F(v) = 0; returns the final sup-norm residual.
template <typename Residual, typename Jacobian>
double newton(Vector& v, Residual&& F, Jacobian&& J, double scale, int max_it) {
    Vector r = F(v);
    double norm = r.cwiseAbs().maxCoeff();
    for (int it = 0; it < max_it && norm > 1e-14 * scale; ++it) {
        Eigen::PartialPivLU<Matrix> lu(J(v));
        const Vector delta = lu.solve(-r);
        if (!delta.allFinite()) break;
        double t = 1.0;
        Vector trial = v + delta;
        Vector rt = F(trial);
        double nt = rt.cwiseAbs().maxCoeff();
        while (nt > (1.0 - 1e-4 * t) * norm && t > 1e-8) {
            t *= 0.5;
            trial = v + t * delta;
            rt = F(trial);
            nt = rt.cwiseAbs().maxCoeff();
        }
        if (nt >= norm) break;
        v = trial;
        r = rt;
        norm = nt;
        if (t * delta.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + v.cwiseAbs().maxCoeff())) break;
    }
    return norm;
}

double stay_residual(const Matrix& A, const DriverSystem& drv, const ModeField& u, Index j, Index x) {
    return A.row(x).dot(u.row(j)) - drv.value(j, x, u.col(x)) - drv.mu()(j, x);
}

const BarrierSystem::Edge& edge_to(const BarrierSystem& bar, Index j, Index i) {
    for (const auto& e : bar.edges(j))
        if (e.target == i) return e;
    fail(ErrorKind::InvalidAction, "policy target not in A_j");
}

double switch_residual(const BarrierSystem& bar, const ModeField& u, Index j, Index x, const BarrierSystem::Edge& e) {
    return u(j, x) - bar.edge_value(e, x, u(e.target, x));
}

ModeField to_field(const Vector& v, Index N, Index n) {
    ModeField u(N, n);
    for (Index j = 0; j < N; ++j) u.row(j) = v.segment(j * n, n).transpose();
    return u;
}

Vector to_vector(const ModeField& u) {
    const Index N = u.rows(), n = u.cols();
    Vector v(N * n);
    for (Index j = 0; j < N; ++j) v.segment(j * n, n) = u.row(j).transpose();
    return v;
}

// Full-system Newton for a fixed switching policy.
double solve_policy_system(const Matrix& A, const DriverSystem& drv, const BarrierSystem& bar,
                           const Eigen::MatrixXi& policy, ModeField& u, double scale, int max_it) {
    const Index N = u.rows(), n = u.cols();
    auto F = [&](const Vector& v) {
        const ModeField w = to_field(v, N, n);
        Vector r(N * n);
        for (Index j = 0; j < N; ++j)
            for (Index x = 0; x < n; ++x)
                r(j * n + x) = policy(j, x) == kStay ? stay_residual(A, drv, w, j, x)
                                                     : switch_residual(bar, w, j, x, edge_to(bar, j, policy(j, x)));
        return r;
    };
    auto J = [&](const Vector& v) {
        const ModeField w = to_field(v, N, n);
        Matrix jac = Matrix::Zero(N * n, N * n);
        for (Index j = 0; j < N; ++j)
            for (Index x = 0; x < n; ++x) {
                const Index row = j * n + x;
                if (policy(j, x) == kStay) {
                    jac.block(row, j * n, 1, n) = A.row(x);
                    for (Index i = 0; i < N; ++i) jac(row, i * n + x) -= drv.slope(j, i, x, w.col(x));
                } else {
                    const auto& e = edge_to(bar, j, policy(j, x));
                    jac(row, row) += 1.0;
                    if (w(e.target, x) < e.cap) jac(row, e.target * n + x) -= 1.0;
                }
            }
        return jac;
    };
    Vector v = to_vector(u);
    const double res = newton(v, F, J, scale, max_it);
    u = to_field(v, N, n);
    return res;
}

// One Picard sweep target: solve mode j with other modes frozen at `frozen`
// and an optional penalty against H^j(x, frozen).
double solve_mode(const Matrix& A, const DriverSystem& drv, const BarrierSystem* bar, double penalty,
                  const ModeField& frozen, Index j, Vector& v, double scale, int max_it) {
    const Index n = v.size();
    Vector h = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    bool any = false;
    if (bar != nullptr && penalty > 0.0)
        for (Index x = 0; x < n; ++x) {
            const BarrierLevel lv = bar->level(j, x, frozen.col(x));
            if (!lv.is_none()) { h(x) = lv.value(); any = true; }
        }
    const bool penalised = any && penalty > 0.0;
    Vector z(drv.modes());
    auto F = [&](const Vector& w) {
        Vector r(n);
        for (Index x = 0; x < n; ++x) {
            z = frozen.col(x);
            z(j) = w(x);
            r(x) = A.row(x).dot(w) - drv.value(j, x, z) - drv.mu()(j, x);
            if (penalised) r(x) -= penalty * std::max(h(x) - w(x), 0.0);
        }
        return r;
    };
    auto J = [&](const Vector& w) {
        Matrix jac = A;
        for (Index x = 0; x < n; ++x) {
            z = frozen.col(x);
            z(j) = w(x);
            jac(x, x) -= drv.slope(j, j, x, z);
            if (penalised && w(x) < h(x)) jac(x, x) += penalty;
        }
        return jac;
    };
    return newton(v, F, J, scale, max_it);
}

struct PicardRun {
    ModeField u;
    int sweeps = 0;
    std::int64_t checks = 0, violations = 0;
};

PicardRun elliptic_picard(const Matrix& A, const DriverSystem& drv, const BarrierSystem* bar, double penalty,
                          ModeField start, double scale, const QviOptions& opts) {
    const Index N = drv.modes();
    const bool coupled = drv.kind() != DriverKind::Decoupled || (bar != nullptr && penalty > 0.0 && !bar->all_empty());
    PicardRun run;
    ModeField u = std::move(start);
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        ModeField next = u;
        for (Index j = 0; j < N; ++j) {
            Vector v = u.row(j).transpose();
            const double res = solve_mode(A, drv, bar, penalty, u, j, v, scale, opts.max_newton);
            if (res > 1e-9 * scale)
                fail(ErrorKind::NoConvergence, "per-mode Newton stalled at residual " + std::to_string(res));
            next.row(j) = v.transpose();
        }
        const ModeField diff = next - u;
        ++run.checks;
        if (-diff.minCoeff() > 1e-12 * scale) {
            ++run.violations;
            if (opts.enforce_monotone)
                fail(ErrorKind::MonotonicityBroken, "elliptic Picard iterate decreased by " +
                                                        std::to_string(-diff.minCoeff()));
        }
        u = std::move(next);
        run.sweeps = sweep;
        if (!coupled || diff.cwiseAbs().maxCoeff() < opts.tol) {
            run.u = std::move(u);
            return run;
        }
    }
    fail(ErrorKind::NoConvergence, "elliptic Picard iteration hit the sweep cap");
}

void check_dims(const Generator& gen, const DriverSystem& drv, const BarrierSystem* bar, const Envelope& env) {
    require(drv.states() == gen.size(), ErrorKind::DimensionMismatch, "driver and generator sizes differ");
    require(bar == nullptr || (bar->states() == gen.size() && bar->modes() == drv.modes()),
            ErrorKind::DimensionMismatch, "barrier dimensions differ");
    require(env.lower.rows() == drv.modes() && env.lower.cols() == gen.size() && env.upper.rows() == drv.modes() &&
                env.upper.cols() == gen.size(),
            ErrorKind::DimensionMismatch, "envelope must be N x n");
}

// Residual argmin per row; switch away from the current branch only on a
// strict improvement.
Eigen::MatrixXi improve_policy(const Matrix& A, const DriverSystem& drv, const BarrierSystem& bar, const ModeField& u,
                               const Eigen::MatrixXi& current) {
    Eigen::MatrixXi next = current;
    for (Index j = 0; j < u.rows(); ++j)
        for (Index x = 0; x < u.cols(); ++x) {
            const double r_stay = stay_residual(A, drv, u, j, x);
            double best = r_stay;
            int choice = kStay;
            double r_cur = r_stay;
            for (const auto& e : bar.edges(j)) {
                const double r = switch_residual(bar, u, j, x, e);
                if (r < best) { best = r; choice = static_cast<int>(e.target); }
                if (current(j, x) == e.target) r_cur = r;
            }
            if (choice != current(j, x) && best < r_cur - kSwitchMargin) next(j, x) = choice;
        }
    return next;
}

void break_cycles(Eigen::MatrixXi& policy) {
    const Index N = policy.rows();
    for (Index x = 0; x < policy.cols(); ++x) {
        bool again = true;
        while (again) {
            again = false;
            for (Index j = 0; j < N && !again; ++j) {
                std::vector<Index> chain{j};
                Index cur = j;
                while (policy(cur, x) != kStay) {
                    cur = policy(cur, x);
                    const auto hit = std::find(chain.begin(), chain.end(), cur);
                    if (hit != chain.end()) {
                        for (auto it = hit; it != chain.end(); ++it) policy(*it, x) = kStay;
                        again = true;
                        break;
                    }
                    chain.push_back(cur);
                }
            }
        }
    }
}

}  // namespace

double envelope_scale(const Envelope& env) {
    return std::max(1.0, env.upper.cwiseAbs().maxCoeff() + env.lower.cwiseAbs().maxCoeff());
}

PdeSolution solve_pde_system(const Generator& gen, const DriverSystem& drv, const Envelope& env,
                             const QviOptions& opts) {
    check_dims(gen, drv, nullptr, env);
    const Matrix A = -gen.rates();
    const double scale = envelope_scale(env);
    PicardRun run = elliptic_picard(A, drv, nullptr, 0.0, env.lower, scale, opts);

    // Polish on the full coupled system; the Picard limit is already within
    // tol, this only removes the off-diagonal lag.
    const Eigen::MatrixXi stay = Eigen::MatrixXi::Constant(drv.modes(), gen.size(), kStay);
    const BarrierSystem none = BarrierSystem::none(drv.modes(), gen.size());
    PdeSolution out;
    out.residual = solve_policy_system(A, drv, none, stay, run.u, scale, opts.max_newton);
    out.u = std::move(run.u);
    out.sweeps = run.sweeps;
    out.monotone_checks = run.checks;
    out.monotone_violations = run.violations;
    if (out.residual > 1e-10 * scale)
        fail(ErrorKind::NoConvergence, "PDE residual " + std::to_string(out.residual) + " above tolerance");
    return out;
}

QviSolution solve_qvi_policy_iteration(const Generator& gen, const DriverSystem& drv, const BarrierSystem& bar,
                                       const Envelope& env, PolicyStart start, const QviOptions& opts) {
    check_dims(gen, drv, &bar, env);
    require(check_no_loop(bar).ok, ErrorKind::NoLoopViolation, "barrier admits a zero-cost switching loop");
    const Matrix A = -gen.rates();
    const Index N = drv.modes(), n = gen.size();
    const double scale = envelope_scale(env);

    ModeField u = start == PolicyStart::Lower ? env.lower : env.upper;
    Eigen::MatrixXi policy = improve_policy(A, drv, bar, u, Eigen::MatrixXi::Constant(N, n, kStay));
    break_cycles(policy);
    std::vector<Eigen::MatrixXi> seen;

    QviSolution sol;
    for (int it = 1;; ++it) {
        if (it > opts.max_policy_iterations)
            fail(ErrorKind::NoConvergence, "policy iteration hit its cap");
        const double res = solve_policy_system(A, drv, bar, policy, u, scale, opts.max_newton);
        if (res > 1e-9 * scale)
            fail(ErrorKind::NoConvergence, "Newton stalled at residual " + std::to_string(res));
        Eigen::MatrixXi next = improve_policy(A, drv, bar, u, policy);
        break_cycles(next);
        sol.iterations = it;
        if (next == policy) break;
        for (const auto& old : seen)
            if (old == next) fail(ErrorKind::MaskCycle, "policy iteration revisited an earlier contact set");
        seen.push_back(policy);
        policy = std::move(next);
    }

    sol.u = u;
    sol.policy = policy;
    sol.scale = scale;
    sol.nu = ModeField::Zero(N, n);
    sol.raw_nu_min = 0.0;
    bool any_active = false;
    for (Index j = 0; j < N; ++j)
        for (Index x = 0; x < n; ++x) {
            const double r_stay = stay_residual(A, drv, u, j, x);
            const BarrierLevel h = bar.level(j, x, u.col(x));
            if (!h.is_none()) sol.domination = std::max(sol.domination, h.value() - u(j, x));
            if (policy(j, x) == kStay) {
                sol.row_residual = std::max(sol.row_residual, std::abs(r_stay));
                continue;
            }
            const double r_sw = switch_residual(bar, u, j, x, edge_to(bar, j, policy(j, x)));
            sol.row_residual = std::max(sol.row_residual, std::abs(r_sw));
            sol.raw_nu_min = any_active ? std::min(sol.raw_nu_min, r_stay) : r_stay;
            any_active = true;
            sol.nu(j, x) = std::max(r_stay, 0.0);
            sol.complementarity = std::max(sol.complementarity, sol.nu(j, x) * (u(j, x) - h.value()));
        }
    if (!any_active) sol.raw_nu_min = 0.0;

    if (sol.row_residual > 1e-9 * scale)
        fail(ErrorKind::InvariantViolated, "QVI row residual " + std::to_string(sol.row_residual));
    if (sol.domination > 1e-9 * scale)
        fail(ErrorKind::InvariantViolated, "u falls below its obstacle by " + std::to_string(sol.domination));
    if (sol.raw_nu_min < -1e-9 * scale)
        fail(ErrorKind::InvariantViolated, "reflection density negative: " + std::to_string(sol.raw_nu_min));
    if (sol.complementarity > 1e-8 * scale)
        fail(ErrorKind::InvariantViolated, "complementarity residual " + std::to_string(sol.complementarity));
    return sol;
}

std::vector<PenalizedLevel> solve_qvi_penalized(const Generator& gen, const DriverSystem& drv,
                                                const BarrierSystem& bar, const Envelope& env,
                                                const std::vector<double>& levels, const QviOptions& opts) {
    check_dims(gen, drv, &bar, env);
    require(!levels.empty(), ErrorKind::InvalidArgument, "need at least one penalty level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        require(std::isfinite(levels[i]) && levels[i] >= 0.0, ErrorKind::InvalidArgument,
                "penalty levels must be finite and >= 0");
        require(i == 0 || levels[i] > levels[i - 1], ErrorKind::InvalidArgument,
                "penalty levels must be strictly increasing");
    }
    const Matrix A = -gen.rates();
    const double scale = envelope_scale(env);
    std::vector<PenalizedLevel> out;
    for (double level : levels) {
        ModeField start = out.empty() ? env.lower : out.back().u;
        PicardRun run = elliptic_picard(A, drv, &bar, level, std::move(start), scale, opts);
        if (!out.empty() && (run.u.array() < out.back().u.array() - 1e-9 * scale).any())
            fail(ErrorKind::MonotonicityBroken, "penalized solution decreased in the penalty level");
        out.push_back({level, std::move(run.u), run.sweeps});
    }
    return out;
}

std::vector<FkResult> feynman_kac_check(const Generator& gen, const QviSolution& sol, const DriverSystem& drv,
                                        Index x0, std::int64_t paths, std::uint64_t seed) {
    require(paths >= 2, ErrorKind::InvalidArgument, "Feynman-Kac check needs at least two paths");
    require(x0 >= 0 && x0 < gen.size(), ErrorKind::InvalidArgument, "start state out of range");
    const Index N = drv.modes(), n = gen.size();
    require(sol.u.rows() == N && sol.u.cols() == n, ErrorKind::DimensionMismatch, "solution must be N x n");

    std::vector<MeasureDensity> density(static_cast<std::size_t>(N));
    for (Index j = 0; j < N; ++j) {
        Vector d(n);
        for (Index x = 0; x < n; ++x) d(x) = drv.value(j, x, sol.u.col(x)) + drv.mu()(j, x) + sol.nu(j, x);
        density[static_cast<std::size_t>(j)] = MeasureDensity{d};
    }
    const double cap = negligible_survival_horizon(gen);
    const auto samples = parallel_samples<Vector>(paths, [&](std::int64_t i) {
        const Path path = sample_path(gen, x0, path_seed(seed, static_cast<std::uint64_t>(i)), cap);
        Vector v(N);
        for (Index j = 0; j < N; ++j) v(j) = path_functional(path, density[static_cast<std::size_t>(j)], 0.0);
        return v;
    });

    std::vector<FkResult> out;
    std::vector<double> column(samples.size());
    for (Index j = 0; j < N; ++j) {
        for (std::size_t i = 0; i < samples.size(); ++i) column[i] = samples[i](j);
        const McStats st = summarize(column);
        FkResult r{j, st.mean, st.std_error, sol.u(j, x0), 0.0};
        const double diff = std::abs(r.estimate - r.target);
        r.z = st.std_error > 0.0 ? diff / st.std_error
                                 : (diff <= 1e-12 * std::max(1.0, std::abs(r.target)) ? 0.0
                                                                                       : std::numeric_limits<double>::infinity());
        out.push_back(r);
    }
    return out;
}

HorizonReport elliptic_from_horizon(const Generator& gen, double dt, const std::vector<Index>& steps,
                                    const DriverSystem& drv, const BarrierSystem& bar) {
    require(!steps.empty(), ErrorKind::InvalidArgument, "need at least one horizon");
    for (std::size_t i = 0; i < steps.size(); ++i)
        require(steps[i] >= 0 && (i == 0 || steps[i] > steps[i - 1]), ErrorKind::InvalidArgument,
                "horizons must be nonnegative and increasing");
    const Generator step_gen = gen.time_step_generator(dt);
    const Envelope env = build_envelope(step_gen, drv, bar);
    const QviSolution ref = solve_qvi_policy_iteration(step_gen, drv, bar, env);
    const DriverSystem truncated = drv.with_terminal(env.lower);
    const Matrix P = transition_step(gen, dt).matrix;
    const double floor = 1e-11 * envelope_scale(env);

    HorizonReport report;
    report.reference = ref.u;
    Vector survival = Vector::Ones(gen.size());
    Index prev_steps = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        HorizonRow row;
        row.steps = steps[i];
        row.horizon = dt * static_cast<double>(steps[i]);
        ModeField y0 = env.lower;
        if (steps[i] > 0) {
            const TimeGrid grid = TimeGrid::make(dt, steps[i]);
            const PathEnvelope penv = build_path_envelope(gen, grid, truncated, bar);
            y0 = solve_oblique_iterative(gen, grid, truncated, bar, penv).Y.front();
        }
        row.gap = (y0 - ref.u).cwiseAbs().maxCoeff();
        survival = Vector::Ones(gen.size());
        for (Index k = prev_steps; k < steps[i]; ++k) survival = P * survival;
        row.survival = survival.maxCoeff();
        if (i > 0) {
            const double prev_gap = report.rows.back().gap;
            if (prev_gap > floor && row.gap > floor) {
                row.ratio = row.gap / prev_gap;
                row.ratio_checked = true;
                row.ok = row.ratio <= 1.1 * row.survival;
            }
        }
        report.ok = report.ok && row.ok;
        report.rows.push_back(row);
        prev_steps = steps[i];
    }
    return report;
}

TvBound tv_bound_check(const Generator& gen, const QviSolution& sol, const DriverSystem& drv, const Envelope& env) {
    TvBound b;
    b.applicable = gen.has_dual_markov();
    const Matrix A = -gen.rates();
    double f_u = 0.0, f_up = 0.0, mu = 0.0, beta = 0.0;
    for (Index j = 0; j < drv.modes(); ++j)
        for (Index x = 0; x < gen.size(); ++x) {
            const double fu = drv.value(j, x, sol.u.col(x));
            const double fup = drv.value(j, x, env.upper.col(x));
            f_u += std::abs(fu);
            f_up += std::abs(fup);
            mu += std::abs(drv.mu()(j, x));
            beta += std::abs(A.row(x).dot(env.upper.row(j)) - fup - drv.mu()(j, x));
        }
    b.lhs = sol.nu.cwiseAbs().sum();
    b.rhs = f_u + f_up + 2.0 * mu + beta;
    b.ok = !b.applicable || b.lhs <= b.rhs * (1.0 + 1e-12) + 1e-12;
    return b;
}

}  // namespace oswitch
