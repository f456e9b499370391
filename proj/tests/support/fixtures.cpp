#include "fixtures.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace fixtures {

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

ModeField random_field(Rng& rng, Index rows, Index cols, double lo, double hi) {
    ModeField f(rows, cols);
    for (Index j = 0; j < rows; ++j)
        for (Index x = 0; x < cols; ++x) f(j, x) = uniform(rng, lo, hi);
    return f;
}

ModeField replicated_terminal(Rng& rng, Index modes, Index n) {
    const Vector t = random_field(rng, 1, n, 0.0, 1.0).row(0).transpose();
    ModeField xi(modes, n);
    for (Index j = 0; j < modes; ++j) xi.row(j) = t.transpose();
    return xi;
}

}  // namespace

Generator single_state(double kappa) {
    Matrix r(1, 1);
    r(0, 0) = -kappa;
    return Generator::from_rates(r);
}

Generator symmetric_walk(double q, double kappa) {
    Matrix r(2, 2);
    r << -(q + kappa), q, q, -(q + kappa);
    return Generator::from_rates(r);
}

Generator random_generator(Rng& rng, Index n, double fill, double rate_max, double kappa_min, double kappa_max) {
    Matrix r = Matrix::Zero(n, n);
    for (Index x = 0; x < n; ++x) {
        for (Index y = 0; y < n; ++y)
            if (x != y && uniform(rng, 0.0, 1.0) < fill) r(x, y) = uniform(rng, 0.0, rate_max);
        r(x, x) = -(r.row(x).sum() + uniform(rng, kappa_min, kappa_max));
    }
    return Generator::from_rates(r);
}

DriverSystem random_decoupled(Rng& rng, Index modes, Index n, double lo, double hi, double mu_max) {
    ModeField psi = random_field(rng, modes, n, lo, hi);
    ModeField mu = random_field(rng, modes, n, 0.0, mu_max);
    return DriverSystem::decoupled(psi, mu, replicated_terminal(rng, modes, n));
}

DriverSystem random_affine(Rng& rng, Index modes, Index n) {
    ModeField psi = random_field(rng, modes, n, -1.0, 3.0);
    std::vector<Matrix> g(static_cast<std::size_t>(n));
    for (auto& G : g) {
        G = Matrix::Zero(modes, modes);
        for (Index j = 0; j < modes; ++j) {
            double off = 0.0;
            for (Index i = 0; i < modes; ++i)
                if (i != j) off += G(j, i) = uniform(rng, 0.0, 0.4);
            G(j, j) = -(off + uniform(rng, 0.1, 0.6));
        }
    }
    ModeField mu = random_field(rng, modes, n, 0.0, 0.3);
    return DriverSystem::affine(psi, g, mu, random_field(rng, modes, n, 0.0, 1.0));
}

DriverSystem random_smooth(Rng& rng, Index modes, Index n) {
    ModeField psi = random_field(rng, modes, n, -1.0, 2.0);
    Vector lambda(modes);
    Matrix alpha = Matrix::Zero(modes, modes);
    for (Index j = 0; j < modes; ++j) {
        lambda(j) = uniform(rng, 0.0, 1.0);
        for (Index i = 0; i < modes; ++i)
            if (i != j) alpha(j, i) = uniform(rng, 0.0, 0.5);
    }
    ModeField mu = random_field(rng, modes, n, 0.0, 0.3);
    return DriverSystem::smooth_coupled(psi, lambda, alpha, mu, random_field(rng, modes, n, 0.0, 1.0));
}

BarrierSystem random_cost_barrier(Rng& rng, Index modes, Index n, Index max_degree, double floor, double spread) {
    std::vector<std::vector<BarrierSystem::Edge>> edges(static_cast<std::size_t>(modes));
    for (Index j = 0; j < modes; ++j) {
        std::vector<Index> others;
        for (Index i = 0; i < modes; ++i)
            if (i != j) others.push_back(i);
        std::shuffle(others.begin(), others.end(), rng);
        const Index cap = std::min<Index>(max_degree, static_cast<Index>(others.size()));
        const Index degree = cap == 0 ? 0 : std::uniform_int_distribution<Index>(1, cap)(rng);
        for (Index d = 0; d < degree; ++d) {
            BarrierSystem::Edge e;
            e.target = others[static_cast<std::size_t>(d)];
            e.cost = Vector(n);
            for (Index x = 0; x < n; ++x) e.cost(x) = uniform(rng, floor, floor + spread);
            edges[static_cast<std::size_t>(j)].push_back(e);
        }
    }
    return BarrierSystem::cost_form(n, edges, floor);
}

BarrierSystem uniform_cost_barrier(Index n, const std::vector<std::vector<Index>>& adjacency, double cost,
                                   double floor) {
    std::vector<std::vector<BarrierSystem::Edge>> edges(adjacency.size());
    for (std::size_t j = 0; j < adjacency.size(); ++j)
        for (Index i : adjacency[j]) edges[j].push_back({i, Vector::Constant(n, cost)});
    return BarrierSystem::cost_form(n, edges, floor);
}

TwoMode two_mode() {
    ModeField psi(2, 1);
    psi << 3.0, 1.0;
    return {single_state(1.0), DriverSystem::decoupled(psi), uniform_cost_barrier(1, {{1}, {0}}, 1.0)};
}

Matrix expm(const Matrix& rates, double dt) {
    const Matrix a = rates * dt;
    return a.exp();
}

McEstimate mc_occupation(const Generator& gen, Index x0, const Vector& g, std::int64_t paths, std::uint64_t seed) {
    const Matrix& L = gen.rates();
    const Index n = gen.size();
    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double sum = 0.0, sum2 = 0.0;
    for (std::int64_t p = 0; p < paths; ++p) {
        Index x = x0;
        double acc = 0.0;
        for (int events = 0; events < 1000000; ++events) {
            const double q = -L(x, x);
            acc += g(x) * std::exponential_distribution<double>(q)(rng);
            double r = u01(rng) * q;
            Index next = -1;
            for (Index y = 0; y < n; ++y) {
                if (y == x) continue;
                if (r < L(x, y)) {
                    next = y;
                    break;
                }
                r -= L(x, y);
            }
            if (next < 0) break;  // remaining mass is the killing rate
            x = next;
        }
        sum += acc;
        sum2 += acc * acc;
    }
    const double m = sum / static_cast<double>(paths);
    const double var = (sum2 - static_cast<double>(paths) * m * m) / static_cast<double>(paths - 1);
    return {m, std::sqrt(std::max(var, 0.0) / static_cast<double>(paths))};
}

namespace {

// Damped Newton for F(z) = 0 with a dense Jacobian.
Vector newton(const std::function<Vector(const Vector&)>& F, const std::function<Matrix(const Vector&)>& J, Vector z,
              double tol) {
    for (int it = 0; it < 200; ++it) {
        const Vector r = F(z);
        const double norm = r.cwiseAbs().maxCoeff();
        if (norm < tol) return z;
        const Vector step = J(z).partialPivLu().solve(r);
        double t = 1.0;
        Vector trial = z - step;
        while (F(trial).cwiseAbs().maxCoeff() > (1.0 - 1e-4 * t) * norm && t > 1e-10) {
            t *= 0.5;
            trial = z - t * step;
        }
        z = trial;
    }
    return z;
}

}  // namespace

ModeField newton_pde(const Generator& gen, const DriverSystem& drv, double tol) {
    const Index n = gen.size(), N = drv.modes();
    const Matrix A = -gen.rates();
    auto unpack = [&](const Vector& z) {
        ModeField u(N, n);
        for (Index j = 0; j < N; ++j) u.row(j) = z.segment(j * n, n).transpose();
        return u;
    };
    auto F = [&](const Vector& z) {
        const ModeField u = unpack(z);
        Vector r(N * n);
        for (Index j = 0; j < N; ++j)
            for (Index x = 0; x < n; ++x)
                r(j * n + x) = A.row(x).dot(u.row(j)) - drv.value(j, x, u.col(x)) - drv.mu()(j, x);
        return r;
    };
    auto Jac = [&](const Vector& z) {
        const ModeField u = unpack(z);
        Matrix m = Matrix::Zero(N * n, N * n);
        for (Index j = 0; j < N; ++j)
            for (Index x = 0; x < n; ++x) {
                for (Index y = 0; y < n; ++y) m(j * n + x, j * n + y) += A(x, y);
                for (Index i = 0; i < N; ++i) m(j * n + x, i * n + x) -= drv.slope(j, i, x, u.col(x));
            }
        return m;
    };
    return unpack(newton(F, Jac, Vector::Zero(N * n), tol));
}

FieldPath newton_bsde(const Generator& gen, const oswitch::TimeGrid& grid, const DriverSystem& drv) {
    const Index n = gen.size(), N = drv.modes(), K = grid.steps;
    const double dt = grid.dt;
    const Matrix P = expm(gen.rates(), dt);
    FieldPath Y(static_cast<std::size_t>(K + 1));
    Y[static_cast<std::size_t>(K)] = drv.xi();
    for (Index k = K - 1; k >= 0; --k) {
        const ModeField next = Y[static_cast<std::size_t>(k + 1)];
        ModeField cur(N, n);
        for (Index x = 0; x < n; ++x) {
            Vector c(N);
            for (Index j = 0; j < N; ++j) c(j) = P.row(x).dot(next.row(j)) + dt * drv.mu()(j, x);
            auto F = [&](const Vector& y) {
                Vector r(N);
                for (Index j = 0; j < N; ++j) r(j) = y(j) - c(j) - dt * drv.value(j, x, y);
                return r;
            };
            auto Jac = [&](const Vector& y) {
                Matrix m = Matrix::Identity(N, N);
                for (Index j = 0; j < N; ++j)
                    for (Index i = 0; i < N; ++i) m(j, i) -= dt * drv.slope(j, i, x, y);
                return m;
            };
            cur.col(x) = newton(F, Jac, c, 1e-14);
        }
        Y[static_cast<std::size_t>(k)] = cur;
    }
    return Y;
}

ModeField neumann_affine(const Generator& gen, const DriverSystem& drv, int terms) {
    const Index n = gen.size(), N = drv.modes();
    const Matrix L = gen.rates();
    Matrix A = Matrix::Zero(N * n, N * n), B = Matrix::Zero(N * n, N * n);
    Vector b(N * n);
    for (Index j = 0; j < N; ++j)
        for (Index x = 0; x < n; ++x) {
            const Matrix& G = drv.coupling()[static_cast<std::size_t>(x)];
            for (Index y = 0; y < n; ++y) A(j * n + x, j * n + y) = -L(x, y);
            A(j * n + x, j * n + x) -= G(j, j);
            for (Index i = 0; i < N; ++i)
                if (i != j) B(j * n + x, i * n + x) = G(j, i);
            b(j * n + x) = drv.psi()(j, x) + drv.mu()(j, x);
        }
    const auto lu = A.partialPivLu();
    Vector term = lu.solve(b), sum = term;
    for (int m = 1; m < terms; ++m) {
        term = lu.solve(B * term);
        sum += term;
    }
    ModeField u(N, n);
    for (Index j = 0; j < N; ++j) u.row(j) = sum.segment(j * n, n).transpose();
    return u;
}

Vector enumerate_single_state_switching(double survival, double dt, const Vector& psi, const Vector& mu,
                                        const BarrierSystem& bar, Index steps, double terminal) {
    const Index N = psi.size();
    const double inf = std::numeric_limits<double>::infinity();
    Matrix d = Matrix::Constant(N, N, inf);
    for (Index j = 0; j < N; ++j) {
        d(j, j) = 0.0;
        for (const auto& e : bar.edges(j)) d(j, e.target) = std::min(d(j, e.target), e.cost(0));
    }
    for (Index m = 0; m < N; ++m)
        for (Index a = 0; a < N; ++a)
            for (Index b = 0; b < N; ++b) d(a, b) = std::min(d(a, b), d(a, m) + d(m, b));

    Vector best = Vector::Constant(N, -inf);
    std::vector<Index> w(static_cast<std::size_t>(steps), 0);
    while (true) {
        for (Index j0 = 0; j0 < N; ++j0) {
            double total = 0.0, disc = 1.0;
            Index prev = j0;
            for (Index k = 0; k < steps; ++k) {
                const Index m = w[static_cast<std::size_t>(k)];
                total += disc * (dt * (psi(m) + mu(m)) - d(prev, m));
                disc *= survival;
                prev = m;
            }
            total += disc * terminal;
            best(j0) = std::max(best(j0), total);
        }
        Index pos = 0;
        while (pos < steps && ++w[static_cast<std::size_t>(pos)] == N) w[static_cast<std::size_t>(pos++)] = 0;
        if (pos == steps) break;
    }
    return best;
}

double max_abs_diff(const ModeField& a, const ModeField& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace fixtures
