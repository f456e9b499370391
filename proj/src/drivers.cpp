#include "oswitch/drivers.hpp"

#include "oswitch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace oswitch {

namespace {

void sort_edges(std::vector<std::vector<BarrierSystem::Edge>>& edges) {
    for (auto& list : edges)
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
}

}  // namespace

std::string to_string(DriverKind kind) {
    switch (kind) {
        case DriverKind::Decoupled: return "decoupled";
        case DriverKind::Affine: return "affine";
        case DriverKind::SmoothCoupled: return "smooth-coupled";
    }
    return "unknown";
}

void DriverSystem::finish(ModeField mu, ModeField xi) {
    const Index N = psi_.rows();
    const Index n = psi_.cols();
    require(N > 0 && n > 0, ErrorKind::InvalidArgument, "driver needs at least one mode and one state");
    require(psi_.allFinite(), ErrorKind::InvalidArgument, "psi has non-finite entries");
    mu_ = mu.size() == 0 ? ModeField::Zero(N, n) : std::move(mu);
    xi_ = xi.size() == 0 ? ModeField::Zero(N, n) : std::move(xi);
    require(mu_.rows() == N && mu_.cols() == n, ErrorKind::DimensionMismatch, "mu must be N x n");
    require(xi_.rows() == N && xi_.cols() == n, ErrorKind::DimensionMismatch, "xi must be N x n");
    require(mu_.allFinite() && xi_.allFinite(), ErrorKind::InvalidArgument, "mu/xi have non-finite entries");
}

DriverSystem DriverSystem::decoupled(ModeField psi, ModeField mu, ModeField xi) {
    DriverSystem d;
    d.kind_ = DriverKind::Decoupled;
    d.psi_ = std::move(psi);
    d.finish(std::move(mu), std::move(xi));
    return d;
}

DriverSystem DriverSystem::affine(ModeField psi, std::vector<Matrix> coupling, ModeField mu, ModeField xi,
                                  StructureCheck check) {
    DriverSystem d;
    d.kind_ = DriverKind::Affine;
    d.psi_ = std::move(psi);
    d.finish(std::move(mu), std::move(xi));
    const Index N = d.modes();
    require(static_cast<Index>(coupling.size()) == d.states(), ErrorKind::DimensionMismatch,
            "affine coupling needs one N x N matrix per state");
    double bound = 0.0;
    for (std::size_t x = 0; x < coupling.size(); ++x) {
        const Matrix& g = coupling[x];
        require(g.rows() == N && g.cols() == N, ErrorKind::DimensionMismatch, "coupling matrix must be N x N");
        require(g.allFinite(), ErrorKind::InvalidCoupling, "coupling has non-finite entries");
        for (Index j = 0; j < N; ++j) {
            double off = 0.0;
            for (Index i = 0; i < N; ++i) {
                if (i == j) continue;
                if (check == StructureCheck::Enforce && g(j, i) < 0.0)
                    fail(ErrorKind::InvalidCoupling, "G_{ji} < 0 off the diagonal");
                off += g(j, i);
            }
            if (check == StructureCheck::Enforce && g(j, j) > 0.0)
                fail(ErrorKind::InvalidCoupling, "G_{jj} > 0");
            const double diag = -g(j, j);
            const double ratio = off <= 0.0 ? 0.0 : (diag > 0.0 ? off / diag : std::numeric_limits<double>::infinity());
            bound = std::max(bound, ratio);
        }
    }
    if (check == StructureCheck::Enforce && bound > 1.0 + 1e-12)
        fail(ErrorKind::InvalidCoupling, "off-diagonal coupling exceeds the diagonal (contraction bound " +
                                             std::to_string(bound) + ")");
    d.coupling_ = std::move(coupling);
    d.contraction_bound_ = bound;
    return d;
}

DriverSystem DriverSystem::smooth_coupled(ModeField psi, Vector lambda, Matrix alpha, ModeField mu, ModeField xi) {
    DriverSystem d;
    d.kind_ = DriverKind::SmoothCoupled;
    d.psi_ = std::move(psi);
    d.finish(std::move(mu), std::move(xi));
    const Index N = d.modes();
    require(lambda.size() == N, ErrorKind::DimensionMismatch, "lambda must have N entries");
    require(alpha.rows() == N && alpha.cols() == N, ErrorKind::DimensionMismatch, "alpha must be N x N");
    require((lambda.array() >= 0.0).all(), ErrorKind::InvalidCoupling, "lambda_j must be >= 0");
    for (Index j = 0; j < N; ++j) {
        alpha(j, j) = 0.0;
        for (Index i = 0; i < N; ++i)
            require(alpha(j, i) >= 0.0, ErrorKind::InvalidCoupling, "alpha_{ji} must be >= 0");
    }
    d.lambda_ = std::move(lambda);
    d.alpha_ = std::move(alpha);
    return d;
}

double DriverSystem::coupling_amplitude(Index j) const {
    return kind_ == DriverKind::SmoothCoupled ? alpha_.row(j).sum() : 0.0;
}

double DriverSystem::value(Index j, Index x, const Eigen::Ref<const Vector>& y) const {
    double f = psi_(j, x);
    switch (kind_) {
        case DriverKind::Decoupled: break;
        case DriverKind::Affine: f += coupling_[static_cast<std::size_t>(x)].row(j).dot(y); break;
        case DriverKind::SmoothCoupled:
            f -= lambda_(j) * y(j);
            for (Index i = 0; i < modes(); ++i)
                if (i != j) f += alpha_(j, i) * std::tanh(y(i));
            break;
    }
    return f;
}

double DriverSystem::slope(Index j, Index i, Index x, const Eigen::Ref<const Vector>& y) const {
    switch (kind_) {
        case DriverKind::Decoupled: return 0.0;
        case DriverKind::Affine: return coupling_[static_cast<std::size_t>(x)](j, i);
        case DriverKind::SmoothCoupled: {
            if (i == j) return -lambda_(j);
            const double t = std::tanh(y(i));
            return alpha_(j, i) * (1.0 - t * t);
        }
    }
    return 0.0;
}

DriverSystem DriverSystem::with_terminal(ModeField xi) const {
    require(xi.rows() == modes() && xi.cols() == states(), ErrorKind::DimensionMismatch, "terminal must be N x n");
    DriverSystem d = *this;
    d.xi_ = std::move(xi);
    return d;
}

DriverSystem DriverSystem::with_sources(ModeField psi, ModeField mu) const {
    require(psi.rows() == modes() && psi.cols() == states() && mu.rows() == modes() && mu.cols() == states(),
            ErrorKind::DimensionMismatch, "sources must be N x n");
    DriverSystem d = *this;
    d.psi_ = std::move(psi);
    d.mu_ = std::move(mu);
    return d;
}

Vector eval_driver(const DriverSystem& drv, Index x, const Eigen::Ref<const Vector>& y) {
    require(y.size() == drv.modes(), ErrorKind::DimensionMismatch, "y must have N entries");
    require(x >= 0 && x < drv.states(), ErrorKind::InvalidArgument, "state out of range");
    Vector out(drv.modes());
    for (Index j = 0; j < drv.modes(); ++j) out(j) = drv.value(j, x, y);
    return out;
}

QuasiMonotoneReport validate_quasi_monotone(const DriverSystem& drv, std::int64_t sample_budget,
                                            std::uint64_t seed, double sample_radius) {
    require(sample_budget >= 1, ErrorKind::InvalidArgument, "sample budget must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-sample_radius, sample_radius);
    std::uniform_real_distribution<double> step(0.0, sample_radius);
    std::uniform_int_distribution<Index> state(0, drv.states() - 1);
    std::uniform_int_distribution<Index> mode(0, drv.modes() - 1);

    QuasiMonotoneReport report;
    const Index N = drv.modes();
    for (std::int64_t s = 0; s < sample_budget; ++s) {
        const Index x = state(rng);
        const Index j = mode(rng);
        Vector y(N);
        for (Index i = 0; i < N; ++i) y(i) = coord(rng);
        const double base = drv.value(j, x, y);
        const double tol = 1e-12 * (1.0 + std::abs(base));

        Vector up = y;
        up(j) += step(rng);
        const double own = drv.value(j, x, up);
        ++report.checks;
        if (own > base + tol)
            report.violations.push_back({"on-diagonal decreasing", j, x, y, up, own - base});

        if (N > 1) {
            Vector cross = y;
            for (Index i = 0; i < N; ++i)
                if (i != j) cross(i) += step(rng);
            const double other = drv.value(j, x, cross);
            ++report.checks;
            if (other < base - tol)
                report.violations.push_back({"off-diagonal increasing", j, x, y, cross, base - other});
        }
    }
    return report;
}

double BarrierLevel::value() const {
    if (none_) fail(ErrorKind::SentinelArithmetic, "arithmetic on the empty-set barrier");
    return value_;
}

BarrierLevel BarrierLevel::max(BarrierLevel other) const {
    if (none_) return other;
    if (other.none_) return *this;
    return BarrierLevel(std::max(value_, other.value_));
}

BarrierSystem BarrierSystem::none(Index modes, Index states) {
    BarrierSystem b;
    b.states_ = states;
    b.form_ = BarrierForm::Cost;
    b.edges_.assign(static_cast<std::size_t>(modes), {});
    b.validate();
    return b;
}

BarrierSystem BarrierSystem::cost_form(Index states, std::vector<std::vector<Edge>> edges, double cost_floor) {
    require(cost_floor > 0.0, ErrorKind::InvalidArgument, "cost floor must be > 0");
    BarrierSystem b;
    b.states_ = states;
    b.form_ = BarrierForm::Cost;
    b.cost_floor_ = cost_floor;
    b.edges_ = std::move(edges);
    sort_edges(b.edges_);
    for (auto& list : b.edges_)
        for (auto& e : list) e.cap = std::numeric_limits<double>::infinity();
    b.validate();
    return b;
}

BarrierSystem BarrierSystem::general_form(Index states, std::vector<std::vector<Edge>> edges) {
    BarrierSystem b;
    b.states_ = states;
    b.form_ = BarrierForm::General;
    b.edges_ = std::move(edges);
    sort_edges(b.edges_);
    b.validate();
    return b;
}

void BarrierSystem::validate() const {
    require(states_ > 0 && !edges_.empty(), ErrorKind::InvalidArgument, "barrier needs modes and states");
    const Index N = modes();
    for (Index j = 0; j < N; ++j) {
        const auto& list = edges_[static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < list.size(); ++t) {
            const Edge& e = list[t];
            require(e.target >= 0 && e.target < N, ErrorKind::InvalidArgument, "edge target out of range");
            require(e.target != j, ErrorKind::InvalidArgument, "A_j may not contain j");
            require(t == 0 || list[t - 1].target < e.target, ErrorKind::InvalidArgument,
                    "duplicate target in A_j");
            require(e.cost.size() == states_, ErrorKind::DimensionMismatch, "edge cost must cover every state");
            require(e.cost.allFinite(), ErrorKind::InvalidArgument, "edge cost must be finite");
            if (form_ == BarrierForm::Cost)
                require(e.cost.minCoeff() >= cost_floor_, ErrorKind::InvalidArgument,
                        "switching cost below the cost floor");
            else
                require(e.cost.minCoeff() >= 0.0, ErrorKind::InvalidArgument, "general-form cost must be >= 0");
        }
    }
}

bool BarrierSystem::all_empty() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const auto& l) { return l.empty(); });
}

bool BarrierSystem::allows(Index j, Index i) const {
    const auto& list = edges(j);
    return std::any_of(list.begin(), list.end(), [i](const Edge& e) { return e.target == i; });
}

double BarrierSystem::cost(Index j, Index i, Index x) const {
    for (const Edge& e : edges(j))
        if (e.target == i) return e.cost(x);
    fail(ErrorKind::InvalidArgument, "mode " + std::to_string(i) + " is not in A_" + std::to_string(j));
}

double BarrierSystem::edge_value(const Edge& e, Index x, double a) const { return -e.cost(x) + std::min(a, e.cap); }

BarrierLevel BarrierSystem::level(Index j, Index x, const Eigen::Ref<const Vector>& y) const {
    BarrierLevel h = BarrierLevel::none();
    for (const Edge& e : edges(j)) h = h.max(BarrierLevel::at(edge_value(e, x, y(e.target))));
    return h;
}

Index BarrierSystem::attaining_target(Index j, Index x, const Eigen::Ref<const Vector>& y, double tol) const {
    const BarrierLevel h = level(j, x, y);
    if (h.is_none()) return -1;
    for (const Edge& e : edges(j))
        if (edge_value(e, x, y(e.target)) >= h.value() - tol) return e.target;
    return -1;
}

std::vector<BarrierLevel> eval_barrier(const BarrierSystem& bar, Index x, const Eigen::Ref<const Vector>& y) {
    require(y.size() == bar.modes(), ErrorKind::DimensionMismatch, "y must have N entries");
    require(x >= 0 && x < bar.states(), ErrorKind::InvalidArgument, "state out of range");
    std::vector<BarrierLevel> out;
    out.reserve(static_cast<std::size_t>(bar.modes()));
    for (Index j = 0; j < bar.modes(); ++j) out.push_back(bar.level(j, x, y));
    return out;
}

namespace {

// Simple directed cycles, each reported once starting from its smallest mode.
std::vector<std::vector<Index>> simple_cycles(const BarrierSystem& bar) {
    std::vector<std::vector<Index>> cycles;
    const Index N = bar.modes();
    std::vector<Index> stack;
    std::vector<char> on_stack(static_cast<std::size_t>(N), 0);
    std::function<void(Index, Index)> dfs = [&](Index start, Index v) {
        for (const auto& e : bar.edges(v)) {
            if (e.target == start) {
                cycles.push_back(stack);
            } else if (e.target > start && !on_stack[static_cast<std::size_t>(e.target)]) {
                on_stack[static_cast<std::size_t>(e.target)] = 1;
                stack.push_back(e.target);
                dfs(start, e.target);
                stack.pop_back();
                on_stack[static_cast<std::size_t>(e.target)] = 0;
            }
        }
    };
    for (Index s = 0; s < N; ++s) {
        stack = {s};
        on_stack[static_cast<std::size_t>(s)] = 1;
        dfs(s, s);
        on_stack[static_cast<std::size_t>(s)] = 0;
    }
    return cycles;
}

const BarrierSystem::Edge& find_edge(const BarrierSystem& bar, Index j, Index i) {
    for (const auto& e : bar.edges(j))
        if (e.target == i) return e;
    fail(ErrorKind::InvalidArgument, "missing edge");
}

}  // namespace

NoLoopReport check_no_loop(const BarrierSystem& bar, std::uint64_t seed, int samples_per_cycle) {
    NoLoopReport report;
    const auto cycles = simple_cycles(bar);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-100.0, 100.0);

    for (const auto& cycle : cycles) {
        const std::size_t k = cycle.size();
        for (Index x = 0; x < bar.states(); ++x) {
            if (bar.form() == BarrierForm::Cost) {
                double total = 0.0;
                for (std::size_t t = 0; t < k; ++t) total += bar.cost(cycle[t], cycle[(t + 1) % k], x);
                if (total <= 0.0) {
                    report = {false, cycle, x, 0.0};
                    return report;
                }
                continue;
            }
            // y_1 = h_{j1,j2}(h_{j2,j3}(... h_{jk,j1}(y_1)))
            auto cycle_map = [&](double y) {
                double v = y;
                for (std::size_t t = k; t-- > 0;) v = bar.edge_value(find_edge(bar, cycle[t], cycle[(t + 1) % k]), x, v);
                return v;
            };
            for (int s = 0; s <= samples_per_cycle; ++s) {
                const double y = s == 0 ? 0.0 : coord(rng);
                if (std::abs(cycle_map(y) - y) <= 1e-9 * (1.0 + std::abs(y))) {
                    report = {false, cycle, x, y};
                    return report;
                }
            }
        }
    }
    return report;
}

Vector envelope_lower_rate(const DriverSystem& drv) {
    const Index n = drv.states();
    Vector g(n);
    for (Index x = 0; x < n; ++x) {
        double m = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < drv.modes(); ++j)
            m = std::min(m, drv.psi()(j, x) + drv.mu()(j, x) - drv.coupling_amplitude(j));
        g(x) = drv.kind() == DriverKind::Decoupled ? m : std::min(0.0, m);
    }
    return g;
}

Vector envelope_upper_rate(const DriverSystem& drv) {
    const Index n = drv.states();
    // A single decoupled equation is its own supersolution.
    if (drv.modes() == 1 && drv.kind() == DriverKind::Decoupled) return (drv.psi().row(0) + drv.mu().row(0)).transpose();
    Vector g = Vector::Zero(n);
    for (Index x = 0; x < n; ++x)
        for (Index j = 0; j < drv.modes(); ++j)
            g(x) += std::max(0.0, drv.psi()(j, x) + drv.mu()(j, x) + drv.coupling_amplitude(j));
    return g;
}

void check_envelope(const Envelope& env, const BarrierSystem& bar, double tol) {
    const double scale = std::max(1.0, env.upper.cwiseAbs().maxCoeff());
    if ((env.lower.array() > env.upper.array() + tol * scale).any())
        fail(ErrorKind::EnvelopeDominationFailed, "lower envelope exceeds upper envelope");
    for (Index x = 0; x < env.upper.cols(); ++x)
        for (Index j = 0; j < env.upper.rows(); ++j) {
            const BarrierLevel h = bar.level(j, x, env.upper.col(x));
            if (!h.is_none() && h.value() > env.upper(j, x) + tol * scale)
                fail(ErrorKind::EnvelopeDominationFailed,
                     "H(upper) > upper at mode " + std::to_string(j) + ", state " + std::to_string(x));
        }
}

Envelope build_envelope(const Generator& gen, const DriverSystem& drv, const BarrierSystem& bar) {
    require(drv.states() == gen.size() && bar.states() == gen.size() && bar.modes() == drv.modes(),
            ErrorKind::DimensionMismatch, "generator, driver and barrier dimensions differ");
    const Vector low = resolvent_solve(gen, MeasureDensity{envelope_lower_rate(drv)});
    const Vector up = resolvent_solve(gen, MeasureDensity{envelope_upper_rate(drv)});
    Envelope env;
    env.lower = low.transpose().replicate(drv.modes(), 1);
    env.upper = up.transpose().replicate(drv.modes(), 1);
    check_envelope(env, bar);
    return env;
}

}  // namespace oswitch
