#include "oswitch/chain_model.hpp"

#include "oswitch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace oswitch {

namespace {

constexpr double kSeriesTail = 1e-12;

void validate_rates(const Matrix& rates) {
    require(rates.rows() > 0 && rates.rows() == rates.cols(), ErrorKind::InvalidRates,
            "rate matrix must be square and nonempty");
    require(rates.allFinite(), ErrorKind::InvalidRates, "rate matrix has non-finite entries");
    const double scale = std::max(1.0, rates.cwiseAbs().maxCoeff());
    for (Index x = 0; x < rates.rows(); ++x) {
        for (Index y = 0; y < rates.cols(); ++y) {
            if (x != y && rates(x, y) < 0.0)
                fail(ErrorKind::InvalidRates, "negative off-diagonal rate at (" + std::to_string(x) + "," +
                                                  std::to_string(y) + ")");
        }
        if (rates.row(x).sum() > 1e-12 * scale)
            fail(ErrorKind::InvalidRates, "positive row sum at state " + std::to_string(x));
    }
}

}  // namespace

Generator Generator::from_rates(Matrix rates, std::vector<std::string> labels) {
    validate_rates(rates);
    const Index n = rates.rows();
    require(labels.empty() || static_cast<Index>(labels.size()) == n, ErrorKind::DimensionMismatch,
            "label count does not match state count");

    Eigen::FullPivLU<Matrix> lu(-rates);
    if (!lu.isInvertible()) fail(ErrorKind::NonTransient, "-L is singular (no killing reachable)");
    Matrix potential = lu.inverse();
    const double scale = potential.cwiseAbs().maxCoeff();
    if (potential.minCoeff() < -1e-12 * scale)
        fail(ErrorKind::NonTransient, "(-L)^{-1} has a negative entry");
    potential = potential.cwiseMax(0.0);

    Generator gen;
    gen.rates_ = std::move(rates);
    gen.potential_ = std::move(potential);
    gen.labels_ = std::move(labels);
    return gen;
}

double Generator::max_exit_rate() const { return (-rates_.diagonal()).maxCoeff(); }

bool Generator::has_dual_markov(double tol) const {
    const double scale = std::max(1.0, rates_.cwiseAbs().maxCoeff());
    return (rates_.colwise().sum().array() <= tol * scale).all();
}

Generator Generator::time_step_generator(double dt) const {
    require(dt > 0.0, ErrorKind::InvalidArgument, "time step must be positive");
    const auto kernel = transition_step(*this, dt);
    Matrix rates = (kernel.matrix - Matrix::Identity(size(), size())) / dt;
    // Uniformisation output is entrywise nonnegative; only the diagonal can
    // pick up rounding that makes a row sum a hair positive.
    for (Index x = 0; x < rates.rows(); ++x) {
        const double off = rates.row(x).sum() - rates(x, x);
        rates(x, x) = std::min(rates(x, x), -off);
    }
    return from_rates(std::move(rates), labels_);
}

Index Path::state_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return states[static_cast<std::size_t>(it - jump_times.begin())];
}

Generator build_generator(const ChainSpec& spec) {
    const Index n = spec.states;
    require(n > 0, ErrorKind::InvalidArgument, "state count must be positive");
    Matrix rates = Matrix::Zero(n, n);

    switch (spec.family) {
        case ChainFamily::Explicit: {
            require(static_cast<Index>(spec.rates.size()) == n * n, ErrorKind::DimensionMismatch,
                    "explicit rates must have states*states entries");
            for (Index x = 0; x < n; ++x)
                for (Index y = 0; y < n; ++y) rates(x, y) = spec.rates[static_cast<std::size_t>(x * n + y)];
            break;
        }
        case ChainFamily::DriftDiffusion: {
            require(spec.mesh > 0.0 && spec.diffusion >= 0.0, ErrorKind::InvalidArgument,
                    "drift-diffusion needs mesh > 0 and diffusion >= 0");
            const double h = spec.mesh;
            const double right = spec.diffusion / (h * h) + std::max(spec.drift, 0.0) / h;
            const double left = spec.diffusion / (h * h) + std::max(-spec.drift, 0.0) / h;
            for (Index x = 0; x < n; ++x) {
                if (x + 1 < n) rates(x, x + 1) = right;
                if (x > 0) rates(x, x - 1) = left;
            }
            break;
        }
        case ChainFamily::JumpKernel: {
            require(spec.mesh > 0.0 && spec.intensity >= 0.0 && spec.range >= 1, ErrorKind::InvalidArgument,
                    "jump-kernel needs mesh > 0, intensity >= 0, range >= 1");
            require(spec.alpha_min > 0.0 && spec.alpha_max < 2.0 && spec.alpha_min <= spec.alpha_max,
                    ErrorKind::InvalidArgument, "jump-kernel exponent must lie in (0,2)");
            for (Index x = 0; x < n; ++x) {
                const double frac = n > 1 ? static_cast<double>(x) / static_cast<double>(n - 1) : 0.0;
                const double alpha = spec.alpha_min + (spec.alpha_max - spec.alpha_min) * frac;
                for (Index y = 0; y < n; ++y) {
                    const Index d = std::abs(x - y);
                    if (d == 0 || d > spec.range) continue;
                    rates(x, y) = spec.intensity / std::pow(static_cast<double>(d) * spec.mesh, 1.0 + alpha);
                }
            }
            break;
        }
    }

    if (spec.family != ChainFamily::Explicit) {
        for (Index x = 0; x < n; ++x) rates(x, x) = -rates.row(x).sum();
    }
    if (spec.killing.size() > 0) {
        require(spec.killing.size() == n, ErrorKind::DimensionMismatch, "killing vector length mismatch");
        require((spec.killing.array() >= 0.0).all(), ErrorKind::InvalidRates, "killing rates must be >= 0");
        rates.diagonal() -= spec.killing;
    }
    return Generator::from_rates(std::move(rates), spec.labels);
}

Vector resolvent_solve(const Generator& gen, const MeasureDensity& g) {
    require(g.size() == gen.size(), ErrorKind::DimensionMismatch, "density length does not match generator");
    Eigen::PartialPivLU<Matrix> lu(-gen.rates());
    return lu.solve(g.values);
}

TransitionKernel transition_step(const Generator& gen, double dt) {
    require(dt >= 0.0 && std::isfinite(dt), ErrorKind::InvalidArgument, "dt must be finite and >= 0");
    const Index n = gen.size();
    TransitionKernel out{dt, Matrix::Identity(n, n)};
    const double lambda = gen.max_exit_rate();
    if (dt == 0.0 || lambda == 0.0) return out;

    int squarings = 0;
    double h = dt;
    while (lambda * h > 1.0) {
        h *= 0.5;
        ++squarings;
    }
    const double theta = lambda * h;
    const Matrix jump = Matrix::Identity(n, n) + gen.rates() / lambda;

    Matrix power = Matrix::Identity(n, n);
    double weight = std::exp(-theta);
    double mass = weight;
    Matrix sum = weight * power;
    for (int k = 1; 1.0 - mass >= kSeriesTail && k < 200; ++k) {
        power = power * jump;
        weight *= theta / k;
        mass += weight;
        sum += weight * power;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    out.matrix = sum.cwiseMax(0.0);
    return out;
}

Path sample_path(const Generator& gen, Index x0, std::uint64_t seed, double horizon_cap) {
    require(x0 >= 0 && x0 < gen.size(), ErrorKind::InvalidArgument, "start state out of range");
    require(horizon_cap > 0.0, ErrorKind::InvalidArgument, "horizon cap must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Path path;
    path.states.push_back(x0);
    const Matrix& q = gen.rates();
    Index x = x0;
    double t = 0.0;
    for (;;) {
        const double rate = gen.exit_rate(x);
        std::exponential_distribution<double> hold(rate);
        const double next = t + hold(rng);
        if (next >= horizon_cap) {
            path.killed_at = horizon_cap;
            path.capped = true;
            return path;
        }
        t = next;
        double u = unif(rng) * rate;
        Index target = -1;
        for (Index y = 0; y < gen.size(); ++y) {
            if (y == x) continue;
            if (u < q(x, y)) {
                target = y;
                break;
            }
            u -= q(x, y);
        }
        if (target < 0) {
            path.killed_at = t;
            return path;
        }
        path.jump_times.push_back(t);
        path.states.push_back(target);
        x = target;
    }
}

double path_functional(const Path& path, const MeasureDensity& running, double terminal_cap_value) {
    for (const Index s : path.states)
        require(s >= 0 && s < running.size(), ErrorKind::DimensionMismatch, "path state outside density support");
    double total = 0.0;
    double start = 0.0;
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        const double end = i < path.jump_times.size() ? path.jump_times[i] : path.killed_at;
        total += running.values[path.states[i]] * (end - start);
        start = end;
    }
    if (path.capped) total += terminal_cap_value;
    return total;
}

double negligible_survival_horizon(const Generator& gen) { return 80.0 * gen.mean_lifetime().maxCoeff(); }

}  // namespace oswitch
