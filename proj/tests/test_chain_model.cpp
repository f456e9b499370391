#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "oswitch/chain_model.hpp"
#include "oswitch/monte_carlo.hpp"

#include <cmath>

using namespace oswitch;
using fixtures::thrown_kind;

namespace {

Generator five_state_drift_diffusion() {
    ChainSpec spec;
    spec.states = 5;
    spec.family = ChainFamily::DriftDiffusion;
    spec.diffusion = 1.0;
    spec.drift = 0.3;
    spec.mesh = 1.0;
    spec.killing = Vector::Constant(5, 0.2);
    return build_generator(spec);
}

}  // namespace

TEST_CASE("explicit 1x1 generator has killing 1") {
    ChainSpec spec;
    spec.states = 1;
    spec.rates = {-1.0};
    const Generator g = build_generator(spec);
    CHECK(g.size() == 1);
    CHECK(g.killing(0) == doctest::Approx(1.0));
    CHECK(g.potential()(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("symmetric walk with uniform killing") {
    ChainSpec spec;
    spec.states = 2;
    spec.rates = {-1.0, 1.0, 1.0, -1.0};
    spec.killing = Vector::Constant(2, 0.5);
    const Generator g = build_generator(spec);
    Matrix expected(2, 2);
    expected << -1.5, 1.0, 1.0, -1.5;
    CHECK((g.rates() - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("drift-diffusion stencil keeps row sums at minus the killing") {
    const Generator g = five_state_drift_diffusion();
    for (Index x = 0; x < 5; ++x) {
        CHECK(g.rates().row(x).sum() == doctest::Approx(-0.2).epsilon(1e-14));
        for (Index y = 0; y < 5; ++y)
            if (x != y) CHECK(g.rates()(x, y) >= 0.0);
    }
    CHECK(g.potential().minCoeff() >= 0.0);
}

TEST_CASE("jump-kernel family is a valid generator") {
    ChainSpec spec;
    spec.states = 6;
    spec.family = ChainFamily::JumpKernel;
    spec.intensity = 1.0;
    spec.alpha_min = 0.5;
    spec.alpha_max = 1.5;
    spec.range = 3;
    spec.killing = Vector::Constant(6, 0.1);
    const Generator g = build_generator(spec);
    CHECK(g.killing_rates().minCoeff() == doctest::Approx(0.1));
    CHECK(g.potential().minCoeff() >= 0.0);
}

TEST_CASE("invalid and recurrent rates are rejected") {
    Matrix neg(2, 2);
    neg << -1.0, -0.5, 0.5, -1.0;
    CHECK(thrown_kind([&] { Generator::from_rates(neg); }) == ErrorKind::InvalidRates);
    Matrix pos(1, 1);
    pos << 0.5;
    CHECK(thrown_kind([&] { Generator::from_rates(pos); }) == ErrorKind::InvalidRates);
    Matrix conservative(2, 2);
    conservative << -1.0, 1.0, 1.0, -1.0;
    CHECK(thrown_kind([&] { Generator::from_rates(conservative); }) == ErrorKind::NonTransient);
}

TEST_CASE("resolvent of constants under uniform killing") {
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    const Vector u = resolvent_solve(g, {Vector::Constant(2, 3.0)});
    CHECK(u(0) == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(u(1) == doctest::Approx(6.0).epsilon(1e-14));
    const Vector s = resolvent_solve(fixtures::single_state(1.0), {Vector::Constant(1, 3.0)});
    CHECK(s(0) == doctest::Approx(3.0));
}

TEST_CASE("resolvent column matches Monte Carlo occupation time") {
    const Generator g = five_state_drift_diffusion();
    Vector ind = Vector::Zero(5);
    ind(2) = 1.0;
    const Vector u = resolvent_solve(g, {ind});
    CHECK((u - g.potential().col(2)).cwiseAbs().maxCoeff() < 1e-12);
    for (Index x0 : {0, 2, 4}) {
        const auto mc = fixtures::mc_occupation(g, x0, ind, 100000, 11 + static_cast<std::uint64_t>(x0));
        CHECK(std::abs(mc.mean - u(x0)) <= 3.0 * mc.std_error);
    }
}

TEST_CASE("resolvent is positive on nonnegative data") {
    fixtures::Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Generator g = fixtures::random_generator(rng, 6);
        Vector gv = Vector::Random(6).cwiseAbs();
        CHECK(resolvent_solve(g, {gv}).minCoeff() >= 0.0);
    }
}

TEST_CASE("resolvent agrees with a summed kernel series") {
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    const double dt = 1e-3;
    const Matrix P = transition_step(g, dt).matrix;
    Vector gv(2);
    gv << 1.0, -2.0;
    Vector term = gv, sum = 0.5 * dt * gv;  // trapezoid weight at t = 0
    double mass = 1.0;
    while (mass > 1e-8) {
        term = P * term;
        sum += dt * term;
        mass *= std::exp(-0.5 * dt);
    }
    CHECK((sum - resolvent_solve(g, {gv})).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("transition step") {
    const Generator one = fixtures::single_state(1.0);
    CHECK(transition_step(one, std::log(2.0)).matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-13));
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    CHECK((transition_step(g, 0.0).matrix - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    const Matrix a = transition_step(g, 0.1).matrix;
    CHECK((a * a - transition_step(g, 0.2).matrix).cwiseAbs().maxCoeff() < 1e-10);

    fixtures::Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        const Generator r = fixtures::random_generator(rng, 7, 0.7, 3.0);
        for (double dt : {0.01, 0.3, 2.0}) {
            const Matrix P = transition_step(r, dt).matrix;
            CHECK((P - fixtures::expm(r.rates(), dt)).cwiseAbs().maxCoeff() < 1e-11);
            CHECK(P.minCoeff() >= 0.0);
            CHECK(P.rowwise().sum().maxCoeff() <= 1.0 + 1e-14);
        }
        const Matrix s = transition_step(r, 0.4).matrix * transition_step(r, 0.7).matrix;
        CHECK((s - transition_step(r, 1.1).matrix).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("time-step generator") {
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    const Generator gd = g.time_step_generator(0.1);
    const Matrix P = transition_step(g, 0.1).matrix;
    CHECK((gd.rates() - (P - Matrix::Identity(2, 2)) / 0.1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("single state paths have no jumps and are reproducible") {
    const Generator g = fixtures::single_state(1.0);
    const Path a = sample_path(g, 0, 42, 1e9);
    const Path b = sample_path(g, 0, 42, 1e9);
    CHECK(a.jump_times.empty());
    CHECK(a.states.size() == 1);
    CHECK(a.killed_at > 0.0);
    CHECK(a.killed_at == b.killed_at);
    CHECK(sample_path(g, 0, 43, 1e9).killed_at != a.killed_at);

    Matrix diag = Matrix::Zero(3, 3);
    diag.diagonal() << -0.5, -1.0, -2.0;
    const Generator kill = Generator::from_rates(diag);
    for (std::uint64_t s = 0; s < 200; ++s) CHECK(sample_path(kill, s % 3, s, 1e9).jump_times.empty());
}

TEST_CASE("mean lifetime under uniform killing") {
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    const auto samples = parallel_samples<double>(
        100000, [&](std::int64_t i) { return sample_path(g, 0, path_seed(9, static_cast<std::uint64_t>(i)), 1e9).killed_at; });
    const McStats st = summarize(samples);
    CHECK(std::abs(st.mean - 2.0) <= 3.0 * st.std_error);
}

TEST_CASE("path structure") {
    const Generator g = fixtures::symmetric_walk(2.0, 0.3);
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Path p = sample_path(g, 1, s, 5.0);
        CHECK(p.states.size() == p.jump_times.size() + 1);
        for (std::size_t i = 1; i < p.jump_times.size(); ++i) CHECK(p.jump_times[i] > p.jump_times[i - 1]);
        if (!p.jump_times.empty()) CHECK(p.jump_times.back() < p.killed_at);
        CHECK(p.killed_at <= 5.0);
        if (p.capped) CHECK(p.killed_at == 5.0);
    }
}

TEST_CASE("path functional") {
    const Generator g = fixtures::symmetric_walk(1.0, 0.5);
    const Path p = sample_path(g, 0, 2024, 1e9);
    CHECK(path_functional(p, {Vector::Zero(2)}, 0.0) == 0.0);

    Path rect;
    rect.states = {0};
    rect.killed_at = 2.0;
    CHECK(path_functional(rect, {Vector::Constant(1, 3.0)}, 0.0) == doctest::Approx(6.0));

    Vector gv(2);
    gv << 1.5, -0.25;
    double hand = 0.0, t = 0.0;
    for (std::size_t i = 0; i < p.states.size(); ++i) {
        const double end = i < p.jump_times.size() ? p.jump_times[i] : p.killed_at;
        hand += gv(p.states[i]) * (end - t);
        t = end;
    }
    CHECK(path_functional(p, {gv}, 0.0) == doctest::Approx(hand).epsilon(1e-13));

    Path capped = rect;
    capped.capped = true;
    CHECK(path_functional(capped, {Vector::Constant(1, 3.0)}, 0.5) == doctest::Approx(6.5));
    Path two;
    two.states = {0, 1};
    two.jump_times = {0.5};
    two.killed_at = 1.0;
    CHECK(thrown_kind([&] { path_functional(two, {Vector::Zero(1)}, 0.0); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("Monte Carlo Feynman-Kac against the resolvent") {
    fixtures::Rng rng(17);
    const Generator g = fixtures::random_generator(rng, 4);
    Vector gv = Vector::Random(4).cwiseAbs();
    const Vector u = resolvent_solve(g, {gv});
    const double cap = negligible_survival_horizon(g);
    const auto samples = parallel_samples<double>(100000, [&](std::int64_t i) {
        return path_functional(sample_path(g, 1, path_seed(5, static_cast<std::uint64_t>(i)), cap), {gv}, 0.0);
    });
    const McStats st = summarize(samples);
    CHECK(std::abs(st.mean - u(1)) <= 3.0 * st.std_error);
}

TEST_CASE("negligible survival horizon") {
    fixtures::Rng rng(23);
    const Generator g = fixtures::random_generator(rng, 5);
    const double T = negligible_survival_horizon(g);
    CHECK(transition_step(g, T).matrix.rowwise().sum().maxCoeff() <= std::ldexp(1.0, -40));
}

TEST_CASE("parallel samples are scheduling independent") {
    const auto f = [](std::int64_t i) { return static_cast<double>(path_seed(3, static_cast<std::uint64_t>(i)) % 1000); };
    CHECK(parallel_samples<double>(5000, f) == parallel_samples<double>(5000, f));
    CHECK(path_seed(1, 0) != path_seed(1, 1));
}
