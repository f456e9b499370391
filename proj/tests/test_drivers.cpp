#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "oswitch/drivers.hpp"

#include <cmath>
#include <limits>

using namespace oswitch;
using fixtures::thrown_kind;

namespace {

BarrierSystem three_mode_barrier() {
    std::vector<std::vector<BarrierSystem::Edge>> edges(3);
    edges[0] = {{1, Vector::Constant(1, 1.0)}, {2, Vector::Constant(1, 3.0)}};
    return BarrierSystem::cost_form(1, edges, 0.01);
}

ModeField col(std::initializer_list<double> v) {
    ModeField f(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double d : v) f(i++, 0) = d;
    return f;
}

}  // namespace

TEST_CASE("decoupled driver ignores y") {
    fixtures::Rng rng(1);
    const DriverSystem d = fixtures::random_decoupled(rng, 3, 4);
    for (Index x = 0; x < 4; ++x) {
        const Vector a = eval_driver(d, x, Vector::Zero(3));
        const Vector b = eval_driver(d, x, Vector::Random(3) * 50.0);
        CHECK(a == b);
        CHECK(a == d.psi().col(x));
    }
}

TEST_CASE("affine driver with zero coupling returns psi") {
    const ModeField psi = col({1.0, -2.0});
    const DriverSystem d = DriverSystem::affine(psi, {Matrix::Zero(2, 2)});
    CHECK(eval_driver(d, 0, Vector::Constant(2, 7.0)) == psi.col(0));
}

TEST_CASE("smooth-coupled driver") {
    Matrix alpha(2, 2);
    alpha << 0.0, 0.5, 0.5, 0.0;
    const DriverSystem d = DriverSystem::smooth_coupled(ModeField::Zero(2, 1), Vector::Ones(2), alpha);
    CHECK(eval_driver(d, 0, Vector::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
    Vector y(2);
    y << 0.7, -1.3;
    const Vector f = eval_driver(d, 0, y);
    CHECK(f(0) == doctest::Approx(-0.7 + 0.5 * std::tanh(-1.3)));
    CHECK(f(1) == doctest::Approx(1.3 + 0.5 * std::tanh(0.7)));
    CHECK(d.slope(0, 1, 0, y) == doctest::Approx(0.5 / std::pow(std::cosh(-1.3), 2)));
    CHECK(d.slope(0, 0, 0, y) == doctest::Approx(-1.0));
}

TEST_CASE("driver argument size is checked") {
    const DriverSystem d = DriverSystem::decoupled(col({1.0, 2.0}));
    CHECK(thrown_kind([&] { eval_driver(d, 0, Vector::Zero(3)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("affine structure is enforced") {
    Matrix bad(2, 2);
    bad << -1.0, -1.0, 0.5, -1.0;
    CHECK(thrown_kind([&] { DriverSystem::affine(col({0.0, 0.0}), {bad}); }) == ErrorKind::InvalidCoupling);
    Matrix weak(2, 2);
    weak << -0.1, 0.5, 0.5, -0.1;
    CHECK(thrown_kind([&] { DriverSystem::affine(col({0.0, 0.0}), {weak}); }) == ErrorKind::InvalidCoupling);
}

TEST_CASE("quasi-monotone validator") {
    fixtures::Rng rng(2);
    CHECK(validate_quasi_monotone(fixtures::random_decoupled(rng, 3, 2), 100, 1).ok());
    for (int t = 0; t < 3; ++t) {
        CHECK(validate_quasi_monotone(fixtures::random_smooth(rng, 3, 2), 10000, 3).ok());
        const auto rep = validate_quasi_monotone(fixtures::random_affine(rng, 3, 2), 100000, 4);
        CHECK(rep.ok());
        CHECK(rep.checks >= 100000);
    }
    CHECK(validate_quasi_monotone(fixtures::random_smooth(rng, 2, 3), 100000, 5).ok());

    Matrix flipped(2, 2);
    flipped << -1.0, -1.0, 0.2, -1.0;
    const DriverSystem bad =
        DriverSystem::affine(col({0.0, 0.0}), {flipped}, {}, {}, StructureCheck::Skip);
    const auto rep = validate_quasi_monotone(bad, 1000, 6);
    REQUIRE_FALSE(rep.ok());
    CHECK(rep.violations.front().assumption == "off-diagonal increasing");
    CHECK(rep.violations.front().mode == 0);
}

TEST_CASE("barrier values") {
    const BarrierSystem none = BarrierSystem::none(2, 1);
    CHECK(eval_barrier(none, 0, Vector::Zero(2))[0].is_none());
    CHECK(thrown_kind([] { (void)BarrierLevel::none().value(); }) == ErrorKind::SentinelArithmetic);
    CHECK(BarrierLevel::none().max(BarrierLevel::at(-3.0)) == BarrierLevel::at(-3.0));
    CHECK(BarrierLevel::none().clamp(-5.0) == -5.0);

    const BarrierSystem two = fixtures::uniform_cost_barrier(1, {{1}, {0}}, 1.0);
    Vector y(2);
    y << 0.0, 5.0;
    CHECK(eval_barrier(two, 0, y)[0].value() == 4.0);

    const BarrierSystem three = three_mode_barrier();
    Vector y3(3);
    y3 << 0.0, 2.0, 5.0;
    const auto h = eval_barrier(three, 0, y3);
    CHECK(h[0].value() == 2.0);
    CHECK(h[1].is_none());
    CHECK(three.attaining_target(0, 0, y3, 1e-12) == 2);
    CHECK(thrown_kind([&] { eval_barrier(three, 0, y); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("attaining target breaks ties towards the smallest index") {
    std::vector<std::vector<BarrierSystem::Edge>> edges(3);
    edges[0] = {{2, Vector::Constant(1, 1.0)}, {1, Vector::Constant(1, 1.0)}};
    const BarrierSystem bar = BarrierSystem::cost_form(1, edges, 0.5);
    Vector y(3);
    y << 0.0, 4.0, 4.0;
    CHECK(bar.attaining_target(0, 0, y, 1e-12) == 1);
}

TEST_CASE("barrier validation") {
    std::vector<std::vector<BarrierSystem::Edge>> self(2);
    self[0] = {{0, Vector::Constant(1, 1.0)}};
    CHECK(thrown_kind([&] { BarrierSystem::cost_form(1, self, 0.1); }).has_value());
    std::vector<std::vector<BarrierSystem::Edge>> cheap(2);
    cheap[0] = {{1, Vector::Constant(1, 0.05)}};
    CHECK(thrown_kind([&] { BarrierSystem::cost_form(1, cheap, 0.1); }).has_value());
    CHECK(thrown_kind([&] { BarrierSystem::cost_form(1, cheap, 0.0); }).has_value());
}

TEST_CASE("cost-form barriers are monotone, 1-Lipschitz and blind to the own mode") {
    fixtures::Rng rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0), t(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const BarrierSystem bar = fixtures::random_cost_barrier(rng, 4, 3, 3);
        for (int s = 0; s < 50; ++s) {
            Vector y(4);
            for (Index i = 0; i < 4; ++i) y(i) = u(rng);
            const Index x = s % 3;
            const auto base = eval_barrier(bar, x, y);
            for (Index i = 0; i < 4; ++i) {
                const double step = t(rng);
                Vector yp = y;
                yp(i) += step;
                const auto bumped = eval_barrier(bar, x, yp);
                for (Index j = 0; j < 4; ++j) {
                    if (base[static_cast<std::size_t>(j)].is_none()) continue;
                    const double d = bumped[static_cast<std::size_t>(j)].value() - base[static_cast<std::size_t>(j)].value();
                    CHECK(d >= 0.0);
                    CHECK(d <= step + 1e-12);
                    if (i == j) CHECK(d == 0.0);
                }
            }
        }
    }
}

TEST_CASE("no-loop check") {
    fixtures::Rng rng(9);
    for (int t = 0; t < 10; ++t) CHECK(check_no_loop(fixtures::random_cost_barrier(rng, 4, 2, 3, 0.01)).ok);
    CHECK(check_no_loop(fixtures::uniform_cost_barrier(1, {{1}, {2}, {}}, 0.5)).ok);

    std::vector<std::vector<BarrierSystem::Edge>> loop(2);
    loop[0] = {{1, Vector::Zero(1)}};
    loop[1] = {{0, Vector::Zero(1)}};
    const auto rep = check_no_loop(BarrierSystem::general_form(1, loop));
    CHECK_FALSE(rep.ok);
    CHECK(rep.witness_cycle == std::vector<Index>{0, 1});

    std::vector<std::vector<BarrierSystem::Edge>> paid(2);
    paid[0] = {{1, Vector::Constant(1, 0.2)}};
    paid[1] = {{0, Vector::Zero(1)}};
    CHECK(check_no_loop(BarrierSystem::general_form(1, paid)).ok);

    // A cap makes the cycle map constant below it, so it closes at low values.
    std::vector<std::vector<BarrierSystem::Edge>> capped(2);
    capped[0] = {{1, Vector::Zero(1), 1.0}};
    capped[1] = {{0, Vector::Zero(1)}};
    CHECK(check_no_loop(BarrierSystem::general_form(1, capped)).ok == false);
}

TEST_CASE("envelopes") {
    const Generator one = fixtures::single_state(1.0);
    const auto tm = fixtures::two_mode();
    const Envelope env = build_envelope(tm.gen, tm.drv, tm.bar);
    CHECK(env.upper(0, 0) == doctest::Approx(4.0));
    CHECK(env.upper(1, 0) == doctest::Approx(4.0));
    CHECK(env.lower(0, 0) == doctest::Approx(1.0));
    CHECK(env.lower(1, 0) == doctest::Approx(1.0));

    fixtures::Rng rng(10);
    const Generator g = fixtures::random_generator(rng, 4);
    const DriverSystem d1 = fixtures::random_decoupled(rng, 1, 4);
    const Envelope e1 = build_envelope(g, d1, BarrierSystem::none(1, 4));
    const Vector r = resolvent_solve(g, {(d1.psi().row(0) + d1.mu().row(0)).transpose()});
    CHECK((e1.lower.row(0).transpose() - r).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((e1.upper.row(0).transpose() - r).cwiseAbs().maxCoeff() < 1e-12);

    const DriverSystem neg = DriverSystem::decoupled(-ModeField::Random(3, 4).cwiseAbs());
    CHECK(build_envelope(g, neg, BarrierSystem::none(3, 4)).upper.cwiseAbs().maxCoeff() == 0.0);
    (void)one;
}

TEST_CASE("envelope sandwich on random instances") {
    fixtures::Rng rng(11);
    for (int t = 0; t < 30; ++t) {
        const Generator g = fixtures::random_generator(rng, 3);
        const DriverSystem d = t % 3 == 0   ? fixtures::random_decoupled(rng, 3, 3)
                               : t % 3 == 1 ? fixtures::random_affine(rng, 3, 3)
                                            : fixtures::random_smooth(rng, 3, 3);
        const BarrierSystem bar = fixtures::random_cost_barrier(rng, 3, 3, 2);
        const Envelope env = build_envelope(g, d, bar);
        CHECK((env.upper - env.lower).minCoeff() >= 0.0);
        for (Index x = 0; x < 3; ++x) {
            const auto h = eval_barrier(bar, x, env.upper.col(x));
            for (Index j = 0; j < 3; ++j)
                if (!h[static_cast<std::size_t>(j)].is_none()) CHECK(h[static_cast<std::size_t>(j)].value() <= env.upper(j, x));
            // the rates bracket f + mu along replicated arguments
            const Vector lo = envelope_lower_rate(d), up = envelope_upper_rate(d);
            for (double c : {-3.0, 0.0, 2.5})
                for (Index j = 0; j < 3; ++j) {
                    const double v = d.value(j, x, Vector::Constant(3, c)) + d.mu()(j, x);
                    if (d.kind() == DriverKind::Decoupled) {
                        CHECK(lo(x) <= v + 1e-12);
                        CHECK(v <= up(x) + 1e-12);
                    }
                }
        }
        CHECK_NOTHROW(check_envelope(env, bar));
    }
}

TEST_CASE("envelope domination failure is reported") {
    const BarrierSystem bar = fixtures::uniform_cost_barrier(1, {{1}, {0}}, 1.0);
    Envelope env{ModeField::Zero(2, 1), ModeField::Zero(2, 1)};
    env.upper(1, 0) = 5.0;
    CHECK(thrown_kind([&] { check_envelope(env, bar); }) == ErrorKind::EnvelopeDominationFailed);
}
