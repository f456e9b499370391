#pragma once

#include "oswitch/chain_model.hpp"
#include "oswitch/linalg.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace oswitch {

enum class DriverKind { Decoupled, Affine, SmoothCoupled };

std::string to_string(DriverKind kind);

enum class StructureCheck { Enforce, Skip };

/// Quasi-monotone right-hand side f = (f^1..f^N) together with the source
/// densities mu^j and terminal data xi^j. All ModeFields are N x n.
///
///   decoupled:       f^j(x,y) = psi^j(x)
///   affine:          f^j(x,y) = psi^j(x) + sum_i G_{ji}(x) y^i
///   smooth-coupled:  f^j(x,y) = psi^j(x) - lambda_j y^j + sum_{i!=j} alpha_{ji} tanh(y^i)
class DriverSystem {
public:
    static DriverSystem decoupled(ModeField psi, ModeField mu = {}, ModeField xi = {});

    /// `coupling[x]` is the N x N matrix G(x). Enforced structure: G_{ji} >= 0
    /// off the diagonal, G_{jj} <= 0, and sum_{i!=j} G_{ji} <= -G_{jj}.
    static DriverSystem affine(ModeField psi, std::vector<Matrix> coupling, ModeField mu = {},
                               ModeField xi = {}, StructureCheck check = StructureCheck::Enforce);

    static DriverSystem smooth_coupled(ModeField psi, Vector lambda, Matrix alpha, ModeField mu = {},
                                       ModeField xi = {});

    Index modes() const { return psi_.rows(); }
    Index states() const { return psi_.cols(); }
    DriverKind kind() const { return kind_; }

    const ModeField& psi() const { return psi_; }
    const ModeField& mu() const { return mu_; }
    const ModeField& xi() const { return xi_; }
    const std::vector<Matrix>& coupling() const { return coupling_; }
    const Vector& lambda() const { return lambda_; }
    const Matrix& alpha() const { return alpha_; }

    /// Affine: max_{j,x} sum_{i!=j} G_{ji}(x) / (-G_{jj}(x)), a row-sum bound
    /// on the Jacobi iteration matrix of -G. Smooth: 0. Decoupled: 0.
    double contraction_bound() const { return contraction_bound_; }

    /// Uniform bound on |f^j(x,y) - psi^j(x)| over y of the sign used by the
    /// envelopes (smooth family: sum_i alpha_{ji}); zero for other kinds.
    double coupling_amplitude(Index j) const;

    double value(Index j, Index x, const Eigen::Ref<const Vector>& y) const;
    /// d f^j / d y^i at (x, y).
    double slope(Index j, Index i, Index x, const Eigen::Ref<const Vector>& y) const;

    DriverSystem with_terminal(ModeField xi) const;
    DriverSystem with_sources(ModeField psi, ModeField mu) const;

private:
    DriverSystem() = default;
    void finish(ModeField mu, ModeField xi);

    DriverKind kind_ = DriverKind::Decoupled;
    ModeField psi_, mu_, xi_;
    std::vector<Matrix> coupling_;
    Vector lambda_;
    Matrix alpha_;
    double contraction_bound_ = 0.0;
};

/// f(x, y) for all modes.
Vector eval_driver(const DriverSystem& drv, Index x, const Eigen::Ref<const Vector>& y);

struct QuasiMonotoneViolation {
    std::string assumption;  // "on-diagonal decreasing" | "off-diagonal increasing"
    Index mode = 0;
    Index state = 0;
    Vector y, y_perturbed;
    double amount = 0.0;
};

struct QuasiMonotoneReport {
    std::int64_t checks = 0;
    std::vector<QuasiMonotoneViolation> violations;
    bool ok() const { return violations.empty(); }
};

QuasiMonotoneReport validate_quasi_monotone(const DriverSystem& drv, std::int64_t sample_budget,
                                            std::uint64_t seed, double sample_radius = 10.0);

/// Value of an obstacle H^j(x, y). `none()` is the maximum over an empty
/// target set; it only takes part in max-type operations.
class BarrierLevel {
public:
    static BarrierLevel none() { return BarrierLevel(); }
    static BarrierLevel at(double v) { return BarrierLevel(v); }

    bool is_none() const { return none_; }
    /// Throws SentinelArithmetic for the empty-set sentinel.
    double value() const;
    /// max(y, level)
    double clamp(double y) const { return none_ ? y : std::max(y, value_); }
    BarrierLevel max(BarrierLevel other) const;
    /// y - level, or +infinity for the sentinel (a constraint that can never bind).
    double slack(double y) const { return none_ ? std::numeric_limits<double>::infinity() : y - value_; }

    bool operator==(const BarrierLevel&) const = default;

private:
    BarrierLevel() = default;
    explicit BarrierLevel(double v) : none_(false), value_(v) {}
    bool none_ = true;
    double value_ = 0.0;
};

enum class BarrierForm { Cost, General };

/// Oblique obstacles H^j(x,y) = max_{i in A_j} h_{j,i}(x, y^i) with
/// h_{j,i}(x,a) = -c_{j,i}(x) + phi_{j,i}(a). The cost form has phi(a) = a and
/// c >= cost_floor > 0; the general form uses phi(a) = min(a, cap_{j,i}) and
/// c >= 0.
class BarrierSystem {
public:
    struct Edge {
        Index target = 0;
        Vector cost;  // over states
        double cap = std::numeric_limits<double>::infinity();
    };

    /// Every A_j empty.
    static BarrierSystem none(Index modes, Index states);
    static BarrierSystem cost_form(Index states, std::vector<std::vector<Edge>> edges, double cost_floor);
    static BarrierSystem general_form(Index states, std::vector<std::vector<Edge>> edges);

    Index modes() const { return static_cast<Index>(edges_.size()); }
    Index states() const { return states_; }
    BarrierForm form() const { return form_; }
    double cost_floor() const { return cost_floor_; }
    bool empty(Index j) const { return edges_[static_cast<std::size_t>(j)].empty(); }
    bool all_empty() const;
    const std::vector<Edge>& edges(Index j) const { return edges_[static_cast<std::size_t>(j)]; }
    /// c_{j,i}(x); throws InvalidArgument if i is not in A_j.
    double cost(Index j, Index i, Index x) const;
    bool allows(Index j, Index i) const;

    double edge_value(const Edge& e, Index x, double a) const;
    BarrierLevel level(Index j, Index x, const Eigen::Ref<const Vector>& y) const;
    /// Smallest i in A_j whose h_{j,i} attains H^j within tol, or -1 for empty A_j.
    Index attaining_target(Index j, Index x, const Eigen::Ref<const Vector>& y, double tol) const;

private:
    BarrierSystem() = default;
    void validate() const;

    Index states_ = 0;
    BarrierForm form_ = BarrierForm::Cost;
    double cost_floor_ = 0.0;
    std::vector<std::vector<Edge>> edges_;
};

std::vector<BarrierLevel> eval_barrier(const BarrierSystem& bar, Index x, const Eigen::Ref<const Vector>& y);

struct NoLoopReport {
    bool ok = true;
    std::vector<Index> witness_cycle;  // modes j1 -> j2 -> ... -> j1 (first not repeated)
    Index witness_state = -1;
    double witness_y = 0.0;
};

/// Checks that no chain of obstacles closes on itself: for the cost form by
/// summing costs around every directed cycle at every state, for the general
/// form by scanning sampled values for fixed points of the cycle map.
NoLoopReport check_no_loop(const BarrierSystem& bar, std::uint64_t seed = 1, int samples_per_cycle = 256);

/// Stationary sub/supersolution pair, replicated across modes (N x n each).
struct Envelope {
    ModeField lower;
    ModeField upper;
};

/// Elliptic envelopes: upper^j = (-L)^{-1} sum_j (psi^j + mu^j + a_j)^+ and
/// lower^j = (-L)^{-1} min_j(psi^j + mu^j - a_j), additionally capped at 0
/// for coupled kinds, where a_j is the coupling amplitude.
Envelope build_envelope(const Generator& gen, const DriverSystem& drv, const BarrierSystem& bar);

/// Checks lower <= upper and H(upper) <= upper pointwise.
void check_envelope(const Envelope& env, const BarrierSystem& bar, double tol = 1e-12);

/// Pointwise data used to build envelopes: the lower and upper source
/// rates g_low <= f^j(x, .) + mu^j <= g_up along replicated arguments.
Vector envelope_lower_rate(const DriverSystem& drv);
Vector envelope_upper_rate(const DriverSystem& drv);

}  // namespace oswitch
