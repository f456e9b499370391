#pragma once

#include "oswitch/bsde_dp.hpp"

namespace oswitch::detail {

/// One configuration of the backward Picard scheme. The row equation at
/// (k, j, x) is
///   y = (P Y_{k+1}^j)(x) + dt f^j(x, z) + dt mu^j(x) + dt n (y - h)^-
/// with z the frozen iterate at t_k except z^j = y, h = H^j(x, z), and the
/// result is optionally lifted to max(y, h).
struct PicardProblem {
    const Matrix* kernel = nullptr;
    TimeGrid grid;
    const DriverSystem* drv = nullptr;
    const BarrierSystem* bar = nullptr;
    bool reflect = false;
    double penalty = 0.0;
    ModeField terminal;
    FieldPath start;
    const FieldPath* upper = nullptr;
    PicardOptions opts;
};

struct RowSolve {
    double root = 0.0;
    int iterations = 0;
};

/// Root of y - dt f(y) - dt penalty (h - y)^+ = rhs (no penalty when h is the
/// empty-set sentinel). The initial guess depends only on rhs, so equal
/// inputs give bitwise-equal roots in every solver.
RowSolve solve_row(double rhs, double dt, const std::function<double(double)>& f,
                   const std::function<double(double)>& df, double penalty, BarrierLevel h);

FieldPath zero_path(Index K, Index N, Index n);

BsdeSolution run_picard(const PicardProblem& problem);

double solution_scale(const PathEnvelope& env);

}  // namespace oswitch::detail
