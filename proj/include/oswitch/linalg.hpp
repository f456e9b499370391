#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oswitch {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Values indexed by (mode, state): row j, column x.
using ModeField = Eigen::MatrixXd;

/// One ModeField per time step 0..K.
using FieldPath = std::vector<ModeField>;

/// (kernel · values)(x) with a fixed left-to-right summation order, so that
/// scalar and system solvers produce bitwise-identical continuations.
inline double continuation(const Matrix& kernel, Index x, const double* values, Index n) {
    double acc = 0.0;
    for (Index y = 0; y < n; ++y) acc += kernel(x, y) * values[y];
    return acc;
}

inline double sup_norm(const FieldPath& a) {
    double m = 0.0;
    for (const auto& f : a) m = std::max(m, f.cwiseAbs().maxCoeff());
    return m;
}

inline double sup_distance(const FieldPath& a, const FieldPath& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return m;
}

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace oswitch
