#pragma once

#include <vector>

#include "prodexp/linalg.hpp"

namespace prodexp {

// Clamped B-spline basis on [a, b] with evenly spaced interior knots.
// order = degree + 1 (4 is cubic). q basis functions, q + order knots.
class BSplineBasis {
public:
    BSplineBasis() = default;
    BSplineBasis(double a, double b, int q = 20, int order = 4);

    int q() const noexcept { return q_; }
    int order() const noexcept { return order_; }
    double lower() const noexcept { return a_; }
    double upper() const noexcept { return b_; }
    const std::vector<double>& knots() const noexcept { return knots_; }

    // Writes the `order` possibly nonzero values at x and returns the index of
    // the first one. x outside [a, b] is clamped to the nearest boundary.
    int eval_nonzero(double x, double* values) const;
    Vector eval(double x) const;
    Matrix matrix(const Vector& x) const;  // n x q, dense

private:
    double a_ = 0.0, b_ = 1.0;
    int q_ = 0, order_ = 0;
    std::vector<double> knots_;
};

// Basis spanning [min(x), max(x)]. Throws std::invalid_argument when x has
// fewer than two distinct values or q < order.
BSplineBasis build_basis(const Vector& x_sample, int q = 20, int order = 4);

inline constexpr double kRawClamp = 30.0;

// gamma_1 = raw_1, gamma_j = gamma_{j-1} + exp(raw_j); raw_j (j >= 2) clamped
// to +-30 before exponentiating.
Vector monotone_map(const Vector& gamma_raw);

// lambda * sum_j (gamma_j - gamma_{j-1})^2
double penalty(const Vector& gamma, double lambda);

}  // namespace prodexp
