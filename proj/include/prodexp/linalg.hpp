#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace prodexp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RankDeficientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SeType { None, Classical, HC1 };

struct OlsFit {
    Vector coef;
    Vector se;
    Matrix cov;
    Vector resid;
    double sse = 0.0;
    double r2 = 0.0;
};

// X'X and X'y through the dispatched kernels.
Matrix gram(const Matrix& x);
Vector cross(const Matrix& x, const Vector& y);

// Least squares by column-pivoted QR. Throws RankDeficientError when X does
// not have full column rank.
OlsFit ols(const Matrix& x, const Vector& y, SeType se = SeType::Classical);

// Indicator columns for each distinct year except the first (sorted).
Matrix year_dummies(const std::vector<int>& years);

// All monomials of total degree 1..degree in the given columns, including
// interactions; a leading column of ones when with_const is set.
Matrix poly_features(const std::vector<Vector>& vars, int degree, bool with_const = true);

// Horizontal concatenation.
Matrix hcat(const std::vector<Matrix>& blocks);

}  // namespace prodexp
