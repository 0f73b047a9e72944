#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prodexp/linalg.hpp"
#include "prodexp/optim.hpp"
#include "prodexp/splines.hpp"

namespace prodexp {

struct MonotoneSmooth {
    Vector gamma_raw;  // unconstrained parameters, see monotone_map
    Vector gamma;      // constrained, nondecreasing coefficients
    double lambda = 0.0;
    BSplineBasis basis;

    double operator()(double z) const;
    Vector operator()(const Vector& z) const;
};

struct ScamOptions {
    int q = 20;
    int order = 4;
    double lambda_lo = 1e-8;
    double lambda_hi = 1e8;
    BfgsOptions bfgs{};
    // Tolerance for the local-optimality check on the GCV search.
    double gcv_rel_tol = 1e-6;
};

struct ScamFit {
    Vector beta;  // linear coefficients, intercept absorbs the smooth's mean
    MonotoneSmooth smooth;
    Vector fitted;
    Vector psi;  // centred smooth at the sample z
    double sse = 0.0;
    double gcv = 0.0;
    double edf = 0.0;
    bool converged = false;  // KKT conditions hold at the returned solution
    bool bfgs_converged = false;
    int iterations = 0;
    std::vector<double> trace;  // penalized objective per BFGS iterate
    std::vector<std::string> warnings;

    // Increments gamma_j - gamma_{j-1}, j >= 2. Useful as a warm start.
    Vector increments() const;
};

// Precomputes everything that depends only on (y, X) so that many fits over
// different z are cheap. X must have full column rank and contain an
// intercept (a constant vector in its column space).
class ScamDesign {
public:
    ScamDesign(const Vector& y, const Matrix& x);

    // lambda = nullopt selects lambda by GCV. warm, if given, seeds BFGS with
    // increments from an earlier fit.
    ScamFit fit(const Vector& z, std::optional<double> lambda, const ScamOptions& opt = {},
                const Vector* warm = nullptr) const;

    // GCV profile without running BFGS: exact constrained solve at lambda.
    double gcv(const Vector& z, double lambda, const ScamOptions& opt = {}) const;

    Eigen::Index n() const noexcept { return y_.size(); }
    Eigen::Index p() const noexcept { return x_.cols(); }

private:
    struct Profiled;
    Profiled profile(const BSplineBasis& basis, const Vector& z) const;

    Vector y_;
    Matrix x_;
    Matrix x_rows_;  // row-major copy (p x n col-major == X')
    Eigen::LDLT<Matrix> xtx_;
    Vector xty_;
    double yty_ = 0.0;
};

ScamFit fit_scam(const Vector& y, const Matrix& x, const Vector& z,
                 std::optional<double> lambda = std::nullopt, const ScamOptions& opt = {});

}  // namespace prodexp
