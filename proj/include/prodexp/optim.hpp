#pragma once

#include <functional>
#include <string>
#include <vector>

#include "prodexp/linalg.hpp"

namespace prodexp {

// f(x) and, when grad is non-null, its gradient.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct BfgsOptions {
    int max_iter = 2000;
    double grad_tol = 1e-8;      // max-norm of the gradient
    double rel_obj_tol = 1e-12;  // |f_k - f_{k+1}| / |f_k|
    bool record_trace = false;
};

struct BfgsResult {
    Vector x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  // objective at each accepted iterate
    std::string message;
};

BfgsResult minimize_bfgs(const Objective& fn, const Vector& x0, const BfgsOptions& opt = {});

struct Scalar1dResult {
    double x = 0.0;
    double f = 0.0;
    int evaluations = 0;
};

// Brent (golden section with parabolic steps) on [lo, hi].
Scalar1dResult minimize_scalar(const std::function<double(double)>& f, double lo, double hi,
                               int bits = 40, int max_eval = 200);

// Central-difference gradient, step scaled by max(1, |x_i|).
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                        double h = 1e-6);

}  // namespace prodexp
