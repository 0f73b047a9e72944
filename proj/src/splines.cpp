#include "prodexp/splines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prodexp {

BSplineBasis::BSplineBasis(double a, double b, int q, int order)
    : a_(a), b_(b), q_(q), order_(order) {
    if (order < 1) throw std::invalid_argument("BSplineBasis: order must be >= 1");
    if (q < order) throw std::invalid_argument("BSplineBasis: need q >= order");
    if (!(a < b)) throw std::invalid_argument("BSplineBasis: need a < b");
    const int n_interior = q - order;
    knots_.reserve(static_cast<std::size_t>(q + order));
    for (int i = 0; i < order; ++i) knots_.push_back(a);
    for (int i = 1; i <= n_interior; ++i)
        knots_.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n_interior + 1));
    for (int i = 0; i < order; ++i) knots_.push_back(b);
}

// Triangular Cox-de Boor recursion over the active span.
int BSplineBasis::eval_nonzero(double x, double* values) const {
    x = std::clamp(x, a_, b_);
    const int p = order_ - 1;
    // Span index s with t_s <= x < t_{s+1}, restricted to [p, q-1].
    int s;
    if (x >= b_) {
        s = q_ - 1;
    } else {
        auto it = std::upper_bound(knots_.begin() + p, knots_.begin() + q_ + 1, x);
        s = static_cast<int>(it - knots_.begin()) - 1;
        s = std::clamp(s, p, q_ - 1);
    }
    double left[16], right[16];
    if (order_ > 16) throw std::invalid_argument("BSplineBasis: order > 16 unsupported");
    values[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - knots_[static_cast<std::size_t>(s + 1 - j)];
        right[j] = knots_[static_cast<std::size_t>(s + j)] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double tmp = denom != 0.0 ? values[r] / denom : 0.0;
            values[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        values[j] = saved;
    }
    return s - p;
}

Vector BSplineBasis::eval(double x) const {
    Vector out = Vector::Zero(q_);
    double v[16];
    const int j0 = eval_nonzero(x, v);
    for (int r = 0; r < order_; ++r) out[j0 + r] = v[r];
    return out;
}

Matrix BSplineBasis::matrix(const Vector& x) const {
    Matrix out = Matrix::Zero(x.size(), q_);
    double v[16];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const int j0 = eval_nonzero(x[i], v);
        for (int r = 0; r < order_; ++r) out(i, j0 + r) = v[r];
    }
    return out;
}

BSplineBasis build_basis(const Vector& x_sample, int q, int order) {
    if (x_sample.size() < 2) throw std::invalid_argument("build_basis: need at least two points");
    const double a = x_sample.minCoeff();
    const double b = x_sample.maxCoeff();
    if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("build_basis: non-finite sample");
    if (!(a < b)) throw std::invalid_argument("build_basis: degenerate sample (all values equal)");
    return BSplineBasis(a, b, q, order);
}

Vector monotone_map(const Vector& gamma_raw) {
    Vector g(gamma_raw.size());
    if (gamma_raw.size() == 0) return g;
    g[0] = gamma_raw[0];  // level term, no exp to guard
    for (Eigen::Index j = 1; j < gamma_raw.size(); ++j)
        g[j] = g[j - 1] + std::exp(std::clamp(gamma_raw[j], -kRawClamp, kRawClamp));
    return g;
}

double penalty(const Vector& gamma, double lambda) {
    if (lambda < 0) throw std::invalid_argument("penalty: lambda must be >= 0");
    double s = 0.0;
    for (Eigen::Index j = 1; j < gamma.size(); ++j) {
        const double d = gamma[j] - gamma[j - 1];
        s += d * d;
    }
    return lambda * s;
}

}  // namespace prodexp
