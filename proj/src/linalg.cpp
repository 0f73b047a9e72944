#include "prodexp/linalg.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "prodexp/kernels.hpp"

namespace prodexp {

Matrix gram(const Matrix& x) {
    Matrix out(x.cols(), x.cols());
    kernels::gram(x.data(), x.rows(), x.cols(), out.data());
    return out;
}

Vector cross(const Matrix& x, const Vector& y) {
    Vector out(x.cols());
    kernels::gemv_t(x.data(), x.rows(), x.cols(), y.data(), out.data());
    return out;
}

OlsFit ols(const Matrix& x, const Vector& y, SeType se) {
    const Eigen::Index n = x.rows(), p = x.cols();
    if (n != y.size()) throw std::invalid_argument("ols: dimension mismatch");
    if (n < p) throw RankDeficientError("ols: fewer rows than columns");

    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw RankDeficientError("ols: design matrix is rank deficient");

    OlsFit fit;
    fit.coef = qr.solve(y);
    fit.resid = y - x * fit.coef;
    fit.sse = fit.resid.squaredNorm();
    const double ybar = y.mean();
    const double sst = (y.array() - ybar).square().sum();
    fit.r2 = sst > 0 ? 1.0 - fit.sse / sst : 0.0;

    if (se == SeType::None) return fit;

    // (X'X)^{-1} from R of the QR: X P = Q R  =>  X'X = P R'R P'.
    const Matrix r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    Matrix rinv = r.template triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
    Matrix bread_perm = rinv * rinv.transpose();
    Matrix bread = qr.colsPermutation() * bread_perm * qr.colsPermutation().transpose();

    if (se == SeType::Classical) {
        const double s2 = n > p ? fit.sse / static_cast<double>(n - p) : 0.0;
        fit.cov = s2 * bread;
    } else {
        Matrix xe = x;
        for (Eigen::Index j = 0; j < p; ++j) xe.col(j).array() *= fit.resid.array();
        Matrix meat = gram(xe);
        const double adj = n > p ? static_cast<double>(n) / static_cast<double>(n - p) : 1.0;
        fit.cov = adj * bread * meat * bread;
    }
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

Matrix year_dummies(const std::vector<int>& years) {
    std::vector<int> uniq = years;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::map<int, Eigen::Index> col;
    for (std::size_t i = 1; i < uniq.size(); ++i) col[uniq[i]] = static_cast<Eigen::Index>(i - 1);
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(years.size()),
                            static_cast<Eigen::Index>(uniq.empty() ? 0 : uniq.size() - 1));
    for (std::size_t i = 0; i < years.size(); ++i) {
        auto it = col.find(years[i]);
        if (it != col.end()) d(static_cast<Eigen::Index>(i), it->second) = 1.0;
    }
    return d;
}

Matrix poly_features(const std::vector<Vector>& vars, int degree, bool with_const) {
    if (vars.empty()) throw std::invalid_argument("poly_features: no variables");
    const Eigen::Index n = vars.front().size();
    std::vector<Vector> cols;
    if (with_const) cols.push_back(Vector::Ones(n));
    // Enumerate nondecreasing index tuples so each monomial appears once.
    std::vector<std::size_t> idx;
    std::function<void(std::size_t, Vector)> rec = [&](std::size_t start, Vector cur) {
        if (!idx.empty()) cols.push_back(cur);
        if (static_cast<int>(idx.size()) == degree) return;
        for (std::size_t v = start; v < vars.size(); ++v) {
            idx.push_back(v);
            rec(v, idx.size() == 1 ? vars[v] : Vector(cur.cwiseProduct(vars[v])));
            idx.pop_back();
        }
    };
    rec(0, Vector::Ones(n));
    Matrix out(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = cols[j];
    return out;
}

Matrix hcat(const std::vector<Matrix>& blocks) {
    Eigen::Index rows = -1, cols = 0;
    for (const auto& b : blocks) {
        if (b.cols() == 0) continue;
        if (rows >= 0 && b.rows() != rows) throw std::invalid_argument("hcat: row mismatch");
        rows = b.rows();
        cols += b.cols();
    }
    Matrix out(std::max<Eigen::Index>(rows, 0), cols);
    Eigen::Index c = 0;
    for (const auto& b : blocks) {
        if (b.cols() == 0) continue;
        out.middleCols(c, b.cols()) = b;
        c += b.cols();
    }
    return out;
}

}  // namespace prodexp
