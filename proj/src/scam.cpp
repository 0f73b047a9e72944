#include "prodexp/scam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prodexp/kernels.hpp"

namespace prodexp {

double MonotoneSmooth::operator()(double z) const {
    if (gamma.size() == 0) return 0.0;
    double v[16];
    const int j0 = basis.eval_nonzero(z, v);
    double s = 0.0;
    for (int r = 0; r < basis.order(); ++r) s += v[r] * gamma[j0 + r];
    return s;
}

Vector MonotoneSmooth::operator()(const Vector& z) const {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = (*this)(z[i]);
    return out;
}

Vector ScamFit::increments() const {
    const Vector& g = smooth.gamma;
    if (g.size() < 2) return Vector();
    return g.tail(g.size() - 1) - g.head(g.size() - 1);
}

// Everything the increment problem needs once X has been profiled out:
//   f(c) = rr - 2 h'c + c'G c + lambda c'c,   c >= 0,
// with gamma = gamma_1 + S c and S the cumulative-sum matrix.
struct ScamDesign::Profiled {
    BSplineBasis basis;
    Matrix g;
    Vector h;
    double rr = 0.0;
    Matrix btx;  // q x p
    Vector bty;  // q
    std::vector<int> first;  // per row: first nonzero basis index
    Matrix vals;             // order x n: basis values per row
};

ScamDesign::ScamDesign(const Vector& y, const Matrix& x) : y_(y), x_(x) {
    if (x.rows() != y.size()) throw std::invalid_argument("scam: rows(X) != len(y)");
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) throw RankDeficientError("scam: X is rank deficient");
    const Vector ones = Vector::Ones(x.rows());
    const Vector resid = ones - x * qr.solve(ones);
    if (resid.norm() > 1e-8 * std::sqrt(static_cast<double>(x.rows())))
        throw std::invalid_argument("scam: X must contain an intercept");
    x_rows_ = x.transpose();
    xtx_.compute(gram(x));
    xty_ = cross(x, y);
    yty_ = y.squaredNorm();
}

ScamDesign::Profiled ScamDesign::profile(const BSplineBasis& basis, const Vector& z) const {
    const int q = basis.q(), ord = basis.order();
    const Eigen::Index n = y_.size(), p = x_.cols();
    Profiled pr;
    pr.basis = basis;
    pr.first.resize(static_cast<std::size_t>(n));
    pr.vals.resize(ord, n);

    Matrix btb = Matrix::Zero(q, q);
    // B'X accumulated as X' B so each row update is a contiguous axpy.
    Matrix xtb = Matrix::Zero(p, q);
    pr.bty = Vector::Zero(q);
    for (Eigen::Index i = 0; i < n; ++i) {
        double* v = pr.vals.col(i).data();
        const int j0 = basis.eval_nonzero(z[i], v);
        pr.first[static_cast<std::size_t>(i)] = j0;
        const double* xi = x_rows_.col(i).data();
        for (int a = 0; a < ord; ++a) {
            if (v[a] == 0.0) continue;
            pr.bty[j0 + a] += v[a] * y_[i];
            kernels::axpy(v[a], xi, xtb.col(j0 + a).data(), static_cast<std::size_t>(p));
            for (int b = a; b < ord; ++b) btb(j0 + a, j0 + b) += v[a] * v[b];
        }
    }
    btb = btb.selfadjointView<Eigen::Upper>().toDenseMatrix();
    pr.btx = xtb.transpose();

    const Matrix w_xtb = xtx_.solve(xtb);          // (X'X)^{-1} X'B
    const Vector w_xty = xtx_.solve(xty_);
    const Matrix gfull = btb - xtb.transpose() * w_xtb;
    const Vector hfull = pr.bty - xtb.transpose() * w_xty;
    pr.rr = yty_ - xty_.dot(w_xty);

    // S'GS and S'h: column j of S is 1 on rows j+1..q-1.
    const int m = q - 1;
    Matrix gs(q, m);  // G S
    for (int r = 0; r < q; ++r) {
        double acc = 0.0;
        for (int j = m - 1; j >= 0; --j) {
            acc += gfull(r, j + 1);
            gs(r, j) = acc;
        }
    }
    pr.g.resize(m, m);
    for (int c = 0; c < m; ++c) {
        double acc = 0.0;
        for (int j = m - 1; j >= 0; --j) {
            acc += gs(j + 1, c);
            pr.g(j, c) = acc;
        }
    }
    pr.g = 0.5 * (pr.g + pr.g.transpose()).eval();
    pr.h.resize(m);
    double acc = 0.0;
    for (int j = m - 1; j >= 0; --j) {
        acc += hfull[j + 1];
        pr.h[j] = acc;
    }
    return pr;
}

namespace {

struct ConstrainedSolution {
    Vector c;
    std::vector<int> passive;
    bool kkt = false;
};

// Lawson-Hanson active set for min c'Ac - 2b'c subject to c >= 0, A = G + lambda I.
ConstrainedSolution solve_nonneg(const Matrix& g, const Vector& b, double lambda, Vector c0) {
    const Eigen::Index m = b.size();
    Matrix a = g;
    a.diagonal().array() += lambda;
    // Guard singular faces when lambda is zero.
    const double jitter = 1e-13 * std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
    a.diagonal().array() += jitter;

    ConstrainedSolution sol;
    Vector c = c0.size() == m ? Vector(c0.cwiseMax(0.0)) : Vector(Vector::Zero(m));
    std::vector<char> in_p(static_cast<std::size_t>(m), 0);
    for (Eigen::Index j = 0; j < m; ++j) in_p[static_cast<std::size_t>(j)] = c[j] > 0.0;

    const double tol = 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff());
    auto solve_face = [&](Vector& s) {
        std::vector<int> idx;
        for (Eigen::Index j = 0; j < m; ++j)
            if (in_p[static_cast<std::size_t>(j)]) idx.push_back(static_cast<int>(j));
        s = Vector::Zero(m);
        if (idx.empty()) return;
        const auto k = static_cast<Eigen::Index>(idx.size());
        Matrix app(k, k);
        Vector bp(k);
        for (Eigen::Index r = 0; r < k; ++r) {
            bp[r] = b[idx[r]];
            for (Eigen::Index cc = 0; cc < k; ++cc) app(r, cc) = a(idx[r], idx[cc]);
        }
        Vector sp = app.llt().solve(bp);
        for (Eigen::Index r = 0; r < k; ++r) s[idx[r]] = sp[r];
    };

    for (int outer = 0; outer < 10 * static_cast<int>(m) + 10; ++outer) {
        for (int inner = 0; inner < 10 * static_cast<int>(m) + 10; ++inner) {
            Vector s;
            solve_face(s);
            bool feasible = true;
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (in_p[static_cast<std::size_t>(j)] && s[j] <= 0.0) {
                    feasible = false;
                    const double d = c[j] - s[j];
                    if (d > 0) alpha = std::min(alpha, c[j] / d);
                }
            }
            if (feasible) {
                c = s;
                break;
            }
            c += alpha * (s - c);
            for (Eigen::Index j = 0; j < m; ++j) {
                if (in_p[static_cast<std::size_t>(j)] && c[j] <= 1e-300) {
                    in_p[static_cast<std::size_t>(j)] = 0;
                    c[j] = 0.0;
                }
            }
        }
        const Vector w = b - a * c;
        Eigen::Index best = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!in_p[static_cast<std::size_t>(j)] && w[j] > wmax) {
                wmax = w[j];
                best = j;
            }
        }
        if (best < 0) {
            sol.kkt = true;
            break;
        }
        in_p[static_cast<std::size_t>(best)] = 1;
    }
    sol.c = c;
    for (Eigen::Index j = 0; j < m; ++j)
        if (in_p[static_cast<std::size_t>(j)]) sol.passive.push_back(static_cast<int>(j));
    return sol;
}

double smooth_edf(const Matrix& g, double lambda, const std::vector<int>& passive) {
    const auto k = static_cast<Eigen::Index>(passive.size());
    if (k == 0) return 0.0;
    Matrix gp(k, k);
    for (Eigen::Index r = 0; r < k; ++r)
        for (Eigen::Index c = 0; c < k; ++c) gp(r, c) = g(passive[r], passive[c]);
    Matrix a = gp;
    a.diagonal().array() += lambda + 1e-13 * std::max(1.0, gp.diagonal().cwiseAbs().maxCoeff());
    return a.llt().solve(gp).trace();
}

double profiled_sse(const Matrix& g, const Vector& h, double rr, const Vector& c) {
    return std::max(0.0, rr - 2.0 * h.dot(c) + c.dot(g * c));
}

bool degenerate(const Vector& z) {
    const double lo = z.minCoeff(), hi = z.maxCoeff();
    const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    return !(hi - lo > 1e-8 * scale);
}

}  // namespace

double ScamDesign::gcv(const Vector& z, double lambda, const ScamOptions& opt) const {
    const BSplineBasis basis = build_basis(z, opt.q, opt.order);
    const Profiled pr = profile(basis, z);
    const ConstrainedSolution s = solve_nonneg(pr.g, pr.h, lambda, Vector());
    const double n = static_cast<double>(y_.size());
    const double edf = static_cast<double>(p()) + smooth_edf(pr.g, lambda, s.passive);
    const double sse = profiled_sse(pr.g, pr.h, pr.rr, s.c);
    return n * sse / ((n - edf) * (n - edf));
}

namespace {

// GCV over log lambda: coarse decade grid, Newton refinement with numeric
// derivatives, Brent fallback, then a decade-neighbour check.
double select_lambda(const std::function<double(double)>& gcv_log, double lo, double hi,
                     double rel_tol) {
    const double tlo = std::log(lo), thi = std::log(hi);
    const double decade = std::log(10.0);
    double tbest = tlo, gbest = gcv_log(tlo);
    for (double t = tlo + decade; t <= thi + 1e-9; t += decade) {
        const double g = gcv_log(t);
        if (g < gbest) {
            gbest = g;
            tbest = t;
        }
    }

    auto refine = [&](double centre) {
        const double a = std::max(tlo, centre - decade), b = std::min(thi, centre + decade);
        double t = centre, g = gcv_log(t);
        bool ok = true;
        const double d = 0.05;
        for (int it = 0; it < 30; ++it) {
            const double gp = gcv_log(t + d), gm = gcv_log(t - d);
            const double g1 = (gp - gm) / (2 * d), g2 = (gp - 2 * g + gm) / (d * d);
            if (!(g2 > 0)) {
                ok = false;
                break;
            }
            const double tn = t - g1 / g2;
            if (tn < a || tn > b) {
                ok = false;
                break;
            }
            const double gn = gcv_log(tn);
            if (gn > g) {
                ok = false;
                break;
            }
            const bool done = std::abs(tn - t) < 1e-4;
            t = tn;
            g = gn;
            if (done) break;
        }
        if (!ok) {
            auto r = minimize_scalar(gcv_log, a, b, 30, 100);
            if (r.f < g) {
                t = r.x;
                g = r.f;
            }
        }
        if (g < gbest) {
            gbest = g;
            tbest = t;
        }
    };
    refine(tbest);

    for (int guard = 0; guard < 8; ++guard) {
        bool moved = false;
        for (double t : {tbest - decade, tbest + decade}) {
            if (t < tlo - 1e-9 || t > thi + 1e-9) continue;
            const double g = gcv_log(t);
            if (g < gbest * (1.0 - rel_tol)) {
                gbest = g;
                tbest = t;
                moved = true;
            }
        }
        if (!moved) break;
        refine(tbest);
    }
    return std::exp(tbest);
}

}  // namespace

ScamFit ScamDesign::fit(const Vector& z, std::optional<double> lambda, const ScamOptions& opt,
                        const Vector* warm) const {
    const Eigen::Index n = y_.size(), p = x_.cols();
    if (z.size() != n) throw std::invalid_argument("scam: len(z) != len(y)");
    if (n < opt.q + p + 1) throw std::invalid_argument("scam: too few observations");
    if (lambda && *lambda < 0) throw std::invalid_argument("scam: lambda must be >= 0");

    ScamFit fit;
    if (degenerate(z)) {
        // No usable variation: the smooth collapses into the intercept.
        fit.warnings.push_back("degenerate z: smooth forced flat (lambda at upper bound)");
        OlsFit o = ols(x_, y_, SeType::None);
        fit.beta = o.coef;
        fit.fitted = x_ * o.coef;
        fit.psi = Vector::Zero(n);
        fit.sse = o.sse;
        fit.edf = static_cast<double>(p);
        fit.gcv = static_cast<double>(n) * fit.sse /
                  ((static_cast<double>(n) - fit.edf) * (static_cast<double>(n) - fit.edf));
        fit.smooth.lambda = opt.lambda_hi;
        fit.converged = true;
        fit.bfgs_converged = true;
        return fit;
    }

    const BSplineBasis basis = build_basis(z, opt.q, opt.order);
    const Profiled pr = profile(basis, z);
    const int q = basis.q(), m = q - 1;
    const double nd = static_cast<double>(n);

    double lam;
    if (lambda) {
        lam = *lambda;
    } else {
        auto gcv_log = [&](double t) {
            const double l = std::exp(t);
            const ConstrainedSolution s = solve_nonneg(pr.g, pr.h, l, Vector());
            const double edf = static_cast<double>(p) + smooth_edf(pr.g, l, s.passive);
            return nd * profiled_sse(pr.g, pr.h, pr.rr, s.c) / ((nd - edf) * (nd - edf));
        };
        lam = select_lambda(gcv_log, opt.lambda_lo, opt.lambda_hi, opt.gcv_rel_tol);
    }

    // BFGS over raw increments c_j = exp(raw_j).
    auto objective = [&](const Vector& raw, Vector* grad) {
        Vector c(m), dc(m);
        for (int j = 0; j < m; ++j) {
            const double r = raw[j];
            const double rc = std::clamp(r, -kRawClamp, kRawClamp);
            c[j] = std::exp(rc);
            dc[j] = (r == rc) ? c[j] : 0.0;
        }
        const Vector gc = pr.g * c;
        const double f = pr.rr - 2.0 * pr.h.dot(c) + c.dot(gc) + lam * c.squaredNorm();
        if (grad) *grad = (2.0 * (gc - pr.h + lam * c)).cwiseProduct(dc);
        return f;
    };

    Vector c0;
    if (warm && warm->size() == m) {
        c0 = *warm;
    } else {
        Matrix a = pr.g;
        a.diagonal().array() += lam + 1e-10 * std::max(1.0, pr.g.diagonal().maxCoeff());
        c0 = a.ldlt().solve(pr.h);
    }
    const double cscale = std::max(1e-8, c0.cwiseAbs().maxCoeff());
    Vector raw0(m);
    for (int j = 0; j < m; ++j) raw0[j] = std::log(std::max(c0[j], 1e-4 * cscale));

    BfgsOptions bo = opt.bfgs;
    bo.record_trace = true;
    const BfgsResult br = minimize_bfgs(objective, raw0, bo);
    fit.trace = br.trace;
    fit.iterations = br.iterations;
    fit.bfgs_converged = br.converged;

    // Exact polish on the face BFGS identified; increments it drove towards
    // zero are released to the active set.
    Vector cb(m);
    for (int j = 0; j < m; ++j) cb[j] = std::exp(std::clamp(br.x[j], -kRawClamp, kRawClamp));
    const double cmax = std::max(1e-300, cb.maxCoeff());
    for (int j = 0; j < m; ++j)
        if (cb[j] < 1e-9 * cmax) cb[j] = 0.0;
    const ConstrainedSolution sol = solve_nonneg(pr.g, pr.h, lam, cb);
    fit.converged = sol.kkt;
    if (!sol.kkt) fit.warnings.push_back("scam: constrained solve did not reach KKT point");

    // gamma = gamma_1 + S c, with gamma_1 centring the smooth over the sample.
    Vector gamma(q);
    gamma[0] = 0.0;
    for (int j = 1; j < q; ++j) gamma[j] = gamma[j - 1] + sol.c[j - 1];
    double mean_psi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int j0 = pr.first[static_cast<std::size_t>(i)];
        for (int a = 0; a < basis.order(); ++a) mean_psi += pr.vals(a, i) * gamma[j0 + a];
    }
    mean_psi /= nd;
    gamma.array() -= mean_psi;

    fit.smooth.basis = basis;
    fit.smooth.lambda = lam;
    fit.smooth.gamma = gamma;
    fit.smooth.gamma_raw.resize(q);
    fit.smooth.gamma_raw[0] = gamma[0];
    for (int j = 1; j < q; ++j)
        fit.smooth.gamma_raw[j] = sol.c[j - 1] > 0 ? std::log(sol.c[j - 1]) : -kRawClamp;

    fit.psi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int j0 = pr.first[static_cast<std::size_t>(i)];
        double s = 0.0;
        for (int a = 0; a < basis.order(); ++a) s += pr.vals(a, i) * gamma[j0 + a];
        fit.psi[i] = s;
    }
    // beta = (X'X)^{-1} X'(y - B gamma)
    fit.beta = xtx_.solve(xty_ - pr.btx.transpose() * gamma);
    fit.fitted = x_ * fit.beta + fit.psi;
    fit.sse = (y_ - fit.fitted).squaredNorm();
    fit.edf = static_cast<double>(p) + smooth_edf(pr.g, lam, sol.passive);
    fit.gcv = nd * fit.sse / ((nd - fit.edf) * (nd - fit.edf));
    return fit;
}

ScamFit fit_scam(const Vector& y, const Matrix& x, const Vector& z, std::optional<double> lambda,
                 const ScamOptions& opt) {
    return ScamDesign(y, x).fit(z, lambda, opt);
}

}  // namespace prodexp
