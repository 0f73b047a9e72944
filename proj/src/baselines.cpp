#include "prodexp/baselines.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace prodexp {

namespace {

Vector column(const Panel& p, double FirmYear::*f) {
    Vector v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v[static_cast<Eigen::Index>(i)] = p[i].*f;
    return v;
}

EstimationResult ols_result(const OlsFit& f, Method m, Eigen::Index il, Eigen::Index ik,
                            const Panel& p, std::size_t n) {
    EstimationResult r;
    r.method = m;
    r.spec.beta_l = f.coef[il];
    r.spec.beta_k = f.coef[ik];
    r.std_errors["beta_l"] = f.se[il];
    r.std_errors["beta_k"] = f.se[ik];
    if (f.cov.size())
        r.std_errors["beta_l+beta_k"] = std::sqrt(f.cov(il, il) + f.cov(ik, ik) + 2.0 * f.cov(il, ik));
    r.objective = f.sse;
    r.converged = true;
    r.n_obs = n;
    r.n_firms = p.n_firms();
    return r;
}

void fill_year_effects(EstimationResult& r, const std::vector<int>& years, const Vector& coef,
                       Eigen::Index first) {
    std::set<int> ys(years.begin(), years.end());
    auto it = ys.begin();
    if (it == ys.end()) return;
    r.spec.year_effects[*it++] = 0.0;
    for (Eigen::Index j = first; j < coef.size() && it != ys.end(); ++j, ++it) r.spec.year_effects[*it] = coef[j];
}

}  // namespace

EstimationResult ols_levels(const Panel& panel) {
    const Eigen::Index n = static_cast<Eigen::Index>(panel.size());
    Matrix base(n, 3);
    base.col(0).setOnes();
    base.col(1) = column(panel, &FirmYear::l);
    base.col(2) = column(panel, &FirmYear::k);
    const auto years = panel.years();
    const Matrix x = hcat({base, year_dummies(years)});
    const OlsFit f = ols(x, column(panel, &FirmYear::y), SeType::Classical);
    EstimationResult r = ols_result(f, Method::OLS, 1, 2, panel, panel.size());
    r.spec.beta0 = f.coef[0];
    fill_year_effects(r, years, f.coef, 3);
    return r;
}

EstimationResult ols_fd(const Panel& panel) {
    const auto pairs = join_lead(panel, 1);
    if (pairs.size() < 3) throw DataError("insufficient_within_variation", "ols_fd: insufficient within variation (need consecutive periods)");
    const auto n = static_cast<Eigen::Index>(pairs.size());
    Matrix base(n, 3);
    Vector dy(n);
    std::vector<int> years;
    for (Eigen::Index i = 0; i < n; ++i) {
        const FirmYear& a = panel[pairs[static_cast<std::size_t>(i)].current];
        const FirmYear& b = panel[pairs[static_cast<std::size_t>(i)].lead];
        base(i, 0) = 1.0;
        base(i, 1) = b.l - a.l;
        base(i, 2) = b.k - a.k;
        dy[i] = b.y - a.y;
        years.push_back(b.year);
    }
    const Matrix x = hcat({base, year_dummies(years)});
    OlsFit f;
    try {
        f = ols(x, dy, SeType::Classical);
    } catch (const RankDeficientError&) {
        throw DataError("insufficient_within_variation", "ols_fd: insufficient within variation");
    }
    return ols_result(f, Method::OLS_FD, 1, 2, panel, pairs.size());
}

EstimationResult ols_fe(const Panel& panel) {
    const auto years = panel.years();
    const Matrix d = year_dummies(years);
    const Eigen::Index n = static_cast<Eigen::Index>(panel.size());
    Matrix x(n, 2 + d.cols());
    x.col(0) = column(panel, &FirmYear::l);
    x.col(1) = column(panel, &FirmYear::k);
    x.rightCols(d.cols()) = d;
    Vector y = column(panel, &FirmYear::y);

    std::size_t start = 0, groups = 0;
    while (start < panel.size()) {
        std::size_t end = start;
        while (end < panel.size() && panel[end].firm_id == panel[start].firm_id) ++end;
        const auto s = static_cast<Eigen::Index>(start), len = static_cast<Eigen::Index>(end - start);
        y.segment(s, len).array() -= y.segment(s, len).mean();
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            x.col(j).segment(s, len).array() -= x.col(j).segment(s, len).mean();
        ++groups;
        start = end;
    }
    if (panel.size() <= groups + 2)
        throw DataError("insufficient_within_variation", "ols_fe: insufficient within variation");
    OlsFit f;
    try {
        f = ols(x, y, SeType::None);
    } catch (const RankDeficientError&) {
        throw DataError("insufficient_within_variation", "ols_fe: insufficient within variation");
    }
    // Degrees of freedom lose one per firm mean.
    const double dof = static_cast<double>(n) - static_cast<double>(groups) - static_cast<double>(x.cols());
    const Matrix xtx = gram(x);
    f.cov = (f.sse / dof) * xtx.inverse();
    f.se = f.cov.diagonal().cwiseSqrt();
    return ols_result(f, Method::OLS_FE, 0, 1, panel, panel.size());
}

namespace {

struct ProxySample {
    Panel panel;
    std::size_t dropped = 0;
};

ProxySample proxy_sample(const Panel& panel, const std::vector<std::string>& req) {
    ProxySample s;
    ValidatedPanel v = validate_panel(panel, req);
    for (const auto& kv : v.dropped) s.dropped += kv.second;
    s.panel = std::move(v.panel);
    return s;
}

Matrix orthonormal(const Matrix& x) {
    Eigen::HouseholderQR<Matrix> qr(x);
    return qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
}

// Stage 1: y on [extra | poly(vars) | year dummies]. Returns the fit and the
// design so callers can split out the extra block.
struct Stage1 {
    OlsFit fit;
    Matrix x;
    Vector fitted;
};

Stage1 stage1(const Panel& p, const Matrix& extra, const std::vector<Vector>& vars,
              const ProxyConfig& cfg) {
    if (cfg.poly_degree < 1) throw std::invalid_argument("proxy: poly_degree must be >= 1");
    Matrix poly = hcat({poly_features(vars, cfg.poly_degree, true), year_dummies(p.years())});
    if (cfg.orthogonalize) poly = orthonormal(poly);
    Stage1 s;
    s.x = hcat({extra, poly});
    s.fit = ols(s.x, column(p, &FirmYear::y), SeType::None);
    s.fitted = s.x * s.fit.coef;
    return s;
}

Vector opt_column(const Panel& p, std::optional<double> FirmYear::*f) {
    Vector v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v[static_cast<Eigen::Index>(i)] = *(p[i].*f);
    return v;
}

// omega_t on (1, omega_{t-1}); returns xi-hat.
Vector ar1_innovations(const Vector& w_t, const Vector& w_lag) {
    const auto n = w_t.size();
    const double mt = w_t.mean(), ml = w_lag.mean();
    double sxy = 0, sxx = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        sxy += (w_lag[i] - ml) * (w_t[i] - mt);
        sxx += (w_lag[i] - ml) * (w_lag[i] - ml);
    }
    const double rho = sxx > 0 ? sxy / sxx : 0.0;
    const double c = mt - rho * ml;
    return w_t.array() - c - rho * w_lag.array();
}

EstimationResult two_step_proxy(const Panel& panel, std::optional<double> FirmYear::*proxy,
                                const char* proxy_field, Method method, const ProxyConfig& cfg) {
    ProxySample s = proxy_sample(panel, {"y", "l", "k", proxy_field});
    const Panel& p = s.panel;
    const Vector l = column(p, &FirmYear::l), k = column(p, &FirmYear::k);
    Matrix extra(l.size(), 1);
    extra.col(0) = l;
    Stage1 st;
    try {
        st = stage1(p, extra, {k, opt_column(p, proxy)}, cfg);
    } catch (const RankDeficientError& e) {
        throw RankDeficientError(std::string(method_name(method)) + " stage 1: " + e.what());
    }
    const double bl = st.fit.coef[0];
    const Vector phi = st.fitted - bl * l;

    const auto pairs = join_lead(p, 1);
    if (pairs.size() < 3) throw DataError("insufficient_panel", "proxy stage 2: need consecutive periods");
    const auto m = static_cast<Eigen::Index>(pairs.size());
    Vector phi_t(m), phi_l(m), k_t(m), k_l(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& pr = pairs[static_cast<std::size_t>(i)];
        phi_t[i] = phi[static_cast<Eigen::Index>(pr.lead)];
        phi_l[i] = phi[static_cast<Eigen::Index>(pr.current)];
        k_t[i] = k[static_cast<Eigen::Index>(pr.lead)];
        k_l[i] = k[static_cast<Eigen::Index>(pr.current)];
    }
    auto moment = [&](double bk) {
        const Vector xi = ar1_innovations(phi_t - bk * k_t, phi_l - bk * k_l);
        const double g = xi.dot(k_t) / static_cast<double>(m);
        return g * g;
    };
    double best = cfg.grid_lo, fbest = moment(best);
    const double step = (cfg.grid_hi - cfg.grid_lo) / (cfg.grid_points - 1);
    for (int i = 1; i < cfg.grid_points; ++i) {
        const double b = cfg.grid_lo + step * i;
        const double f = moment(b);
        if (f < fbest) {
            fbest = f;
            best = b;
        }
    }
    const auto r1 = minimize_scalar(moment, best - step, best + step, 52, 200);
    const double bk = r1.f <= fbest ? r1.x : best;

    EstimationResult r;
    r.method = method;
    r.spec.beta_l = bl;
    r.spec.beta_k = bk;
    r.objective = std::min(r1.f, fbest);
    r.iterations = r1.evaluations;
    r.converged = true;
    r.n_obs = p.size();
    r.n_firms = p.n_firms();
    if (s.dropped) r.warnings.push_back(std::to_string(s.dropped) + " row(s) dropped for missing " + proxy_field);
    return r;
}

}  // namespace

EstimationResult op_fit(const Panel& panel, const ProxyConfig& cfg) {
    return two_step_proxy(panel, &FirmYear::inv, "inv", Method::OP, cfg);
}

EstimationResult lp_fit(const Panel& panel, const ProxyConfig& cfg) {
    return two_step_proxy(panel, &FirmYear::m, "m", Method::LP, cfg);
}

Vector proxy_stage1_fitted(const Panel& panel, const std::string& which, const ProxyConfig& cfg) {
    if (which == "acf") {
        const Panel p = validate_panel(panel, {"y", "l", "k", "m"}).panel;
        return stage1(p, Matrix(static_cast<Eigen::Index>(p.size()), 0),
                      {column(p, &FirmYear::k), column(p, &FirmYear::l), opt_column(p, &FirmYear::m)}, cfg)
            .fitted;
    }
    const bool op = which == "op";
    if (!op && which != "lp") throw std::invalid_argument("proxy_stage1_fitted: unknown estimator " + which);
    const Panel p = validate_panel(panel, {"y", "l", "k", op ? "inv" : "m"}).panel;
    Matrix extra(static_cast<Eigen::Index>(p.size()), 1);
    extra.col(0) = column(p, &FirmYear::l);
    return stage1(p, extra, {column(p, &FirmYear::k), opt_column(p, op ? &FirmYear::inv : &FirmYear::m)}, cfg)
        .fitted;
}

EstimationResult acf_fit(const Panel& panel, const ProxyConfig& cfg) {
    ProxySample s = proxy_sample(panel, {"y", "l", "k", "m"});
    const Panel& p = s.panel;
    const Vector l = column(p, &FirmYear::l), k = column(p, &FirmYear::k);
    Stage1 st;
    try {
        st = stage1(p, Matrix(l.size(), 0), {k, l, opt_column(p, &FirmYear::m)}, cfg);
    } catch (const RankDeficientError& e) {
        throw RankDeficientError(std::string("ACF stage 1: ") + e.what());
    }
    const Vector& phi = st.fitted;

    const auto pairs = join_lead(p, 1);
    if (pairs.size() < 3) throw DataError("insufficient_panel", "acf: need consecutive periods");
    const auto m = static_cast<Eigen::Index>(pairs.size());
    Vector phi_t(m), phi_l(m), k_t(m), k_l(m), l_t(m), l_l(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& pr = pairs[static_cast<std::size_t>(i)];
        const auto a = static_cast<Eigen::Index>(pr.current), b = static_cast<Eigen::Index>(pr.lead);
        phi_t[i] = phi[b];
        phi_l[i] = phi[a];
        k_t[i] = k[b];
        k_l[i] = k[a];
        l_t[i] = l[b];
        l_l[i] = l[a];
    }
    auto contributions = [&](const Vector& th, Matrix& z) {
        const Vector xi = ar1_innovations(phi_t - th[0] * l_t - th[1] * k_t, phi_l - th[0] * l_l - th[1] * k_l);
        z.resize(m, 2);
        z.col(0) = xi.cwiseProduct(k_t);
        z.col(1) = xi.cwiseProduct(l_l);
    };

    const EstimationResult start = ols_levels(p);
    Vector th0(2);
    th0 << start.spec.beta_l, start.spec.beta_k;

    // Weight: inverse covariance of the moment contributions at the start.
    Matrix z0;
    contributions(th0, z0);
    const Matrix zc = z0.rowwise() - z0.colwise().mean();
    const Matrix s0 = (zc.transpose() * zc) / static_cast<double>(m);
    const Matrix w = s0.inverse();

    auto q = [&](const Vector& th) {
        Matrix z;
        contributions(th, z);
        const Vector g = z.colwise().mean().transpose();
        return g.dot(w * g);
    };
    Objective obj = [&](const Vector& th, Vector* grad) {
        if (grad) *grad = numeric_gradient(q, th, 1e-6);
        return q(th);
    };
    const BfgsResult br = minimize_bfgs(obj, th0, cfg.optimizer);

    EstimationResult r;
    r.method = Method::ACF;
    r.spec.beta_l = br.x[0];
    r.spec.beta_k = br.x[1];
    r.objective = br.f;
    r.iterations = br.iterations;
    r.converged = br.converged;
    r.n_obs = p.size();
    r.n_firms = p.n_firms();
    if (!br.converged) r.warnings.push_back("acf: optimizer did not converge: " + br.message);
    if (s.dropped) r.warnings.push_back(std::to_string(s.dropped) + " row(s) dropped for missing m");
    return r;
}

bool plausible(const EstimationResult& r) {
    return r.spec.beta_l > 0 && r.spec.beta_l < 1 && r.spec.beta_k > 0 && r.spec.beta_k < 1;
}

FilteredResults filter_plausible(const std::vector<EstimationResult>& results) {
    FilteredResults f;
    f.n_in = results.size();
    for (const auto& r : results)
        if (plausible(r)) f.kept.push_back(r);
    f.n_kept = f.kept.size();
    return f;
}

}  // namespace prodexp
