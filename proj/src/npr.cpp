#include "prodexp/npr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "prodexp/parallel.hpp"
#include "prodexp/rng.hpp"

namespace prodexp {

std::vector<std::pair<double, double>> NprConfig::default_grid() {
    const double pts[] = {0.05, 0.333, 0.617, 0.9};
    std::vector<std::pair<double, double>> g;
    for (double bk : pts)
        for (double bl : pts) g.emplace_back(bk, bl);
    return g;
}

NprData npr_data(const Panel& panel) {
    NprData d;
    const auto pairs = join_lead(panel, 1);
    std::vector<double> y, k, l, kn, my, ml, s2;
    bool any_belief = false;
    for (const auto& pr : pairs) {
        const FirmYear& r = panel[pr.current];
        const BeliefDistribution* by = r.belief("y");
        const BeliefDistribution* bl = r.belief("l");
        if (by || bl) any_belief = true;
        if (!by || !bl) continue;
        if (!std::isfinite(by->mu) || !std::isfinite(bl->mu) || !std::isfinite(bl->sigma2)) continue;
        const double knext = panel[pr.lead].k;
        if (!std::isfinite(r.y) || !std::isfinite(r.l) || !std::isfinite(r.k) || !std::isfinite(knext))
            continue;
        y.push_back(r.y);
        k.push_back(r.k);
        l.push_back(r.l);
        kn.push_back(knext);
        my.push_back(by->mu);
        ml.push_back(bl->mu);
        s2.push_back(bl->sigma2);
        d.year.push_back(r.year);
        d.firm.push_back(r.firm_id);
        d.panel_row.push_back(pr.current);
    }
    if (!any_belief) {
        for (const auto& r : panel.rows())
            if (r.belief("y") || r.belief("l")) any_belief = true;
        if (!any_belief) throw DataError("missing_beliefs", "npr: beliefs about y and l are missing on every row");
    }
    if (y.empty()) throw DataError("no_usable_observations", "no usable observations");
    auto vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))); };
    d.y = vec(y);
    d.k = vec(k);
    d.l = vec(l);
    d.k_next = vec(kn);
    d.mu_y = vec(my);
    d.mu_l = vec(ml);
    d.s2_l = vec(s2);
    d.shift = Vector::Zero(d.y.size());
    d.n_firms = std::set<std::string>(d.firm.begin(), d.firm.end()).size();
    return d;
}

double npr_z(double mu_y, double mu_l, double sigma2_l, double k_next, const ProductionSpec& b) {
    double z = mu_y - b.beta_k * k_next - b.beta_l * mu_l;
    if (b.family == Family::Translog) {
        z -= b.beta_k2.value_or(0.0) * k_next * k_next;
        z -= b.beta_l2.value_or(0.0) * (sigma2_l + mu_l * mu_l);
        z -= b.beta_lk.value_or(0.0) * k_next * mu_l;
    }
    return z;
}

double npr_z(const FirmYear& row, double k_next, const ProductionSpec& beta) {
    const BeliefDistribution* by = row.belief("y");
    const BeliefDistribution* bl = row.belief("l");
    if (!by) throw DataError("missing_belief_mu_y", "npr_z: row lacks belief_mu_y");
    if (!bl) throw DataError("missing_belief_mu_l", "npr_z: row lacks belief_mu_l / belief_sigma2_l");
    return npr_z(by->mu, bl->mu, bl->sigma2, k_next, beta);
}

namespace {

int n_coef(Family f) { return f == Family::Translog ? 5 : 2; }

ProductionSpec spec_from(const Vector& b, Family f) {
    ProductionSpec s;
    s.family = f;
    s.beta_k = b[0];
    s.beta_l = b[1];
    if (f == Family::Translog) {
        s.beta_k2 = b[2];
        s.beta_l2 = b[3];
        s.beta_lk = b[4];
    }
    return s;
}

// Columns: 1, k, l, [k^2, l^2, k l], year dummies.
Matrix npr_design(const NprData& d, Family f) {
    const Eigen::Index n = d.y.size();
    std::vector<Matrix> blocks;
    Matrix base(n, f == Family::Translog ? 6 : 3);
    base.col(0).setOnes();
    base.col(1) = d.k;
    base.col(2) = d.l;
    if (f == Family::Translog) {
        base.col(3) = d.k.cwiseProduct(d.k);
        base.col(4) = d.l.cwiseProduct(d.l);
        base.col(5) = d.k.cwiseProduct(d.l);
    }
    blocks.push_back(base);
    blocks.push_back(year_dummies(d.year));
    return hcat(blocks);
}

// The backfitting map: coefficients of the scam fit given Z(beta).
class Backfit {
public:
    Backfit(const NprData& d, const NprConfig& cfg)
        : d_(d), cfg_(cfg), nc_(n_coef(cfg.family)), design_(d.y, npr_design(d, cfg.family)) {}

    Vector z(const Vector& b) const {
        Vector out(d_.y.size());
        const ProductionSpec s = spec_from(b, cfg_.family);
        for (Eigen::Index i = 0; i < out.size(); ++i)
            out[i] = npr_z(d_.mu_y[i], d_.mu_l[i], d_.s2_l[i], d_.k_next[i], s) - d_.shift[i];
        return out;
    }

    Vector coefs(const ScamFit& f) const { return f.beta.segment(1, nc_); }

    ScamFit fit(const Vector& b, std::optional<double> lambda, const Vector* warm = nullptr) const {
        return design_.fit(z(b), lambda, cfg_.scam, warm);
    }

    int nc() const { return nc_; }

    Vector clip(Vector b) const {
        for (int j = 0; j < nc_; ++j) {
            if (j < 2)
                b[j] = std::clamp(b[j], cfg_.box_lo, cfg_.box_hi);
            else
                b[j] = std::clamp(b[j], -cfg_.box2, cfg_.box2);
        }
        return b;
    }

    bool on_box(const Vector& b) const {
        for (int j = 0; j < nc_; ++j) {
            const double lo = j < 2 ? cfg_.box_lo : -cfg_.box2;
            const double hi = j < 2 ? cfg_.box_hi : cfg_.box2;
            if (b[j] <= lo + 1e-9 || b[j] >= hi - 1e-9) return true;
        }
        return false;
    }

private:
    const NprData& d_;
    const NprConfig& cfg_;
    int nc_;
    ScamDesign design_;
};

void note_sse(NprStart& s, double sse) {
    if (s.sse_trace.size() >= 2 && sse > s.sse_trace.back() + 1e-9) ++s.sse_increases;
    s.sse_trace.push_back(sse);
}

NprStart run_picard(const Backfit& bf, const NprConfig& cfg, Vector b) {
    NprStart s;
    ScamFit f;
    for (int it = 1; it <= cfg.max_backfit_iters; ++it) {
        f = bf.fit(b, cfg.lambda);
        const Vector t = bf.coefs(f);
        note_sse(s, f.sse);
        const double d = (t - b).norm();
        b = t;
        s.iterations = it;
        if (!b.allFinite()) {
            s.message = "non-finite coefficients";
            break;
        }
        if (d < cfg.tol) {
            s.converged = true;
            break;
        }
    }
    s.beta = b;
    s.sse = f.sse;
    s.lambda = f.smooth.lambda;
    s.residual = (bf.coefs(bf.fit(b, f.smooth.lambda)) - b).norm();
    if (!s.converged && s.message.empty()) s.message = "max iterations reached";
    return s;
}

NprStart run_newton(const Backfit& bf, const NprConfig& cfg, Vector b) {
    NprStart s;
    const int nc = bf.nc();
    // One plain backfitting step moves the start onto the map's range.
    ScamFit f = bf.fit(b, cfg.lambda);
    b = bf.clip(bf.coefs(f));
    f = bf.fit(b, cfg.lambda);
    Vector t = bf.coefs(f);
    note_sse(s, f.sse);
    int it = 1;
    for (; it <= cfg.max_backfit_iters; ++it) {
        const Vector fb = t - b;
        if (fb.norm() < cfg.tol) {
            s.converged = true;
            break;
        }
        const double lam = f.smooth.lambda;
        const Vector warm = f.increments();
        // Differences are taken at a fixed lambda so GCV noise stays out of J.
        const Vector base = bf.coefs(bf.fit(b, lam, &warm));
        Matrix jac(nc, nc);
        for (int j = 0; j < nc; ++j) {
            Vector bp = b;
            bp[j] += cfg.fd_step;
            jac.col(j) = (bf.coefs(bf.fit(bp, lam, &warm)) - base) / cfg.fd_step;
        }
        jac -= Matrix::Identity(nc, nc);
        Vector step = jac.colPivHouseholderQr().solve(-fb);
        if (!step.allFinite()) {
            s.message = "singular Jacobian";
            break;
        }
        const double norm = step.norm();
        if (norm > cfg.max_step) step *= cfg.max_step / norm;

        bool accepted = false;
        double alpha = 1.0;
        for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
            const Vector bn = bf.clip(b + alpha * step);
            ScamFit fn = bf.fit(bn, cfg.lambda, &warm);
            const Vector tn = bf.coefs(fn);
            if ((tn - bn).norm() < fb.norm()) {
                b = bn;
                t = tn;
                f = std::move(fn);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            s.message = "line search failed";
            break;
        }
        note_sse(s, f.sse);
    }
    s.iterations = std::min(it, cfg.max_backfit_iters);
    s.beta = b;
    s.sse = f.sse;
    s.lambda = f.smooth.lambda;
    s.residual = (t - b).norm();
    if (!s.converged && s.residual < cfg.tol) s.converged = true;
    if (s.converged && bf.on_box(b)) {
        s.converged = false;
        s.message = "stuck on coefficient box";
    }
    if (!s.converged && s.message.empty()) s.message = "max iterations reached";
    return s;
}

}  // namespace

NprFit npr_fit(const NprData& data, const NprConfig& cfg) {
    if (!(cfg.tol > 0)) throw std::invalid_argument("npr: tol must be > 0");
    if (cfg.init_grid.empty()) throw std::invalid_argument("npr: empty initialization grid");
    const Backfit bf(data, cfg);
    const int nc = bf.nc();

    NprFit out;
    out.starts.resize(cfg.init_grid.size());
    const int ng = static_cast<int>(cfg.init_grid.size());
    const int threads = resolve_threads(cfg.threads);
    std::vector<std::string> errors(cfg.init_grid.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int g = 0; g < ng; ++g) {
        Vector b0 = Vector::Zero(nc);
        b0[0] = cfg.init_grid[static_cast<std::size_t>(g)].first;
        b0[1] = cfg.init_grid[static_cast<std::size_t>(g)].second;
        try {
            NprStart s = cfg.scheme == NprConfig::Scheme::Newton ? run_newton(bf, cfg, b0)
                                                                  : run_picard(bf, cfg, b0);
            s.beta_k0 = b0[0];
            s.beta_l0 = b0[1];
            out.starts[static_cast<std::size_t>(g)] = std::move(s);
        } catch (const std::exception& e) {
            NprStart s;
            s.beta_k0 = b0[0];
            s.beta_l0 = b0[1];
            s.beta = Vector::Constant(nc, std::nan(""));
            s.sse = std::numeric_limits<double>::infinity();
            s.message = e.what();
            out.starts[static_cast<std::size_t>(g)] = std::move(s);
        }
    }

    // Smallest sse among converged runs; ties broken by start index.
    int best = -1;
    for (int g = 0; g < ng; ++g) {
        const auto& s = out.starts[static_cast<std::size_t>(g)];
        if (s.converged && (best < 0 || s.sse < out.starts[static_cast<std::size_t>(best)].sse)) best = g;
    }
    const bool any_converged = best >= 0;
    if (!any_converged) {
        for (int g = 0; g < ng; ++g) {
            const auto& s = out.starts[static_cast<std::size_t>(g)];
            if (std::isfinite(s.sse) && (best < 0 || s.sse < out.starts[static_cast<std::size_t>(best)].sse))
                best = g;
        }
    }
    if (best < 0) throw std::runtime_error("npr: every start failed: " + out.starts.front().message);
    out.winner = best;
    const NprStart& w = out.starts[static_cast<std::size_t>(best)];

    out.scam = bf.fit(w.beta, w.lambda);
    EstimationResult& r = out.result;
    r.method = cfg.family == Family::Translog ? Method::NPR_Translog : Method::NPR;
    r.spec = spec_from(w.beta, cfg.family);
    r.spec.beta0 = out.scam.beta[0];
    {
        std::set<int> yrs(data.year.begin(), data.year.end());
        auto it = yrs.begin();
        if (it != yrs.end()) r.spec.year_effects[*it++] = 0.0;
        for (Eigen::Index j = 1 + nc; j < out.scam.beta.size() && it != yrs.end(); ++j, ++it)
            r.spec.year_effects[*it] = out.scam.beta[j];
    }
    r.objective = w.sse;
    r.iterations = w.iterations;
    r.converged = any_converged;
    r.n_obs = data.size();
    r.n_firms = data.n_firms;
    if (!any_converged) r.warnings.push_back("npr: no start converged; best-effort coefficients");
    if (w.sse_increases > 0)
        r.warnings.push_back("npr: backfit sse increased on " + std::to_string(w.sse_increases) +
                             " accepted step(s) after the second");
    for (const auto& wmsg : out.scam.warnings) r.warnings.push_back(wmsg);
    return out;
}

namespace {

// Rows grouped by firm, in data order.
std::vector<std::vector<std::size_t>> firm_blocks(const NprData& d) {
    std::vector<std::vector<std::size_t>> blocks;
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto [it, fresh] = idx.emplace(d.firm[i], blocks.size());
        if (fresh) blocks.emplace_back();
        blocks[it->second].push_back(i);
    }
    return blocks;
}

NprData take_rows(const NprData& d, const std::vector<std::size_t>& rows,
                  const std::vector<std::string>& firm_labels) {
    NprData o;
    const auto n = static_cast<Eigen::Index>(rows.size());
    o.y.resize(n);
    o.k.resize(n);
    o.l.resize(n);
    o.k_next.resize(n);
    o.mu_y.resize(n);
    o.mu_l.resize(n);
    o.s2_l.resize(n);
    o.shift.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t r = rows[static_cast<std::size_t>(i)];
        o.y[i] = d.y[static_cast<Eigen::Index>(r)];
        o.k[i] = d.k[static_cast<Eigen::Index>(r)];
        o.l[i] = d.l[static_cast<Eigen::Index>(r)];
        o.k_next[i] = d.k_next[static_cast<Eigen::Index>(r)];
        o.mu_y[i] = d.mu_y[static_cast<Eigen::Index>(r)];
        o.mu_l[i] = d.mu_l[static_cast<Eigen::Index>(r)];
        o.s2_l[i] = d.s2_l[static_cast<Eigen::Index>(r)];
        o.shift[i] = d.shift[static_cast<Eigen::Index>(r)];
        o.year.push_back(d.year[r]);
        o.panel_row.push_back(d.panel_row[r]);
    }
    o.firm = firm_labels;
    o.n_firms = std::set<std::string>(o.firm.begin(), o.firm.end()).size();
    return o;
}

}  // namespace

std::map<std::string, double> bootstrap_se(const NprData& data, const NprConfig& cfg,
                                           const NprFit& point) {
    if (point.winner < 0 || !point.result.converged)
        throw std::runtime_error("bootstrap_se: needs a converged point estimate");
    const int reps = cfg.bootstrap_reps;
    const auto blocks = firm_blocks(data);
    const NprStart& w = point.starts[static_cast<std::size_t>(point.winner)];

    NprConfig inner = cfg;
    inner.init_grid = {{w.beta_k0, w.beta_l0}};
    inner.threads = 1;

    std::vector<std::optional<Vector>> draws(static_cast<std::size_t>(std::max(reps, 0)));
    const int threads = resolve_threads(cfg.threads);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int b = 0; b < reps; ++b) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b), 0xB007));
        std::uniform_int_distribution<std::size_t> pick(0, blocks.size() - 1);
        std::vector<std::size_t> rows;
        std::vector<std::string> labels;
        for (std::size_t f = 0; f < blocks.size(); ++f) {
            const std::size_t src = pick(rng);
            // Duplicated firms become distinct clusters.
            const std::string label = std::to_string(f);
            for (std::size_t r : blocks[src]) {
                rows.push_back(r);
                labels.push_back(label);
            }
        }
        try {
            NprFit fit = npr_fit(take_rows(data, rows, labels), inner);
            if (fit.result.converged) {
                const auto c = fit.result.coefficients();
                Vector v(static_cast<Eigen::Index>(c.size()));
                Eigen::Index i = 0;
                for (const auto& kv : c) v[i++] = kv.second;
                draws[static_cast<std::size_t>(b)] = v;
            }
        } catch (const std::exception&) {
            // counted as a failed replication
        }
    }
    std::vector<Vector> ok;
    for (auto& d : draws)
        if (d) ok.push_back(*d);
    if (ok.size() < 10)
        throw std::runtime_error("bootstrap_se: only " + std::to_string(ok.size()) +
                                 " successful replications (need >= 10)");
    const auto names = point.result.coefficients();
    const Eigen::Index nc = static_cast<Eigen::Index>(names.size());
    Vector mean = Vector::Zero(nc);
    for (const auto& v : ok) mean += v;
    mean /= static_cast<double>(ok.size());
    Vector var = Vector::Zero(nc);
    for (const auto& v : ok) var += (v - mean).cwiseAbs2();
    var /= static_cast<double>(ok.size() - 1);
    std::map<std::string, double> se;
    Eigen::Index i = 0;
    Eigen::Index il = 0, ik = 0;
    for (const auto& kv : names) {
        if (kv.first == "beta_l") il = i;
        if (kv.first == "beta_k") ik = i;
        se[kv.first] = std::sqrt(var[i++]);
    }
    // Sum of the first-order terms, for the constant-returns test.
    double ms = 0, vs = 0;
    for (const auto& v : ok) ms += v[il] + v[ik];
    ms /= static_cast<double>(ok.size());
    for (const auto& v : ok) vs += (v[il] + v[ik] - ms) * (v[il] + v[ik] - ms);
    se["beta_l+beta_k"] = std::sqrt(vs / static_cast<double>(ok.size() - 1));
    return se;
}

std::map<std::string, double> bootstrap_se(const Panel& panel, const NprConfig& cfg) {
    const NprData d = npr_data(panel);
    const NprFit point = npr_fit(d, cfg);
    return bootstrap_se(d, cfg, point);
}

EstimationResult npr_fit(const Panel& panel, const NprConfig& cfg) {
    const NprData d = npr_data(panel);
    NprFit fit = npr_fit(d, cfg);
    if (cfg.bootstrap_reps > 0 && fit.result.converged) fit.result.std_errors = bootstrap_se(d, cfg, fit);
    return fit.result;
}

EstimationResult wald_beta_l(const Panel& panel) {
    const auto pairs = join_lead(panel, 1);
    std::vector<double> ey, el;
    for (const auto& p : pairs) {
        const FirmYear& cur = panel[p.current];
        const FirmYear& lead = panel[p.lead];
        const BeliefDistribution* by = cur.belief("y");
        const BeliefDistribution* bl = cur.belief("l");
        if (!by || !bl) continue;
        ey.push_back(by->mu - lead.y);
        el.push_back(bl->mu - lead.l);
    }
    if (ey.size() < 2) throw DataError("no_usable_observations", "no usable observations");
    const double n = static_cast<double>(ey.size());
    const double my = std::accumulate(ey.begin(), ey.end(), 0.0) / n;
    const double ml = std::accumulate(el.begin(), el.end(), 0.0) / n;
    if (std::abs(ml) < 1e-6)
        throw DataError("wald_not_identified", "labor expectations unbiased; Wald not identified");
    const double b = my / ml;

    // Delta method for a ratio of means.
    double vy = 0, vl = 0, cyl = 0;
    for (std::size_t i = 0; i < ey.size(); ++i) {
        vy += (ey[i] - my) * (ey[i] - my);
        vl += (el[i] - ml) * (el[i] - ml);
        cyl += (ey[i] - my) * (el[i] - ml);
    }
    vy /= (n - 1);
    vl /= (n - 1);
    cyl /= (n - 1);
    const double var = (vy - 2 * b * cyl + b * b * vl) / (ml * ml * n);

    EstimationResult r;
    r.method = Method::Wald;
    r.spec.beta_l = b;
    r.spec.beta_k = std::nan("");
    r.std_errors["beta_l"] = std::sqrt(std::max(var, 0.0));
    r.converged = true;
    r.iterations = 0;
    r.n_obs = ey.size();
    r.n_firms = panel.n_firms();
    return r;
}

namespace {

// Forecast-error pairs (belief row at t-1, realised row at t).
struct ErrorPair {
    std::size_t belief_row, outcome_row;
};

std::vector<ErrorPair> forecast_pairs(const Panel& panel) {
    std::vector<ErrorPair> out;
    for (const auto& p : join_lead(panel, 1)) {
        const FirmYear& cur = panel[p.current];
        if (cur.belief("y") && cur.belief("l")) out.push_back({p.current, p.lead});
    }
    return out;
}

// a - b = [mu_y - f(k_t, E l_t)] - [y_t - f(k_t, l_t)]
double forecast_gap(const FirmYear& prev, const FirmYear& cur, const ProductionSpec& s) {
    const BeliefDistribution& by = *prev.belief("y");
    const BeliefDistribution& bl = *prev.belief("l");
    double fe = s.beta_l * bl.mu, fr = s.beta_l * cur.l;
    if (s.family == Family::Translog) {
        fe += s.beta_l2.value_or(0) * (bl.sigma2 + bl.mu * bl.mu) + s.beta_lk.value_or(0) * cur.k * bl.mu;
        fr += s.beta_l2.value_or(0) * cur.l * cur.l + s.beta_lk.value_or(0) * cur.k * cur.l;
    }
    // k_t terms are common to a and b and cancel.
    return (by.mu - fe) - (cur.y - fr);
}

Vector coef_vector(const EstimationResult& r) {
    const auto c = r.coefficients();
    Vector v(static_cast<Eigen::Index>(c.size()));
    Eigen::Index i = 0;
    for (const auto& kv : c) v[i++] = kv.second;
    return v;
}

}  // namespace

BiasInvariantFit npr_bias_invariant(const Panel& panel, const NprConfig& cfg, const BiasOptions& opt) {
    const auto pairs = forecast_pairs(panel);
    std::map<std::string, int> count;
    for (const auto& p : pairs) ++count[panel[p.belief_row].firm_id];

    BiasInvariantFit out;
    std::vector<std::string> dropped;
    std::set<std::string> keep_firms;
    for (const auto& kv : count)
        if (kv.second >= 2) keep_firms.insert(kv.first);
    std::vector<FirmYear> kept;
    for (const auto& r : panel.rows()) {
        if (keep_firms.count(r.firm_id))
            kept.push_back(r);
        else if (dropped.empty() || dropped.back() != r.firm_id)
            dropped.push_back(r.firm_id);
    }
    if (kept.empty())
        throw DataError("no_usable_observations",
                        "npr_bias_invariant: no firm has two forecast-error periods");
    const Panel sub(std::move(kept));
    const auto sub_pairs = forecast_pairs(sub);
    NprData d = npr_data(sub);

    std::map<std::string, double> iota;
    for (const auto& f : keep_firms) iota[f] = 0.0;

    NprConfig c = cfg;
    Vector prev_beta;
    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        for (std::size_t i = 0; i < d.size(); ++i) d.shift[static_cast<Eigen::Index>(i)] = iota[d.firm[i]];
        NprFit fit = npr_fit(d, c);
        // Later passes start from the previous solution.
        c.init_grid = {{fit.result.spec.beta_k, fit.result.spec.beta_l}};

        std::map<std::string, std::pair<double, int>> acc;
        for (const auto& p : sub_pairs) {
            auto& a = acc[sub[p.belief_row].firm_id];
            a.first += forecast_gap(sub[p.belief_row], sub[p.outcome_row], fit.result.spec);
            a.second += 1;
        }
        double max_diota = 0.0;
        for (auto& kv : iota) {
            const auto& a = acc[kv.first];
            const double target = a.second ? a.first / a.second : 0.0;
            const double step = opt.damping * (target - kv.second);
            kv.second += step;
            max_diota = std::max(max_diota, std::abs(step));
        }
        const Vector beta = coef_vector(fit.result);
        const double dbeta = prev_beta.size() ? (beta - prev_beta).norm() : std::numeric_limits<double>::infinity();
        prev_beta = beta;
        out.result = fit.result;
        out.outer_iterations = outer;
        if (dbeta < opt.tol && max_diota < opt.tol) break;
        if (outer == opt.max_outer) {
            out.result.converged = false;
            out.result.warnings.push_back("npr_bias_invariant: outer loop hit max iterations");
        }
    }
    out.result.method = Method::NPR_BiasInvariant;
    for (const auto& f : dropped)
        out.result.warnings.push_back("firm " + f + " dropped: fewer than two forecast-error periods");
    out.iota = iota;
    return out;
}

BiasCovariateFit npr_bias_covariate(const Panel& panel, const std::vector<std::string>& covariates,
                                    const NprConfig& cfg, const BiasOptions& opt) {
    if (covariates.empty()) throw std::invalid_argument("npr_bias_covariate: no covariates");
    std::vector<std::string> req;
    for (const auto& c : covariates) req.push_back("aux:" + c);
    const Panel sub = validate_panel(panel, req).panel;
    const auto pairs = forecast_pairs(sub);
    if (pairs.size() < covariates.size() + 2)
        throw DataError("no_usable_observations", "npr_bias_covariate: too few forecast-error pairs");
    NprData d = npr_data(sub);

    const auto nx = static_cast<Eigen::Index>(covariates.size()) + 1;
    auto row_x = [&](const FirmYear& r) {
        Vector x(nx);
        x[0] = 1.0;
        for (std::size_t j = 0; j < covariates.size(); ++j) x[static_cast<Eigen::Index>(j) + 1] = *r.aux_value(covariates[j]);
        return x;
    };
    Matrix xb(static_cast<Eigen::Index>(pairs.size()), nx);
    for (std::size_t i = 0; i < pairs.size(); ++i)
        xb.row(static_cast<Eigen::Index>(i)) = row_x(sub[pairs[i].belief_row]).transpose();
    Matrix xrow(static_cast<Eigen::Index>(d.size()), nx);
    for (std::size_t i = 0; i < d.size(); ++i)
        xrow.row(static_cast<Eigen::Index>(i)) = row_x(sub[d.panel_row[i]]).transpose();

    BiasCovariateFit out;
    Vector lambda = Vector::Zero(nx);
    NprConfig c = cfg;
    Vector prev_beta;
    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        d.shift = xrow * lambda;
        NprFit fit = npr_fit(d, c);
        c.init_grid = {{fit.result.spec.beta_k, fit.result.spec.beta_l}};

        Vector gap(static_cast<Eigen::Index>(pairs.size()));
        for (std::size_t i = 0; i < pairs.size(); ++i)
            gap[static_cast<Eigen::Index>(i)] =
                forecast_gap(sub[pairs[i].belief_row], sub[pairs[i].outcome_row], fit.result.spec);
        const Vector target = ols(xb, gap, SeType::None).coef;
        const Vector step = opt.damping * (target - lambda);
        lambda += step;

        const Vector beta = coef_vector(fit.result);
        const double dbeta = prev_beta.size() ? (beta - prev_beta).norm() : std::numeric_limits<double>::infinity();
        prev_beta = beta;
        out.result = fit.result;
        out.outer_iterations = outer;
        if (dbeta < opt.tol && step.cwiseAbs().maxCoeff() < opt.tol) break;
        if (outer == opt.max_outer) {
            out.result.converged = false;
            out.result.warnings.push_back("npr_bias_covariate: outer loop hit max iterations");
        }
    }
    out.result.method = Method::NPR_BiasCovariate;
    out.lambda = lambda;
    return out;
}

}  // namespace prodexp
