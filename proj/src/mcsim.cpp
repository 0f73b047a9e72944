#include "prodexp/mcsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "prodexp/csv.hpp"
#include "prodexp/parallel.hpp"
#include "prodexp/rng.hpp"

namespace prodexp {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}

double DgpConfig::sigma_xi() const { return sigma_omega * std::sqrt(1.0 - rho * rho); }

bool DgpConfig::realized_materials() const {
    switch (materials_proxy) {
        case MaterialsProxy::Planned: return false;
        case MaterialsProxy::Realized: return true;
        case MaterialsProxy::Auto: break;
    }
    return opt_err.m > 0.0;
}

void DgpConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("DgpConfig: " + m); };
    if (!(rho > -1.0 && rho < 1.0)) fail("rho must lie in (-1, 1)");
    for (double s : {sigma_omega, sigma_eps, adj_cost_sigma, opt_err.l, opt_err.i, opt_err.m, bias_sd})
        if (!(s >= 0.0) || !std::isfinite(s)) fail("standard deviations must be finite and >= 0");
    if (!(beta0 > 0.0)) fail("beta0 must be > 0");
    if (!(beta_l > 0.0 && beta_l < 1.0)) fail("beta_l must lie in (0, 1)");
    if (!(beta_k > 0.0)) fail("beta_k must be > 0");
    if (!(beta_m > 0.0)) fail("beta_m must be > 0");
    if (!(delta >= 0.0 && delta <= 1.0)) fail("delta must lie in [0, 1]");
    if (!(discount > 0.0)) fail("discount must be > 0");
    if (n_firms < 1 || n_keep < 1 || burn_in < 0) fail("n_firms, n_keep must be >= 1 and burn_in >= 0");
    if (euler_truncation < 1) fail("euler_truncation must be >= 1");
    if (!(k0 > 0.0)) fail("k0 must be > 0");
}

DgpConfig scenario_config(const std::string& name) {
    DgpConfig c;
    const double e = 0.37, em = 0.185;
    if (name == "l") {
        c.opt_err = {e, 0, 0};
    } else if (name == "li") {
        c.opt_err = {e, e, 0};
    } else if (name == "lm") {
        c.opt_err = {e, 0, em};
    } else if (name == "lim") {
        c.opt_err = {e, e, em};
    } else if (name == "none") {
    } else if (name == "bias-el") {
        c.opt_err = {e, 0, 0};
        c.bias = BiasChannel::BiasedEL;
    } else if (name == "bias-ey") {
        c.opt_err = {e, 0, 0};
        c.bias = BiasChannel::BiasedEY;
    } else if (name == "bias-eomega") {
        c.opt_err = {e, 0, 0};
        c.bias = BiasChannel::BiasedEOmega;
    } else if (name == "bias-eomega-fixed") {
        c.opt_err = {e, 0, 0};
        c.bias = BiasChannel::BiasedEOmega;
        c.bias_time_invariant = true;
    } else if (name == "bias-mgmt" || name == "mgmt") {
        c.opt_err = {e, 0, 0};
        c.bias = BiasChannel::BiasedEOmegaMgmt;
    } else {
        throw std::invalid_argument("unknown scenario: " + name);
    }
    return c;
}

std::vector<std::string> scenario_names() {
    return {"l", "li", "lm", "lim", "none", "bias-el", "bias-ey", "bias-eomega", "bias-eomega-fixed", "mgmt"};
}

double optimal_labor(double K, double omega, const DgpConfig& cfg) {
    return std::pow(cfg.beta0 * cfg.beta_l * std::pow(K, cfg.beta_k) * std::exp(omega), 1.0 / (1.0 - cfg.beta_l));
}

double optimal_materials(double K, double L, double omega, const DgpConfig& cfg) {
    return cfg.beta0 * std::pow(K, cfg.beta_k) * std::pow(L, cfg.beta_l) * std::exp(omega) / cfg.beta_m;
}

InvestmentPolicy::InvestmentPolicy(const DgpConfig& cfg, int max_terms) {
    cap_ = max_terms > 0 ? max_terms : cfg.euler_truncation;
    const double g = cfg.discount * (1.0 - cfg.delta);
    if (!(g < 1.0)) throw std::invalid_argument("investment series does not decay: discount*(1-delta) >= 1");
    const double a = 1.0 / (1.0 - cfg.beta_l);
    inv_1ml_ = a;
    scale_ = cfg.discount * cfg.beta_k * a * std::pow(cfg.beta0, a);
    if (cfg.opt_err.l > 0.0) {
        const double s2 = cfg.opt_err.l * cfg.opt_err.l;
        bracket_ = std::pow(cfg.beta_l, cfg.beta_l * a) * std::exp(0.5 * cfg.beta_l * cfg.beta_l * s2) -
                   std::pow(cfg.beta_l, a) * std::exp(0.5 * s2);
        if (!(bracket_ > 0.0)) throw std::invalid_argument("investment bracket factor is not positive");
    }
    const double sx2 = cfg.sigma_xi() * cfg.sigma_xi();
    const double r2 = cfg.rho * cfg.rho;
    coef_.resize(static_cast<std::size_t>(cap_) + 1);
    rho_pow_.resize(coef_.size());
    double gpow = 1.0, vsum = 1.0, rp = cfg.rho, r2pow = 1.0;  // vsum = sum_{j=0}^{tau} rho^{2j}
    for (std::size_t tau = 1; tau < coef_.size(); ++tau) {
        gpow *= g;
        r2pow *= r2;
        vsum += r2pow;
        rp *= cfg.rho;
        coef_[tau] = gpow * std::exp(0.5 * a * a * sx2 * vsum);
        rho_pow_[tau] = rp;
    }
}

double InvestmentPolicy::truncated(double omega, double phi, int n) const {
    if (n > cap_) throw std::invalid_argument("InvestmentPolicy: n exceeds cached terms");
    double sum = 0.0;
    for (int tau = 1; tau <= n; ++tau) sum += coef_[tau] * std::exp(inv_1ml_ * rho_pow_[tau] * omega);
    return scale_ * bracket_ * sum / phi;
}

int InvestmentPolicy::terms_used(double omega) const {
    double sum = coef_[1] * std::exp(inv_1ml_ * rho_pow_[1] * omega);
    for (int tau = 2; tau <= cap_; ++tau) {
        const double t = coef_[tau] * std::exp(inv_1ml_ * rho_pow_[tau] * omega);
        if (t < 1e-12 * sum) return tau - 1;
        sum += t;
    }
    throw std::runtime_error("investment series did not reach tolerance within the term cap");
}

double InvestmentPolicy::operator()(double omega, double phi) const {
    double sum = coef_[1] * std::exp(inv_1ml_ * rho_pow_[1] * omega);
    for (int tau = 2; tau <= cap_; ++tau) {
        const double t = coef_[tau] * std::exp(inv_1ml_ * rho_pow_[tau] * omega);
        if (t < 1e-12 * sum) return scale_ * bracket_ * sum / phi;
        sum += t;
    }
    throw std::runtime_error("investment series did not reach tolerance within the term cap");
}

double optimal_investment(double omega, double phi, const DgpConfig& cfg) {
    return InvestmentPolicy(cfg)(omega, phi);
}

double expected_log_labor(double k_next, double omega, const DgpConfig& cfg) {
    return (std::log(cfg.beta0 * cfg.beta_l) + cfg.beta_k * k_next + cfg.rho * omega) / (1.0 - cfg.beta_l);
}

double expected_log_output(double k_next, double omega, const DgpConfig& cfg) {
    // E[ln value added] uses E[l'] (the labor error is mean zero in logs);
    // the materials error enters through E[min(0, xi_m)] = -sigma_m phi(0).
    const double mu = std::log(cfg.beta0) + cfg.beta_k * k_next + cfg.beta_l * expected_log_labor(k_next, omega, cfg) +
                      cfg.rho * omega;
    return mu - kInvSqrt2Pi * cfg.opt_err.m;
}

double variance_log_labor(const DgpConfig& cfg) {
    const double a = 1.0 / (1.0 - cfg.beta_l);
    const double sx = cfg.sigma_xi();
    return a * a * sx * sx + cfg.opt_err.l * cfg.opt_err.l;
}

double variance_log_output(const DgpConfig& cfg) {
    const double a = 1.0 / (1.0 - cfg.beta_l);
    const double sx = cfg.sigma_xi(), sl = cfg.opt_err.l, sm = cfg.opt_err.m;
    return a * a * sx * sx + cfg.beta_l * cfg.beta_l * sl * sl + cfg.sigma_eps * cfg.sigma_eps +
           sm * sm * (0.5 - 0.5 / M_PI);
}

SimPanel simulate(const DgpConfig& cfg) {
    cfg.validate();
    const InvestmentPolicy policy(cfg);
    const bool realized = cfg.realized_materials();
    const double sxi = cfg.sigma_xi();
    const double s2y = variance_log_output(cfg), s2l = variance_log_labor(cfg);
    const int periods = cfg.burn_in + cfg.n_keep;
    const int width = std::max(4, static_cast<int>(std::to_string(cfg.n_firms).size()));

    std::vector<FirmYear> rows;
    std::vector<SimTruth> truth;
    rows.reserve(static_cast<std::size_t>(cfg.n_firms) * static_cast<std::size_t>(cfg.n_keep));
    truth.reserve(rows.capacity());

    for (int f = 0; f < cfg.n_firms; ++f) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(f), 0x51A));
        std::normal_distribution<double> z(0.0, 1.0);
        std::string id = std::to_string(f);
        id = "f" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;

        // Every shock is drawn whatever its sd, so scenarios share random numbers.
        const double phi = std::exp(-cfg.adj_cost_sigma * z(rng));
        double omega = cfg.sigma_omega * z(rng);
        const double bias_fixed = cfg.bias_mean + cfg.bias_sd * z(rng);
        double K = cfg.k0;

        for (int t = 0; t < periods; ++t) {
            const double z_xi = z(rng), z_eps = z(rng), z_l = z(rng), z_i = z(rng), z_m = z(rng);
            const double z_mgmt = z(rng), z_b = z(rng);
            double xi = 0.0;
            if (t > 0) {
                xi = sxi * z_xi;
                omega = cfg.rho * omega + xi;
            }
            const double e_l = cfg.opt_err.l * z_l, e_i = cfg.opt_err.i * z_i, e_m = cfg.opt_err.m * z_m;
            const double eps = cfg.sigma_eps * z_eps;

            const double Ls = optimal_labor(K, omega, cfg);
            const double L = Ls * std::exp(e_l);
            const double va = cfg.beta0 * std::pow(K, cfg.beta_k) * std::pow(L, cfg.beta_l) * std::exp(omega);
            const double M = (realized ? va / cfg.beta_m : optimal_materials(K, Ls, omega, cfg)) * std::exp(e_m);
            // Planned materials scale the realized input mix, so output keeps the
            // realized-labor value added and only the error can bind.
            const double Y = (realized ? std::min(va, cfg.beta_m * M) : va * std::min(1.0, std::exp(e_m))) *
                             std::exp(eps);
            const double I = policy(omega, phi) * std::exp(e_i);
            const double Kn = (1.0 - cfg.delta) * K + I;
            for (double v : {Y, L, M, I, Kn})
                if (!(v > 0.0) || !std::isfinite(v))
                    throw std::runtime_error("simulate: non-positive or non-finite quantity for firm " + id);

            if (t >= cfg.burn_in) {
                const double kn = std::log(Kn);
                SimTruth tr;
                tr.omega = omega;
                tr.xi = xi;
                tr.eps = eps;
                tr.err_l = e_l;
                tr.err_i = e_i;
                tr.err_m = e_m;
                tr.k_next = kn;
                tr.mu_l = expected_log_labor(kn, omega, cfg);
                tr.mu_y = expected_log_output(kn, omega, cfg);
                tr.sigma2_l = s2l;
                const double b = cfg.bias_time_invariant ? bias_fixed : cfg.bias_mean + cfg.bias_sd * z_b;
                switch (cfg.bias) {
                    case BiasChannel::None: break;
                    case BiasChannel::BiasedEL:
                        tr.iota = b;
                        tr.mu_l += b;
                        tr.mu_y += cfg.beta_l * b;
                        break;
                    case BiasChannel::BiasedEY:
                        tr.iota = b;
                        tr.mu_y += b;
                        break;
                    case BiasChannel::BiasedEOmegaMgmt:
                        tr.mgmt = z_mgmt;
                        [[fallthrough]];
                    case BiasChannel::BiasedEOmega: {
                        const double iota = cfg.bias == BiasChannel::BiasedEOmega ? b : cfg.mgmt_coef * z_mgmt;
                        tr.iota = iota;
                        tr.mu_l += iota / (1.0 - cfg.beta_l);
                        tr.mu_y += iota + cfg.beta_l * iota / (1.0 - cfg.beta_l);
                        break;
                    }
                }

                FirmYear r;
                r.firm_id = id;
                r.year = t - cfg.burn_in + 1;
                r.y = std::log(Y);
                r.l = std::log(L);
                r.k = std::log(K);
                r.m = std::log(M);
                r.inv = std::log(I);
                r.beliefs["y"] = {tr.mu_y, s2y, std::nullopt};
                r.beliefs["l"] = {tr.mu_l, s2l, std::nullopt};
                if (cfg.bias == BiasChannel::BiasedEOmegaMgmt) r.aux["mgmt"] = tr.mgmt;
                rows.push_back(std::move(r));
                truth.push_back(tr);
            }
            K = Kn;
        }
    }
    SimPanel sim;
    sim.panel = Panel(std::move(rows));  // already in (firm_id, year) order
    sim.truth = std::move(truth);
    sim.config = cfg;
    return sim;
}

void write_truth_csv(std::ostream& out, const SimPanel& sim) {
    write_csv_row(out, {"firm_id", "year", "omega", "xi", "eps", "err_l", "err_i", "err_m", "mgmt", "iota", "mu_y",
                        "mu_l", "sigma2_l", "k_next"});
    for (std::size_t i = 0; i < sim.truth.size(); ++i) {
        const SimTruth& t = sim.truth[i];
        const FirmYear& r = sim.panel[i];
        write_csv_row(out, {r.firm_id, std::to_string(r.year), format_double(t.omega), format_double(t.xi),
                            format_double(t.eps), format_double(t.err_l), format_double(t.err_i),
                            format_double(t.err_m), format_double(t.mgmt), format_double(t.iota),
                            format_double(t.mu_y), format_double(t.mu_l), format_double(t.sigma2_l),
                            format_double(t.k_next)});
    }
}

CalibrationStats calibration(const SimPanel& sim) {
    const Panel& p = sim.panel;
    const std::size_t n = p.size();
    if (n < 2) throw std::invalid_argument("calibration: need at least two rows");
    std::map<std::string, std::pair<double, int>> firm_sum;
    double mk = 0, ml = 0, mo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& fs = firm_sum[p[i].firm_id];
        fs.first += p[i].k;
        fs.second += 1;
        mk += p[i].k;
        ml += p[i].l;
        mo += sim.truth[i].omega;
    }
    const double dn = static_cast<double>(n);
    mk /= dn;
    ml /= dn;
    mo /= dn;
    double tot = 0, within = 0, skl = 0, sll = 0, soo = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& fs = firm_sum[p[i].firm_id];
        const double dk = p[i].k - mk, dl = p[i].l - ml, dwo = p[i].k - fs.first / fs.second;
        const double d_o = sim.truth[i].omega - mo;
        tot += dk * dk;
        within += dwo * dwo;
        skl += dk * dl;
        sll += dl * dl;
        soo += d_o * d_o;
    }
    CalibrationStats c;
    c.across_firm_share_k = tot > 0 ? 1.0 - within / tot : 0.0;
    c.r2_k_l = (tot > 0 && sll > 0) ? skl * skl / (tot * sll) : 0.0;
    c.sd_omega = std::sqrt(soo / (dn - 1.0));
    return c;
}

EstimationResult run_estimator(Method m, const Panel& panel, const McOptions& opt) {
    switch (m) {
        case Method::NPR: return npr_fit(panel, opt.npr);
        case Method::NPR_Translog: {
            NprConfig c = opt.npr;
            c.family = Family::Translog;
            return npr_fit(panel, c);
        }
        case Method::NPR_BiasInvariant: return npr_bias_invariant(panel, opt.npr, opt.bias).result;
        case Method::NPR_BiasCovariate: return npr_bias_covariate(panel, opt.bias_covariates, opt.npr, opt.bias).result;
        case Method::Wald: return wald_beta_l(panel);
        case Method::OLS: return ols_levels(panel);
        case Method::OLS_FD: return ols_fd(panel);
        case Method::OLS_FE: return ols_fe(panel);
        case Method::OP: return op_fit(panel, opt.proxy);
        case Method::LP: return lp_fit(panel, opt.proxy);
        case Method::ACF: return acf_fit(panel, opt.proxy);
    }
    throw std::invalid_argument("run_estimator: unknown method");
}

ParamSummary summarize(const std::vector<double>& v, double truth) {
    ParamSummary s;
    s.truth = truth;
    s.n = v.size();
    if (v.empty()) {
        s.mean = s.median = s.mse = std::nan("");
        return s;
    }
    double sum = 0, se = 0;
    for (double x : v) {
        sum += x;
        se += (x - truth) * (x - truth);
    }
    s.mean = sum / static_cast<double>(v.size());
    s.mse = se / static_cast<double>(v.size());
    std::vector<double> w = v;
    std::sort(w.begin(), w.end());
    const std::size_t h = w.size() / 2;
    s.median = w.size() % 2 ? w[h] : 0.5 * (w[h - 1] + w[h]);
    if (v.size() >= 2) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

const EstimatorSummary* SummaryTable::find(Method m) const {
    for (const auto& e : estimators)
        if (e.method == m) return &e;
    return nullptr;
}

SummaryTable run_replications(const DgpConfig& cfg, int n_runs, const std::vector<Method>& estimators, int threads,
                              std::uint64_t seed, const McOptions& opt) {
    cfg.validate();
    if (n_runs < 1) throw std::invalid_argument("run_replications: n_runs must be >= 1");
    struct Cell {
        bool ok = false;
        bool converged = false;
        double bl = 0, bk = 0;
        std::string error;
    };
    const std::size_t ne = estimators.size();
    std::vector<Cell> cells(static_cast<std::size_t>(n_runs) * ne);
    const int nt = resolve_threads(threads);

#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (int run = 0; run < n_runs; ++run) {
        DgpConfig c = cfg;
        c.seed = derive_seed(seed, static_cast<std::uint64_t>(run), 0x3C);
        SimPanel sim;
        std::string sim_error;
        try {
            sim = simulate(c);
        } catch (const std::exception& e) {
            sim_error = std::string("simulate: ") + e.what();
        }
        for (std::size_t j = 0; j < ne; ++j) {
            Cell& cell = cells[static_cast<std::size_t>(run) * ne + j];
            if (!sim_error.empty()) {
                cell.error = sim_error;
                continue;
            }
            try {
                const EstimationResult r = run_estimator(estimators[j], sim.panel, opt);
                cell.ok = std::isfinite(r.spec.beta_l) && std::isfinite(r.spec.beta_k);
                if (!cell.ok) cell.error = "non-finite estimate";
                cell.converged = r.converged;
                cell.bl = r.spec.beta_l;
                cell.bk = r.spec.beta_k;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    }

    SummaryTable t;
    t.config = cfg;
    t.n_runs = n_runs;
    for (std::size_t j = 0; j < ne; ++j) {
        EstimatorSummary s;
        s.method = estimators[j];
        std::vector<double> fl, fk;
        for (int run = 0; run < n_runs; ++run) {
            const Cell& cell = cells[static_cast<std::size_t>(run) * ne + j];
            if (!cell.ok) {
                ++s.n_failed;
                if (s.failures.size() < 5) s.failures.push_back("run " + std::to_string(run) + ": " + cell.error);
                continue;
            }
            if (!cell.converged) ++s.n_nonconverged;
            s.beta_l.push_back(cell.bl);
            s.beta_k.push_back(cell.bk);
            s.run_index.push_back(run);
            if (cell.bl > 0 && cell.bl < 1 && cell.bk > 0 && cell.bk < 1) {
                fl.push_back(cell.bl);
                fk.push_back(cell.bk);
            }
        }
        s.l = summarize(s.beta_l, cfg.beta_l);
        s.k = summarize(s.beta_k, cfg.beta_k);
        s.l_filtered = summarize(fl, cfg.beta_l);
        s.k_filtered = summarize(fk, cfg.beta_k);
        t.estimators.push_back(std::move(s));
    }
    return t;
}

}  // namespace prodexp
