// prodexp: simulate, estimate, montecarlo, fit-beliefs, gen-survey, tfp.
//
// Exit codes: 0 success, 1 estimation failure or non-convergence (outputs
// still written where possible), 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prodexp/baselines.hpp"
#include "prodexp/beliefs.hpp"
#include "prodexp/csv.hpp"
#include "prodexp/datamodel.hpp"
#include "prodexp/mcsim.hpp"
#include "prodexp/npr.hpp"
#include "prodexp/parallel.hpp"
#include "prodexp/tfp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace prodexp;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numbers are written through format_double so they keep 17 digits.
json num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return json::parse(format_double(v));
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw UsageError("config file must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw UsageError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

BiasChannel parse_bias(const std::string& s) {
    if (s == "none") return BiasChannel::None;
    if (s == "el") return BiasChannel::BiasedEL;
    if (s == "ey") return BiasChannel::BiasedEY;
    if (s == "eomega") return BiasChannel::BiasedEOmega;
    if (s == "mgmt") return BiasChannel::BiasedEOmegaMgmt;
    throw UsageError("unknown bias channel " + s + " (none, el, ey, eomega, mgmt)");
}

MaterialsProxy parse_materials(const std::string& s) {
    if (s == "auto") return MaterialsProxy::Auto;
    if (s == "planned") return MaterialsProxy::Planned;
    if (s == "realized") return MaterialsProxy::Realized;
    throw UsageError("unknown materials_proxy " + s + " (auto, planned, realized)");
}

void apply_dgp(const json& j, DgpConfig& c) {
    check_keys(j,
               {"beta0", "beta_k", "beta_l", "beta_m", "rho", "sigma_omega", "sigma_eps", "delta", "discount",
                "adj_cost_sigma", "opt_err", "bias", "mgmt_coef", "bias_mean", "bias_sd", "bias_time_invariant",
                "materials_proxy", "n_firms", "n_keep", "burn_in", "euler_truncation", "k0"},
               "dgp");
    get(j, "beta0", c.beta0);
    get(j, "beta_k", c.beta_k);
    get(j, "beta_l", c.beta_l);
    get(j, "beta_m", c.beta_m);
    get(j, "rho", c.rho);
    get(j, "sigma_omega", c.sigma_omega);
    get(j, "sigma_eps", c.sigma_eps);
    get(j, "delta", c.delta);
    get(j, "discount", c.discount);
    get(j, "adj_cost_sigma", c.adj_cost_sigma);
    if (j.contains("opt_err")) {
        const json& e = j.at("opt_err");
        check_keys(e, {"l", "i", "m"}, "dgp.opt_err");
        get(e, "l", c.opt_err.l);
        get(e, "i", c.opt_err.i);
        get(e, "m", c.opt_err.m);
    }
    if (j.contains("bias")) c.bias = parse_bias(j.at("bias").get<std::string>());
    get(j, "mgmt_coef", c.mgmt_coef);
    get(j, "bias_mean", c.bias_mean);
    get(j, "bias_sd", c.bias_sd);
    get(j, "bias_time_invariant", c.bias_time_invariant);
    if (j.contains("materials_proxy")) c.materials_proxy = parse_materials(j.at("materials_proxy").get<std::string>());
    get(j, "n_firms", c.n_firms);
    get(j, "n_keep", c.n_keep);
    get(j, "burn_in", c.burn_in);
    get(j, "euler_truncation", c.euler_truncation);
    get(j, "k0", c.k0);
}

void apply_npr(const json& j, NprConfig& c) {
    check_keys(j,
               {"init_grid", "tol", "max_backfit_iters", "bootstrap_reps", "scheme", "fd_step", "max_step", "lambda",
                "q", "order", "lambda_lo", "lambda_hi"},
               "npr");
    if (j.contains("init_grid")) {
        c.init_grid.clear();
        for (const auto& p : j.at("init_grid")) c.init_grid.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    get(j, "tol", c.tol);
    get(j, "max_backfit_iters", c.max_backfit_iters);
    get(j, "bootstrap_reps", c.bootstrap_reps);
    if (j.contains("scheme")) {
        const auto s = j.at("scheme").get<std::string>();
        if (s == "newton")
            c.scheme = NprConfig::Scheme::Newton;
        else if (s == "picard")
            c.scheme = NprConfig::Scheme::Picard;
        else
            throw UsageError("npr.scheme must be newton or picard");
    }
    get(j, "fd_step", c.fd_step);
    get(j, "max_step", c.max_step);
    if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
    get(j, "q", c.scam.q);
    get(j, "order", c.scam.order);
    get(j, "lambda_lo", c.scam.lambda_lo);
    get(j, "lambda_hi", c.scam.lambda_hi);
}

void apply_proxy(const json& j, ProxyConfig& c) {
    check_keys(j, {"poly_degree", "orthogonalize", "grid_points"}, "proxy");
    get(j, "poly_degree", c.poly_degree);
    get(j, "orthogonalize", c.orthogonalize);
    get(j, "grid_points", c.grid_points);
}

// Common options shared by every subcommand.
struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = ".";
    json config;

    std::uint64_t seed_or(std::uint64_t fallback) const {
        if (seed) return *seed;
        if (config.contains("seed")) return config.at("seed").get<std::uint64_t>();
        return fallback;
    }
    bool has_seed() const { return seed.has_value() || config.contains("seed"); }
    int thread_count() const {
        if (threads != 0) return threads;
        if (config.contains("threads")) return config.at("threads").get<int>();
        return 0;
    }
    fs::path out_path(const std::string& name, const std::vector<std::string>& inputs) const {
        fs::create_directories(out);
        const fs::path p = fs::path(out) / name;
        for (const auto& in : inputs) {
            std::error_code ec;
            if (!in.empty() && fs::exists(p) && fs::equivalent(p, in, ec))
                throw UsageError("output " + p.string() + " would overwrite input " + in);
        }
        return p;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON config file (flags take precedence)");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--threads", c.threads, "Worker threads (0 = all available)");
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw std::runtime_error("cannot write " + p.string());
    o << text;
}

template <class F>
void write_stream(const fs::path& p, F&& f) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw std::runtime_error("cannot write " + p.string());
    f(o);
}

std::string scenario_from(const Common& c, const std::string& flag, const std::string& fallback) {
    if (!flag.empty()) return flag;
    if (c.config.contains("scenario")) return c.config.at("scenario").get<std::string>();
    return fallback;
}

DgpConfig dgp_from(const Common& c, const std::string& scenario) {
    DgpConfig d;
    try {
        d = scenario_config(scenario);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (c.config.contains("dgp")) apply_dgp(c.config.at("dgp"), d);
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return d;
}

NprConfig npr_from(const Common& c) {
    NprConfig n;
    if (c.config.contains("npr")) apply_npr(c.config.at("npr"), n);
    n.threads = c.thread_count();
    n.seed = c.seed_or(n.seed);
    return n;
}

ProxyConfig proxy_from(const Common& c) {
    ProxyConfig p;
    if (c.config.contains("proxy")) apply_proxy(c.config.at("proxy"), p);
    return p;
}

Panel load_panel(const std::string& path, json* report) {
    if (!fs::exists(path)) throw UsageError("panel file not found: " + path);
    PanelLoad pl = read_panel_csv(path);
    if (report) {
        json rej = json::object();
        for (const auto& [k, v] : pl.rejected) rej[k] = v;
        (*report)["rejected_rows"] = rej;
    }
    return pl.panel;
}

// Two-sided normal p-value for H0: beta_l + beta_k = 1.
std::optional<double> crs_p_value(double sum, double se) {
    if (!(se > 0.0) || !std::isfinite(se)) return std::nullopt;
    const double z = (sum - 1.0) / se;
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

json result_json(const EstimationResult& r) {
    json j;
    j["method"] = method_name(r.method);
    json coef = json::object(), se = json::object();
    for (const auto& [k, v] : r.coefficients()) coef[k] = num(v);
    for (const auto& [k, v] : r.std_errors) se[k] = num(v);
    j["coefficients"] = coef;
    j["std_errors"] = se;
    j["beta0"] = num(r.spec.beta0);
    json ye = json::object();
    for (const auto& [y, v] : r.spec.year_effects) ye[std::to_string(y)] = num(v);
    j["year_effects"] = ye;
    j["family"] = r.spec.family == Family::Translog ? "translog" : "cobb_douglas";
    const double sum = r.spec.beta_l + r.spec.beta_k;
    j["beta_l+beta_k"] = num(sum);
    std::optional<double> sse;
    if (auto it = r.std_errors.find("beta_l+beta_k"); it != r.std_errors.end()) {
        sse = it->second;
    } else if (r.std_errors.count("beta_l") && r.std_errors.count("beta_k")) {
        // Covariance unavailable: treat the two estimates as uncorrelated.
        const double a = r.std_errors.at("beta_l"), b = r.std_errors.at("beta_k");
        sse = std::sqrt(a * a + b * b);
        j["crs_note"] = "standard error of the sum assumes zero covariance";
    }
    j["se_beta_l+beta_k"] = sse ? num(*sse) : json(nullptr);
    const auto p = sse ? crs_p_value(sum, *sse) : std::nullopt;
    j["crs_p_value"] = p ? num(*p) : json(nullptr);
    j["converged"] = r.converged;
    j["objective"] = num(r.objective);
    j["iterations"] = r.iterations;
    j["n_obs"] = r.n_obs;
    j["n_firms"] = r.n_firms;
    j["warnings"] = r.warnings;
    return j;
}

Method cli_method(const std::string& s) {
    static const std::map<std::string, Method> m{
        {"npr", Method::NPR},       {"npr-translog", Method::NPR_Translog},
        {"npr-bias-cov", Method::NPR_BiasCovariate}, {"npr-bias-inv", Method::NPR_BiasInvariant},
        {"wald", Method::Wald},     {"ols", Method::OLS},
        {"ols-fd", Method::OLS_FD}, {"ols-fe", Method::OLS_FE},
        {"op", Method::OP},         {"lp", Method::LP},
        {"acf", Method::ACF}};
    auto it = m.find(s);
    if (it == m.end())
        throw UsageError("unknown method '" + s +
                         "' (npr, npr-translog, npr-bias-cov, npr-bias-inv, wald, ols, ols-fd, ols-fe, op, lp, acf)");
    return it->second;
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const Common& c, const std::string& scenario_flag, std::optional<int> firms) {
    if (!c.has_seed()) throw UsageError("simulate: --seed is required");
    DgpConfig d = dgp_from(c, scenario_from(c, scenario_flag, "l"));
    if (firms) d.n_firms = *firms;
    d.seed = c.seed_or(1);
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const SimPanel sim = simulate(d);
    write_stream(c.out_path("panel.csv", {}), [&](std::ostream& o) { write_panel_csv(o, sim.panel); });
    write_stream(c.out_path("truth.csv", {}), [&](std::ostream& o) { write_truth_csv(o, sim); });
    const CalibrationStats cs = calibration(sim);
    json j;
    j["rows"] = sim.panel.size();
    j["firms"] = sim.panel.n_firms();
    j["across_firm_share_k"] = num(cs.across_firm_share_k);
    j["r2_k_l"] = num(cs.r2_k_l);
    j["sd_omega"] = num(cs.sd_omega);
    std::cout << dump(j);
    return 0;
}

int cmd_estimate(const Common& c, const std::string& method_flag, const std::string& panel_path,
                 const std::vector<std::string>& covariates_flag, std::optional<int> bootstrap) {
    std::string ms = method_flag;
    if (ms.empty() && c.config.contains("method")) ms = c.config.at("method").get<std::string>();
    if (ms.empty()) throw UsageError("estimate: --method is required");
    const Method m = cli_method(ms);
    json report;
    const Panel panel = load_panel(panel_path, &report);
    McOptions opt;
    opt.npr = npr_from(c);
    if (bootstrap) opt.npr.bootstrap_reps = *bootstrap;
    opt.proxy = proxy_from(c);
    if (!covariates_flag.empty())
        opt.bias_covariates = covariates_flag;
    else if (c.config.contains("covariates"))
        opt.bias_covariates = c.config.at("covariates").get<std::vector<std::string>>();

    EstimationResult r;
    json extra = json::object();
    if (m == Method::NPR_BiasInvariant || m == Method::NPR_BiasCovariate) {
        // The bias-robust fits carry extra output; bootstrap the point estimate separately.
        if (m == Method::NPR_BiasInvariant) {
            const BiasInvariantFit f = npr_bias_invariant(panel, opt.npr, opt.bias);
            r = f.result;
            json io = json::object();
            for (const auto& [k, v] : f.iota) io[k] = num(v);
            extra["iota"] = io;
            extra["outer_iterations"] = f.outer_iterations;
        } else {
            const BiasCovariateFit f = npr_bias_covariate(panel, opt.bias_covariates, opt.npr, opt.bias);
            r = f.result;
            json lam = json::array();
            for (Eigen::Index i = 0; i < f.lambda.size(); ++i) lam.push_back(num(f.lambda[i]));
            extra["lambda"] = lam;
            extra["covariates"] = opt.bias_covariates;
            extra["outer_iterations"] = f.outer_iterations;
        }
    } else {
        r = run_estimator(m, panel, opt);
    }
    json j = result_json(r);
    j["input"] = panel_path;
    j["rejected_rows"] = report["rejected_rows"];
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_file(c.out_path("results.json", {panel_path}), dump(j));
    std::cout << dump(j);
    if (!r.converged) {
        std::cerr << "estimate: " << method_name(m) << " did not converge\n";
        return 1;
    }
    return 0;
}

int cmd_montecarlo(const Common& c, const std::string& scenario_flag, std::optional<int> runs_flag,
                   const std::vector<std::string>& est_flag) {
    if (!c.has_seed()) throw UsageError("montecarlo: --seed is required");
    const std::string scenario = scenario_from(c, scenario_flag, "l");
    const DgpConfig d = dgp_from(c, scenario);
    int runs = 100;
    if (c.config.contains("runs")) runs = c.config.at("runs").get<int>();
    if (runs_flag) runs = *runs_flag;
    if (runs < 1) throw UsageError("montecarlo: --runs must be >= 1");
    std::vector<std::string> names = est_flag;
    if (names.empty() && c.config.contains("estimators"))
        names = c.config.at("estimators").get<std::vector<std::string>>();
    if (names.empty()) names = {"npr", "ols", "op", "lp", "acf"};
    std::vector<Method> methods;
    for (const auto& n : names) methods.push_back(cli_method(n));

    McOptions opt;
    opt.npr = npr_from(c);
    opt.npr.bootstrap_reps = 0;
    opt.npr.threads = 1;
    opt.proxy = proxy_from(c);
    if (c.config.contains("covariates")) opt.bias_covariates = c.config.at("covariates").get<std::vector<std::string>>();

    const SummaryTable t = run_replications(d, runs, methods, c.thread_count(), c.seed_or(1), opt);
    int status = 0;
    write_stream(c.out_path("summary.csv", {}), [&](std::ostream& o) {
        write_csv_row(o, {"scenario", "estimator", "sample", "param", "truth", "mean", "median", "sd", "mse", "n_runs",
                          "n_used", "n_failed", "n_nonconverged"});
        for (std::size_t e = 0; e < t.estimators.size(); ++e) {
            const EstimatorSummary& s = t.estimators[e];
            auto row = [&](const char* sample, const char* param, const ParamSummary& p) {
                write_csv_row(o, {scenario, names[e], sample, param, format_double(p.truth), format_double(p.mean),
                                  format_double(p.median), p.sd ? format_double(*p.sd) : std::string(),
                                  format_double(p.mse), std::to_string(runs), std::to_string(p.n),
                                  std::to_string(s.n_failed), std::to_string(s.n_nonconverged)});
            };
            row("all", "beta_l", s.l);
            row("all", "beta_k", s.k);
            if (s.method == Method::ACF) {
                row("filtered", "beta_l", s.l_filtered);
                row("filtered", "beta_k", s.k_filtered);
            }
            if (s.n_failed || s.n_nonconverged) status = 1;
            for (const auto& f : s.failures) std::cerr << names[e] << ": " << f << "\n";
        }
    });
    std::ifstream back(fs::path(c.out) / "summary.csv");
    std::cout << back.rdbuf();
    return status;
}

int cmd_fit_beliefs(const Common& c, const std::string& survey_path) {
    if (!fs::exists(survey_path)) throw UsageError("survey file not found: " + survey_path);
    std::ifstream in(survey_path);
    SurveyLoad sl;
    try {
        sl = read_survey_csv(in);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
    const SurveyFit fit = fit_survey(sl.rows, c.thread_count());
    write_stream(c.out_path("beliefs.csv", {survey_path}), [&](std::ostream& o) { write_beliefs_csv(o, fit); });
    write_stream(c.out_path("diagnostics.csv", {survey_path}),
                 [&](std::ostream& o) { write_belief_diagnostics_csv(o, fit); });
    write_stream(c.out_path("discards.csv", {survey_path}), [&](std::ostream& o) {
        write_csv_row(o, {"stage", "reason", "count"});
        for (const auto& [k, v] : sl.rejected) write_csv_row(o, {"read", k, std::to_string(v)});
        for (const auto& [k, v] : fit.discarded) write_csv_row(o, {"fit", k, std::to_string(v)});
    });
    json j;
    j["rows_read"] = sl.rows.size();
    j["fitted"] = fit.fitted.size();
    json d = json::object();
    for (const auto& [k, v] : sl.rejected) d[k] = v;
    for (const auto& [k, v] : fit.discarded) d[k] = v;
    j["discarded"] = d;
    std::cout << dump(j);
    return 0;
}

int cmd_gen_survey(const Common& c, std::size_t n, const std::string& panel_path) {
    SyntheticSurvey s;
    if (!panel_path.empty()) {
        s = survey_from_panel(load_panel(panel_path, nullptr));
    } else {
        s = generate_survey(n, c.seed_or(1));
    }
    write_stream(c.out_path("survey.csv", {panel_path}), [&](std::ostream& o) { write_survey_csv(o, s.rows); });
    write_stream(c.out_path("survey_truth.csv", {panel_path}), [&](std::ostream& o) {
        write_csv_row(o, {"firm_id", "year", "variable", "mu", "sigma2"});
        for (std::size_t i = 0; i < s.rows.size(); ++i)
            write_csv_row(o, {s.rows[i].firm_id, std::to_string(s.rows[i].year), s.rows[i].variable,
                              format_double(s.truth[i].first), format_double(s.truth[i].second)});
    });
    std::cout << "rows: " << s.rows.size() << "\n";
    return 0;
}

ProductionSpec spec_from_json(const json& j) {
    const json& coef = j.contains("coefficients") ? j.at("coefficients") : j;
    ProductionSpec s;
    if (!coef.contains("beta_l") || !coef.contains("beta_k"))
        throw UsageError("coefficients file needs beta_l and beta_k");
    s.beta_l = coef.at("beta_l").get<double>();
    s.beta_k = coef.at("beta_k").get<double>();
    if (coef.contains("beta_l2") || coef.contains("beta_k2") || coef.contains("beta_lk")) {
        if (!coef.contains("beta_l2") || !coef.contains("beta_k2") || !coef.contains("beta_lk"))
            throw UsageError("translog coefficients need beta_l2, beta_k2 and beta_lk");
        s.family = Family::Translog;
        s.beta_l2 = coef.at("beta_l2").get<double>();
        s.beta_k2 = coef.at("beta_k2").get<double>();
        s.beta_lk = coef.at("beta_lk").get<double>();
    }
    return s;
}

int cmd_tfp(const Common& c, const std::string& panel_path, const std::string& coef_path) {
    if (coef_path.empty()) throw UsageError("tfp: --coefficients is required");
    std::ifstream cin_(coef_path);
    if (!cin_) throw UsageError("coefficients file not found: " + coef_path);
    json cj;
    try {
        cj = json::parse(cin_);
    } catch (const json::exception& e) {
        throw UsageError(std::string("coefficients file: ") + e.what());
    }
    const ProductionSpec spec = spec_from_json(cj);
    const Panel panel = load_panel(panel_path, nullptr);
    const TfpPanel tp = tfp_residuals(panel, spec);
    write_stream(c.out_path("tfp.csv", {panel_path, coef_path}), [&](std::ostream& o) { write_tfp_csv(o, tp); });

    // Year demeaning check reported alongside the regressions.
    std::map<int, std::pair<double, int>> ym;
    for (const auto& r : tp.rows) {
        ym[r.year].first += r.tfp;
        ym[r.year].second += 1;
    }
    double worst = 0;
    for (const auto& [y, s] : ym) worst = std::max(worst, std::abs(s.first / s.second));

    json j;
    j["coefficients"] = {{"beta_l", num(spec.beta_l)}, {"beta_k", num(spec.beta_k)}};
    j["max_abs_year_mean_tfp"] = num(worst);
    j["year_demeaned"] = worst < 1e-10;
    json regs = json::array();
    for (const auto& name : outcome_names()) {
        json r;
        r["outcome"] = name;
        try {
            const OutcomeRegression o = outcome_regression(tp, name);
            r["pi_hat"] = num(o.pi_hat);
            r["se"] = num(o.se);
            r["pi_hat_std"] = num(o.pi_std);
            r["se_std"] = num(o.se_std);
            r["n"] = o.n;
            r["outcome_mean"] = num(o.outcome_mean);
        } catch (const DataError& e) {
            r["error"] = e.what();
        } catch (const RankDeficientError& e) {
            r["error"] = e.what();
        }
        regs.push_back(r);
    }
    j["regressions"] = regs;
    write_file(c.out_path("regressions.json", {panel_path, coef_path}), dump(j));
    std::cout << dump(j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Production function estimation with firm expectations"};
    app.require_subcommand(1);

    Common common;
    std::string scenario, method, panel_path, survey_path, coef_path;
    std::optional<int> runs, firms, bootstrap;
    std::vector<std::string> estimators, covariates;
    std::size_t n_survey = 100;

    auto* sim = app.add_subcommand("simulate", "Simulate a panel (panel.csv, truth.csv)");
    add_common(sim, common);
    sim->add_option("--scenario", scenario, "l, li, lm, lim, none, bias-el, bias-ey, bias-eomega, bias-mgmt");
    sim->add_option("--firms", firms, "Number of firms");

    auto* est = app.add_subcommand("estimate", "Estimate a production function (results.json)");
    add_common(est, common);
    est->add_option("--method", method, "npr, npr-translog, npr-bias-cov, npr-bias-inv, wald, ols, ols-fd, ols-fe, op, lp, acf");
    est->add_option("panel", panel_path, "Panel CSV")->required();
    est->add_option("--covariates", covariates, "Bias covariates (aux columns) for npr-bias-cov");
    est->add_option("--bootstrap", bootstrap, "NPR bootstrap replications (0 disables)");

    auto* mc = app.add_subcommand("montecarlo", "Replication study (summary.csv)");
    add_common(mc, common);
    mc->add_option("--scenario", scenario, "l, li, lm, lim, none, bias-el, bias-ey, bias-eomega, bias-mgmt");
    mc->add_option("--runs", runs, "Number of replications");
    mc->add_option("--estimators", estimators, "Estimators (default npr ols op lp acf)");

    auto* fb = app.add_subcommand("fit-beliefs", "Fit lognormal beliefs to survey responses");
    add_common(fb, common);
    fb->add_option("survey", survey_path, "Survey CSV")->required();

    auto* gs = app.add_subcommand("gen-survey", "Generate a synthetic survey (survey.csv)");
    add_common(gs, common);
    gs->add_option("--n", n_survey, "Number of responses")->capture_default_str();
    gs->add_option("--panel", panel_path, "Build responses from the beliefs in this panel CSV instead");

    auto* tf = app.add_subcommand("tfp", "TFP residuals and outcome regressions");
    add_common(tf, common);
    tf->add_option("panel", panel_path, "Panel CSV")->required();
    tf->add_option("--coefficients", coef_path, "results.json from estimate, or {beta_l, beta_k}");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        common.config = load_config(common.config_path);
        check_keys(common.config,
                   {"seed", "threads", "scenario", "method", "runs", "estimators", "covariates", "dgp", "npr", "proxy"},
                   "config");
        if (*sim) return cmd_simulate(common, scenario, firms);
        if (*est) return cmd_estimate(common, method, panel_path, covariates, bootstrap);
        if (*mc) return cmd_montecarlo(common, scenario, runs, estimators);
        if (*fb) return cmd_fit_beliefs(common, survey_path);
        if (*gs) return cmd_gen_survey(common, n_survey, panel_path);
        if (*tf) return cmd_tfp(common, panel_path, coef_path);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "estimation failed: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
