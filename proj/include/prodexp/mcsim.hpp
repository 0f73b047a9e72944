#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prodexp/baselines.hpp"
#include "prodexp/datamodel.hpp"
#include "prodexp/npr.hpp"

namespace prodexp {

enum class BiasChannel { None, BiasedEL, BiasedEY, BiasedEOmega, BiasedEOmegaMgmt };

// Which materials series the panel records. Planned: the Leontief-optimal
// quantity given optimal labor, times the materials error. Realized: the
// quantity matching realized value added, times the error. Auto picks
// Realized when the materials error is active, Planned otherwise.
enum class MaterialsProxy { Auto, Planned, Realized };

struct OptErrors {
    double l = 0.0, i = 0.0, m = 0.0;  // sds of the log multiplicative errors
};

struct DgpConfig {
    double beta0 = 1.0, beta_k = 0.4, beta_l = 0.6, beta_m = 1.0;
    double rho = 0.7;
    double sigma_omega = 0.3;  // stationary sd of omega
    double sigma_eps = 0.1;
    double delta = 0.2;
    double discount = 0.95;
    double adj_cost_sigma = 0.6;  // log sd of 1/phi
    OptErrors opt_err{};
    BiasChannel bias = BiasChannel::None;
    double mgmt_coef = -0.15;
    double bias_mean = 0.0, bias_sd = 0.15;  // EL / EY / EOmega shocks
    bool bias_time_invariant = false;        // one draw per firm
    MaterialsProxy materials_proxy = MaterialsProxy::Auto;
    int n_firms = 1000;
    int n_keep = 10;
    int burn_in = 90;
    int euler_truncation = 10000;  // hard cap on investment series terms
    double k0 = 4.5399929762484854e-05;  // e^-10
    std::uint64_t seed = 1;

    double sigma_xi() const;
    bool realized_materials() const;
    // Throws std::invalid_argument.
    void validate() const;
};

// Named DGPs: l, li, lm, lim (optimization error in the listed inputs),
// none, bias-el, bias-ey, bias-eomega, bias-eomega-fixed (one draw per firm)
// and bias-mgmt (alias mgmt).
DgpConfig scenario_config(const std::string& name);
std::vector<std::string> scenario_names();

double optimal_labor(double K, double omega, const DgpConfig& cfg);
double optimal_materials(double K, double L, double omega, const DgpConfig& cfg);

// Euler-equation investment policy. Coefficients are cached per config; the
// series is summed until the next term falls below 1e-12 of the partial sum.
class InvestmentPolicy {
public:
    // Throws std::invalid_argument when the series does not decay.
    explicit InvestmentPolicy(const DgpConfig& cfg, int max_terms = 0);
    double operator()(double omega, double phi) const;
    // Sum with exactly n terms (no adaptive stop).
    double truncated(double omega, double phi, int n) const;
    double bracket() const { return bracket_; }
    int terms_used(double omega) const;

private:
    double scale_ = 0.0, bracket_ = 1.0, inv_1ml_ = 0.0;
    std::vector<double> coef_;   // (discount(1-delta))^tau * variance factor
    std::vector<double> rho_pow_;  // rho^(tau+1)
    int cap_ = 0;
};

double optimal_investment(double omega, double phi, const DgpConfig& cfg);

double expected_log_labor(double k_next, double omega, const DgpConfig& cfg);
double expected_log_output(double k_next, double omega, const DgpConfig& cfg);
double variance_log_labor(const DgpConfig& cfg);
double variance_log_output(const DgpConfig& cfg);

struct SimTruth {
    double omega = 0, xi = 0, eps = 0;
    double err_l = 0, err_i = 0, err_m = 0;
    double mgmt = 0, iota = 0;
    double mu_y = 0, mu_l = 0, sigma2_l = 0;
    double k_next = 0;  // log capital carried into t+1
};

// Panel rows and truth are aligned by index (firm-major, then year).
struct SimPanel {
    Panel panel;
    std::vector<SimTruth> truth;
    DgpConfig config;
};

SimPanel simulate(const DgpConfig& cfg);
void write_truth_csv(std::ostream& out, const SimPanel& sim);

struct CalibrationStats {
    double across_firm_share_k = 0;  // 1 - within-firm / total variance of k
    double r2_k_l = 0;               // squared correlation of k and l
    double sd_omega = 0;
};
CalibrationStats calibration(const SimPanel& sim);

struct McOptions {
    NprConfig npr = [] {
        NprConfig c;
        c.bootstrap_reps = 0;
        c.threads = 1;
        return c;
    }();
    ProxyConfig proxy{};
    BiasOptions bias{};
    std::vector<std::string> bias_covariates{"mgmt"};
};

// One estimator on one simulated panel. NPR_BiasInvariant and
// NPR_BiasCovariate use the bias options; the covariate list comes from opt.
EstimationResult run_estimator(Method m, const Panel& panel, const McOptions& opt);

struct ParamSummary {
    double truth = 0, mean = 0, median = 0, mse = 0;
    std::optional<double> sd;  // missing with fewer than two runs
    std::size_t n = 0;
};

struct EstimatorSummary {
    Method method = Method::OLS;
    std::vector<double> beta_l, beta_k;  // per successful run, run order
    std::vector<int> run_index;
    std::size_t n_failed = 0;
    std::size_t n_nonconverged = 0;  // included in the summaries
    std::vector<std::string> failures;  // first few messages
    ParamSummary l, k;                  // all successful runs
    ParamSummary l_filtered, k_filtered;  // runs with both in (0, 1)
};

struct SummaryTable {
    DgpConfig config;
    int n_runs = 0;
    std::vector<EstimatorSummary> estimators;
    const EstimatorSummary* find(Method m) const;
};

ParamSummary summarize(const std::vector<double>& values, double truth);

// Runs are simulated with derive_seed(seed, run) and reduced in run order.
SummaryTable run_replications(const DgpConfig& cfg, int n_runs, const std::vector<Method>& estimators,
                              int threads = 0, std::uint64_t seed = 1, const McOptions& opt = {});

}  // namespace prodexp
