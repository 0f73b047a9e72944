#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prodexp/datamodel.hpp"
#include "prodexp/linalg.hpp"
#include "prodexp/scam.hpp"

namespace prodexp {

struct NprConfig {
    // (beta_k0, beta_l0) starting points.
    std::vector<std::pair<double, double>> init_grid = default_grid();
    double tol = 1e-6;
    int max_backfit_iters = 200;
    int bootstrap_reps = 100;
    Family family = Family::CobbDouglas;

    // Newton: solve T(beta) = beta for the backfitting map T with a
    // finite-difference Jacobian and a safeguarded step. Picard: iterate
    // beta <- T(beta) directly.
    enum class Scheme { Newton, Picard };
    Scheme scheme = Scheme::Newton;
    double fd_step = 1e-5;
    double max_step = 0.3;
    // Coefficient box; an iterate stuck on it is treated as non-converged.
    double box_lo = -0.5, box_hi = 1.5;  // first-order terms
    double box2 = 1.0;                   // |second-order terms|

    std::optional<double> lambda;  // nullopt: GCV at each backfit step
    ScamOptions scam{};
    int threads = 0;
    std::uint64_t seed = 1;  // bootstrap resampling

    static std::vector<std::pair<double, double>> default_grid();
};

// Estimation sample for NPR: rows with current (y, l, k), beliefs about t+1
// and next-period capital taken from the firm's following year.
struct NprData {
    Vector y, k, l;
    Vector k_next, mu_y, mu_l, s2_l;
    Vector shift;  // subtracted from Z (bias corrections); zero by default
    std::vector<int> year;
    std::vector<std::string> firm;
    std::vector<std::size_t> panel_row;  // index of the source row
    std::size_t n_firms = 0;

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
};

// Throws DataError when beliefs are missing everywhere or nothing survives.
NprData npr_data(const Panel& panel);

// Z = mu_y - beta_k k' - beta_l mu_l (translog: also beta_k2 k'^2,
// beta_l2 (sigma2_l + mu_l^2), beta_lk k' mu_l). The intercept is excluded.
double npr_z(double mu_y, double mu_l, double sigma2_l, double k_next, const ProductionSpec& beta);
// Row form: needs beliefs y and l on the row. Throws DataError naming the
// missing field.
double npr_z(const FirmYear& row, double k_next, const ProductionSpec& beta);

struct NprStart {
    double beta_k0 = 0.0, beta_l0 = 0.0;
    Vector beta;  // (beta_k, beta_l[, beta_k2, beta_l2, beta_lk])
    double sse = 0.0;
    double lambda = 0.0;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;  // |T(beta) - beta|
    std::vector<double> sse_trace;
    int sse_increases = 0;  // accepted steps after the second with higher sse
    std::string message;
};

struct NprFit {
    EstimationResult result;
    std::vector<NprStart> starts;
    int winner = -1;
    ScamFit scam;  // smooth at the winning coefficients
};

// Core estimator on prepared data.
NprFit npr_fit(const NprData& data, const NprConfig& config);
// Panel form: point estimate plus bootstrap std errors when bootstrap_reps > 0.
EstimationResult npr_fit(const Panel& panel, const NprConfig& config);

// Firm-cluster bootstrap around a converged point estimate. Re-runs from the
// winning start only. Throws std::runtime_error with fewer than 10
// successful replications.
std::map<std::string, double> bootstrap_se(const NprData& data, const NprConfig& config,
                                           const NprFit& point);
std::map<std::string, double> bootstrap_se(const Panel& panel, const NprConfig& config);

// Ratio of mean output to mean labour forecast errors over (t, t+1) pairs.
// Throws DataError("wald_not_identified") when |mean(mu_l - l)| < 1e-6.
EstimationResult wald_beta_l(const Panel& panel);

struct BiasOptions {
    double damping = 0.5;
    double tol = 1e-5;
    int max_outer = 200;
};

struct BiasInvariantFit {
    EstimationResult result;
    std::map<std::string, double> iota;  // per firm
    int outer_iterations = 0;
};

BiasInvariantFit npr_bias_invariant(const Panel& panel, const NprConfig& config,
                                    const BiasOptions& opt = {});

struct BiasCovariateFit {
    EstimationResult result;
    Vector lambda;  // intercept then one per covariate
    int outer_iterations = 0;
};

BiasCovariateFit npr_bias_covariate(const Panel& panel, const std::vector<std::string>& covariates,
                                    const NprConfig& config, const BiasOptions& opt = {});

}  // namespace prodexp
