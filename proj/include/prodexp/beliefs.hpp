#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prodexp/datamodel.hpp"

namespace prodexp {

// Five scenario levels (lowest..highest) with likelihoods in percent.
struct ScenarioResponse {
    std::array<double, 5> values{};
    std::array<double, 5> likelihoods{};
};

// Rescales likelihoods to sum to 100. Throws DataError("discard") when the
// reported total lies outside [90, 110].
ScenarioResponse normalize_likelihoods(const ScenarioResponse& r);

struct FittedBelief {
    double mu = 0.0;
    double sigma2 = 0.0;  // average of the two fits' sigma^2
    double mad = 0.0;     // mean |reported - fitted| probability, both conventions
    bool degenerate = false;
    std::pair<double, double> cdf_fit{0, 0};       // (mu, sigma2)
    std::pair<double, double> survival_fit{0, 0};  // (mu, sigma2)
    double mad_cdf = 0.0, mad_survival = 0.0;
};

// Fits a lognormal by least squares on CDF points, once treating each
// scenario as the top of its bin and once as the bottom, then averages.
// Expects normalized likelihoods and positive values. Throws DataError on
// non-positive values and std::runtime_error on optimizer failure.
FittedBelief fit_belief(const ScenarioResponse& r);

struct BeliefMoments {
    double e_log = 0, var_log = 0, e_level = 0, e_log_sq = 0;
};
BeliefMoments belief_moments(double mu, double sigma2);
BeliefMoments belief_moments(const FittedBelief& b);

struct LogValueAdded {
    double e_log_va = 0.0;
    double share_defined = 0.0;
    std::size_t n_defined = 0;
    bool low_share = false;  // share_defined < 0.5
};

// Gaussian copula over lognormal turnover and materials; mean of ln(T - M)
// over the draws with T > M. corr in [-1, 1], n_draws >= 10^4.
LogValueAdded expected_log_value_added(const BeliefDistribution& turnover, const BeliefDistribution& materials,
                                       double corr, int n_draws, std::uint64_t seed);

// Survey CSV: firm_id, year, variable, v1..v5, p1..p5. variable is one of
// turnover, employment, materials (mapped to belief keys y, l, m).
struct SurveyRow {
    std::string firm_id;
    int year = 0;
    std::string variable;
    ScenarioResponse response;
};

struct SurveyLoad {
    std::vector<SurveyRow> rows;
    std::map<std::string, std::size_t> rejected;  // reason -> count
};

// Throws DataError("empty_survey") for a file without a header.
SurveyLoad read_survey_csv(std::istream& in);
void write_survey_csv(std::ostream& out, const std::vector<SurveyRow>& rows);

// Belief key for a survey variable name, or empty when unknown.
std::string belief_key(const std::string& variable);

struct BeliefFitRow {
    SurveyRow source;
    FittedBelief fit;
};

struct SurveyFit {
    std::vector<BeliefFitRow> fitted;
    std::map<std::string, std::size_t> discarded;  // reason -> count
};

// Normalizes and fits every row; out-of-window rows are counted, not fitted.
SurveyFit fit_survey(const std::vector<SurveyRow>& rows, int threads = 0);

// One row per (firm_id, year) with belief_mu_* / belief_sigma2_* columns.
void write_beliefs_csv(std::ostream& out, const SurveyFit& fit);
// Per variable: n, mean MAD under each convention and overall, degenerate count.
void write_belief_diagnostics_csv(std::ostream& out, const SurveyFit& fit);

// Values at the 5/25/50/75/95th percentiles of LN(mu, sigma^2); each
// scenario's likelihood is the mass of its bin, with bin edges halfway (in
// logs) between adjacent values.
ScenarioResponse synthetic_response(double mu, double sigma);

// n rows with mu ~ U[mu_lo, mu_hi], sigma ~ U[sigma_lo, sigma_hi], variables
// cycling turnover, employment, materials. The drawn parameters are
// returned alongside.
struct SyntheticSurvey {
    std::vector<SurveyRow> rows;
    std::vector<std::pair<double, double>> truth;  // (mu, sigma2)
};
SyntheticSurvey generate_survey(std::size_t n, std::uint64_t seed, double mu_lo = 0.0, double mu_hi = 10.0,
                                double sigma_lo = 0.05, double sigma_hi = 1.0);
// Responses built from the y and l beliefs on each panel row.
SyntheticSurvey survey_from_panel(const Panel& panel);

}  // namespace prodexp
