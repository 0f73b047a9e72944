#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prodexp/datamodel.hpp"

namespace prodexp {

struct TfpRow {
    std::string firm_id;
    int year = 0;
    double tfp_raw = 0.0;  // y - f(k, l)
    double tfp = 0.0;      // demeaned within year
    // 1 in the firm's last observed year, 0 before; missing in the panel's
    // final year, where exit cannot be seen.
    std::optional<double> exit;
    std::optional<double> growth_1_2;  // l_{t+2} - l_{t+1}
    std::optional<double> growth_1_5;  // l_{t+5} - l_{t+1}
};

struct TfpPanel {
    std::vector<TfpRow> rows;
    // Outcome by name: exit, growth_1_2, growth_1_5.
    std::optional<double> outcome(std::size_t i, const std::string& name) const;
};

// Throws std::logic_error via spec.check() on an inconsistent translog spec.
TfpPanel tfp_residuals(const Panel& panel, const ProductionSpec& spec);

struct OutcomeRegression {
    std::string outcome;
    double pi_hat = 0.0, se = 0.0;
    double pi_std = 0.0, se_std = 0.0;  // per standard deviation of tfp
    std::size_t n = 0;
    double outcome_mean = 0.0;
};

// OLS of the outcome on (1, tfp, year dummies) with HC1 standard errors.
// Throws DataError("empty_outcome") when no row has the outcome.
OutcomeRegression outcome_regression(const TfpPanel& tp, const std::string& outcome);

std::vector<std::string> outcome_names();
void write_tfp_csv(std::ostream& out, const TfpPanel& tp);

}  // namespace prodexp
