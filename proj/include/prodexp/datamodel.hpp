#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace prodexp {

// Thrown for invalid input data; code() is a stable machine-readable tag.
class DataError : public std::runtime_error {
public:
    DataError(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Lognormal subjective distribution, stored as moments of the log.
struct BeliefDistribution {
    double mu = 0.0;
    double sigma2 = 0.0;
    std::optional<double> fit_mad;
};

struct FirmYear {
    std::string firm_id;
    int year = 0;
    double y = 0.0;
    double l = 0.0;
    double k = 0.0;
    std::optional<double> m;
    std::optional<double> inv;
    std::map<std::string, BeliefDistribution> beliefs;  // keys: y, l, m
    std::map<std::string, double> aux;

    const BeliefDistribution* belief(const std::string& var) const;
    std::optional<double> aux_value(const std::string& name) const;
};

// Rows sorted by (firm_id, year) with unique keys. Immutable once built.
class Panel {
public:
    Panel() = default;
    // Sorts; throws DataError("duplicate_key") on a repeated (firm_id, year).
    explicit Panel(std::vector<FirmYear> rows);

    const std::vector<FirmYear>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    const FirmYear& operator[](std::size_t i) const { return rows_[i]; }

    std::vector<int> years() const;          // per row
    std::set<int> distinct_years() const;
    std::size_t n_firms() const;

private:
    std::vector<FirmYear> rows_;
};

// Field names accepted by validate_panel:
//   y, l, k, m, inv, belief_y, belief_l, belief_m, and aux:<name>.
struct ValidatedPanel {
    Panel panel;
    std::map<std::string, std::size_t> dropped;  // reason -> count, e.g. missing_m
};

// Keeps rows whose required fields are present and finite. A row is counted
// once, under the first failing field in the order given.
// Throws DataError("no_usable_observations") when nothing survives.
ValidatedPanel validate_panel(const Panel& panel, const std::vector<std::string>& requirements);

struct LeadPair {
    std::size_t current;  // row index into the panel
    std::size_t lead;
};

// Same-firm pairs exactly `horizon` years apart.
std::vector<LeadPair> join_lead(const Panel& panel, int horizon);

enum class Family { CobbDouglas, Translog };

struct ProductionSpec {
    Family family = Family::CobbDouglas;
    double beta0 = 0.0;
    double beta_l = 0.0;
    double beta_k = 0.0;
    std::optional<double> beta_l2;
    std::optional<double> beta_k2;
    std::optional<double> beta_lk;
    std::map<int, double> year_effects;

    // Throws std::logic_error if translog terms disagree with family.
    void check() const;
};

enum class Method {
    NPR,
    NPR_Translog,
    NPR_BiasInvariant,
    NPR_BiasCovariate,
    Wald,
    OLS,
    OLS_FD,
    OLS_FE,
    OP,
    LP,
    ACF
};

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& s);

struct EstimationResult {
    ProductionSpec spec;
    std::map<std::string, double> std_errors;  // keyed like coefficients()
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    Method method = Method::OLS;
    std::size_t n_obs = 0;
    std::size_t n_firms = 0;
    std::vector<std::string> warnings;

    // beta_l, beta_k and, for translog, beta_l2, beta_k2, beta_lk.
    std::map<std::string, double> coefficients() const;
};

}  // namespace prodexp
