#include "prodexp/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_set>

namespace prodexp {

const BeliefDistribution* FirmYear::belief(const std::string& var) const {
    auto it = beliefs.find(var);
    return it == beliefs.end() ? nullptr : &it->second;
}

std::optional<double> FirmYear::aux_value(const std::string& name) const {
    auto it = aux.find(name);
    if (it == aux.end()) return std::nullopt;
    return it->second;
}

Panel::Panel(std::vector<FirmYear> rows) : rows_(std::move(rows)) {
    std::sort(rows_.begin(), rows_.end(), [](const FirmYear& a, const FirmYear& b) {
        return std::tie(a.firm_id, a.year) < std::tie(b.firm_id, b.year);
    });
    for (std::size_t i = 1; i < rows_.size(); ++i) {
        if (rows_[i].firm_id == rows_[i - 1].firm_id && rows_[i].year == rows_[i - 1].year)
            throw DataError("duplicate_key", "duplicate key: firm " + rows_[i].firm_id + " year " +
                                                 std::to_string(rows_[i].year));
    }
}

std::vector<int> Panel::years() const {
    std::vector<int> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r.year);
    return out;
}

std::set<int> Panel::distinct_years() const {
    std::set<int> out;
    for (const auto& r : rows_) out.insert(r.year);
    return out;
}

std::size_t Panel::n_firms() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < rows_.size(); ++i)
        if (i == 0 || rows_[i].firm_id != rows_[i - 1].firm_id) ++n;
    return n;
}

namespace {

bool finite_opt(const std::optional<double>& v) { return v && std::isfinite(*v); }

bool belief_ok(const FirmYear& r, const std::string& var) {
    const BeliefDistribution* b = r.belief(var);
    return b && std::isfinite(b->mu) && std::isfinite(b->sigma2) && b->sigma2 >= 0.0;
}

bool field_ok(const FirmYear& r, const std::string& f) {
    if (f == "y") return std::isfinite(r.y);
    if (f == "l") return std::isfinite(r.l);
    if (f == "k") return std::isfinite(r.k);
    if (f == "m") return finite_opt(r.m);
    if (f == "inv") return finite_opt(r.inv);
    if (f.rfind("belief_", 0) == 0) return belief_ok(r, f.substr(7));
    if (f.rfind("aux:", 0) == 0) return finite_opt(r.aux_value(f.substr(4)));
    throw std::invalid_argument("validate_panel: unknown field '" + f + "'");
}

}  // namespace

ValidatedPanel validate_panel(const Panel& panel, const std::vector<std::string>& requirements) {
    ValidatedPanel out;
    std::vector<FirmYear> keep;
    keep.reserve(panel.size());
    for (const auto& r : panel.rows()) {
        bool ok = true;
        for (const auto& f : requirements) {
            if (!field_ok(r, f)) {
                std::string key = f.rfind("aux:", 0) == 0 ? f.substr(4) : f;
                ++out.dropped["missing_" + key];
                ok = false;
                break;
            }
        }
        if (ok) keep.push_back(r);
    }
    if (keep.empty()) throw DataError("no_usable_observations", "no usable observations");
    out.panel = Panel(std::move(keep));
    return out;
}

std::vector<LeadPair> join_lead(const Panel& panel, int horizon) {
    if (horizon < 1) throw std::invalid_argument("join_lead: horizon must be >= 1");
    std::vector<LeadPair> out;
    const auto& rows = panel.rows();
    std::size_t start = 0;
    while (start < rows.size()) {
        std::size_t end = start;
        while (end < rows.size() && rows[end].firm_id == rows[start].firm_id) ++end;
        // Years are sorted within a firm, so a forward scan finds each match.
        std::size_t j = start;
        for (std::size_t i = start; i < end; ++i) {
            const int want = rows[i].year + horizon;
            while (j < end && rows[j].year < want) ++j;
            if (j < end && rows[j].year == want) out.push_back({i, j});
        }
        start = end;
    }
    return out;
}

void ProductionSpec::check() const {
    const bool has_tl = beta_l2.has_value() || beta_k2.has_value() || beta_lk.has_value();
    const bool all_tl = beta_l2.has_value() && beta_k2.has_value() && beta_lk.has_value();
    if (family == Family::CobbDouglas && has_tl)
        throw std::logic_error("ProductionSpec: translog terms on a Cobb-Douglas spec");
    if (family == Family::Translog && !all_tl)
        throw std::logic_error("ProductionSpec: translog spec missing second-order terms");
}

const char* method_name(Method m) {
    switch (m) {
        case Method::NPR: return "NPR";
        case Method::NPR_Translog: return "NPR_Translog";
        case Method::NPR_BiasInvariant: return "NPR_BiasInvariant";
        case Method::NPR_BiasCovariate: return "NPR_BiasCovariate";
        case Method::Wald: return "Wald";
        case Method::OLS: return "OLS";
        case Method::OLS_FD: return "OLS_FD";
        case Method::OLS_FE: return "OLS_FE";
        case Method::OP: return "OP";
        case Method::LP: return "LP";
        case Method::ACF: return "ACF";
    }
    return "?";
}

std::optional<Method> parse_method(const std::string& s) {
    std::string u = s;
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
    std::replace(u.begin(), u.end(), '-', '_');
    for (Method m : {Method::NPR, Method::NPR_Translog, Method::NPR_BiasInvariant,
                     Method::NPR_BiasCovariate, Method::Wald, Method::OLS, Method::OLS_FD,
                     Method::OLS_FE, Method::OP, Method::LP, Method::ACF}) {
        std::string name = method_name(m);
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return std::toupper(c); });
        if (name == u) return m;
    }
    return std::nullopt;
}

std::map<std::string, double> EstimationResult::coefficients() const {
    std::map<std::string, double> c{{"beta_l", spec.beta_l}, {"beta_k", spec.beta_k}};
    if (spec.family == Family::Translog) {
        c["beta_l2"] = spec.beta_l2.value_or(0.0);
        c["beta_k2"] = spec.beta_k2.value_or(0.0);
        c["beta_lk"] = spec.beta_lk.value_or(0.0);
    }
    return c;
}

}  // namespace prodexp
