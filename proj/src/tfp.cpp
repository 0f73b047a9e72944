#include "prodexp/tfp.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "prodexp/csv.hpp"
#include "prodexp/linalg.hpp"

namespace prodexp {

std::vector<std::string> outcome_names() { return {"exit", "growth_1_2", "growth_1_5"}; }

std::optional<double> TfpPanel::outcome(std::size_t i, const std::string& name) const {
    const TfpRow& r = rows.at(i);
    if (name == "exit") return r.exit;
    if (name == "growth_1_2") return r.growth_1_2;
    if (name == "growth_1_5") return r.growth_1_5;
    throw std::invalid_argument("unknown outcome: " + name);
}

TfpPanel tfp_residuals(const Panel& panel, const ProductionSpec& spec) {
    spec.check();
    TfpPanel tp;
    if (panel.empty()) return tp;
    const int last_year = *panel.distinct_years().rbegin();
    std::map<int, std::pair<double, int>> year_sum;
    tp.rows.reserve(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const FirmYear& r = panel[i];
        TfpRow t;
        t.firm_id = r.firm_id;
        t.year = r.year;
        double f = spec.beta_l * r.l + spec.beta_k * r.k;
        if (spec.family == Family::Translog)
            f += *spec.beta_l2 * r.l * r.l + *spec.beta_k2 * r.k * r.k + *spec.beta_lk * r.l * r.k;
        t.tfp_raw = r.y - f;
        auto& ys = year_sum[r.year];
        ys.first += t.tfp_raw;
        ys.second += 1;

        const bool has_next = i + 1 < panel.size() && panel[i + 1].firm_id == r.firm_id;
        if (has_next)
            t.exit = 0.0;
        else if (r.year != last_year)
            t.exit = 1.0;
        // Labor at t+s for the same firm; rows are sorted by (firm, year).
        auto labor_at = [&](int year) -> std::optional<double> {
            for (std::size_t j = i + 1; j < panel.size() && panel[j].firm_id == r.firm_id; ++j) {
                if (panel[j].year == year) return panel[j].l;
                if (panel[j].year > year) break;
            }
            return std::nullopt;
        };
        const auto l1 = labor_at(r.year + 1);
        if (l1) {
            if (const auto l2 = labor_at(r.year + 2)) t.growth_1_2 = *l2 - *l1;
            if (const auto l5 = labor_at(r.year + 5)) t.growth_1_5 = *l5 - *l1;
        }
        tp.rows.push_back(std::move(t));
    }
    for (auto& t : tp.rows) {
        const auto& ys = year_sum[t.year];
        t.tfp = t.tfp_raw - ys.first / ys.second;
    }
    return tp;
}

OutcomeRegression outcome_regression(const TfpPanel& tp, const std::string& outcome) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tp.rows.size(); ++i)
        if (tp.outcome(i, outcome)) idx.push_back(i);
    if (idx.empty()) throw DataError("empty_outcome", "outcome " + outcome + " has no observations");
    const auto n = static_cast<Eigen::Index>(idx.size());
    Vector y(n);
    Matrix base(n, 2);
    std::vector<int> years;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t r = idx[static_cast<std::size_t>(i)];
        y[i] = *tp.outcome(r, outcome);
        base(i, 0) = 1.0;
        base(i, 1) = tp.rows[r].tfp;
        years.push_back(tp.rows[r].year);
    }
    const OlsFit f = ols(hcat({base, year_dummies(years)}), y, SeType::HC1);
    OutcomeRegression out;
    out.outcome = outcome;
    out.pi_hat = f.coef[1];
    out.se = f.se[1];
    out.n = idx.size();
    out.outcome_mean = y.mean();
    const Vector t = base.col(1);
    const double sd = std::sqrt((t.array() - t.mean()).square().sum() / static_cast<double>(n > 1 ? n - 1 : 1));
    out.pi_std = out.pi_hat * sd;
    out.se_std = out.se * sd;
    return out;
}

void write_tfp_csv(std::ostream& out, const TfpPanel& tp) {
    write_csv_row(out, {"firm_id", "year", "tfp", "tfp_raw", "exit", "growth_1_2", "growth_1_5"});
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : tp.rows)
        write_csv_row(out, {r.firm_id, std::to_string(r.year), format_double(r.tfp), format_double(r.tfp_raw),
                            opt(r.exit), opt(r.growth_1_2), opt(r.growth_1_5)});
}

}  // namespace prodexp
