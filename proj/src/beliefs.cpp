#include "prodexp/beliefs.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "prodexp/csv.hpp"
#include "prodexp/optim.hpp"
#include "prodexp/parallel.hpp"
#include "prodexp/rng.hpp"

namespace prodexp {

namespace {

constexpr double kSigmaFloor = 1e-3;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

struct OneFit {
    double mu, sigma, mad;
};

OneFit fit_targets(const std::array<double, 5>& lv, const std::array<double, 5>& target, double mu0, double s0) {
    Objective f = [&](const Vector& th, Vector* grad) {
        const double s = std::exp(th[1]);
        double sse = 0, gm = 0, gs = 0;
        for (int i = 0; i < 5; ++i) {
            const double zz = (lv[i] - th[0]) / s;
            const double d = norm_cdf(zz) - target[i];
            sse += d * d;
            const double dens = norm_pdf(zz);
            gm += 2 * d * dens * (-1.0 / s);
            gs += 2 * d * dens * (-zz);  // d/d(log s)
        }
        if (grad) {
            grad->resize(2);
            (*grad)[0] = gm;
            (*grad)[1] = gs;
        }
        return sse;
    };
    Vector x0(2);
    x0 << mu0, std::log(s0);
    BfgsOptions opt;
    opt.grad_tol = 1e-14;
    opt.rel_obj_tol = 1e-16;
    opt.max_iter = 1000;
    const BfgsResult r = minimize_bfgs(f, x0, opt);
    Vector g(2);
    f(r.x, &g);
    if (!std::isfinite(r.f) || !r.x.allFinite() || g.norm() > 1e-6)
        throw std::runtime_error("fit_belief: optimizer failed: " + r.message);
    OneFit out{r.x[0], std::exp(r.x[1]), 0.0};
    for (int i = 0; i < 5; ++i) out.mad += std::abs(norm_cdf((lv[i] - out.mu) / out.sigma) - target[i]);
    out.mad /= 5.0;
    return out;
}

}  // namespace

ScenarioResponse normalize_likelihoods(const ScenarioResponse& r) {
    double total = 0;
    for (double p : r.likelihoods) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("bad_likelihood", "likelihoods must be finite and >= 0");
        total += p;
    }
    if (total < 90.0 || total > 110.0)
        throw DataError("discard", "likelihood total " + format_double(total) + " outside [90, 110]");
    ScenarioResponse out = r;
    for (double& p : out.likelihoods) p *= 100.0 / total;
    return out;
}

FittedBelief fit_belief(const ScenarioResponse& r) {
    std::array<int, 5> idx{0, 1, 2, 3, 4};
    for (double v : r.values)
        if (!(v > 0.0) || !std::isfinite(v)) throw DataError("nonpositive_value", "scenario values must be > 0");
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return r.values[a] < r.values[b]; });
    std::array<double, 5> lv{}, p{};
    double ptot = 0;
    for (int i = 0; i < 5; ++i) {
        lv[i] = std::log(r.values[idx[i]]);
        p[i] = r.likelihoods[idx[i]];
        ptot += p[i];
    }
    if (!(ptot > 0.0)) throw DataError("bad_likelihood", "likelihoods sum to zero");
    for (double& x : p) x /= ptot;

    FittedBelief out;
    double mu0 = 0;
    for (int i = 0; i < 5; ++i) mu0 += p[i] * lv[i];
    if (lv[4] - lv[0] <= 0.0) {
        out.mu = mu0;
        out.degenerate = true;
        out.cdf_fit = out.survival_fit = {mu0, 0.0};
        return out;
    }
    double var0 = 0;
    for (int i = 0; i < 5; ++i) var0 += p[i] * (lv[i] - mu0) * (lv[i] - mu0);
    const double s0 = std::max(std::sqrt(var0), kSigmaFloor);

    std::array<double, 5> cdf{}, surv{};
    double c = 0;
    for (int i = 0; i < 5; ++i) {
        surv[i] = c;  // 1 - P(this scenario or higher)
        c += p[i];
        cdf[i] = std::min(c, 1.0);
    }
    const OneFit a = fit_targets(lv, cdf, mu0, s0);
    const OneFit b = fit_targets(lv, surv, mu0, s0);
    out.cdf_fit = {a.mu, a.sigma * a.sigma};
    out.survival_fit = {b.mu, b.sigma * b.sigma};
    out.mu = 0.5 * (a.mu + b.mu);
    out.sigma2 = 0.5 * (a.sigma * a.sigma + b.sigma * b.sigma);
    out.mad_cdf = a.mad;
    out.mad_survival = b.mad;
    out.mad = 0.5 * (a.mad + b.mad);
    return out;
}

BeliefMoments belief_moments(double mu, double sigma2) {
    return {mu, sigma2, std::exp(mu + 0.5 * sigma2), sigma2 + mu * mu};
}

BeliefMoments belief_moments(const FittedBelief& b) { return belief_moments(b.mu, b.sigma2); }

LogValueAdded expected_log_value_added(const BeliefDistribution& turnover, const BeliefDistribution& materials,
                                       double corr, int n_draws, std::uint64_t seed) {
    if (!(corr >= -1.0 && corr <= 1.0)) throw std::invalid_argument("expected_log_value_added: corr must lie in [-1, 1]");
    if (n_draws < 10000) throw std::invalid_argument("expected_log_value_added: n_draws must be >= 10000");
    if (turnover.sigma2 < 0 || materials.sigma2 < 0) throw std::invalid_argument("expected_log_value_added: sigma2 < 0");
    const double st = std::sqrt(turnover.sigma2), sm = std::sqrt(materials.sigma2);
    const double c2 = std::sqrt(std::max(0.0, 1.0 - corr * corr));
    Rng rng(derive_seed(seed, 0, 0xC0));
    std::normal_distribution<double> z(0.0, 1.0);
    double sum = 0;
    std::size_t nd = 0;
    for (int i = 0; i < n_draws; ++i) {
        const double z1 = z(rng), z2 = z(rng);
        const double t = std::exp(turnover.mu + st * z1);
        const double m = std::exp(materials.mu + sm * (corr * z1 + c2 * z2));
        if (t > m) {
            sum += std::log(t - m);
            ++nd;
        }
    }
    LogValueAdded out;
    out.n_defined = nd;
    out.share_defined = static_cast<double>(nd) / n_draws;
    out.e_log_va = nd ? sum / static_cast<double>(nd) : std::nan("");
    out.low_share = out.share_defined < 0.5;
    return out;
}

std::string belief_key(const std::string& variable) {
    if (variable == "turnover") return "y";
    if (variable == "employment") return "l";
    if (variable == "materials") return "m";
    return {};
}

SurveyLoad read_survey_csv(std::istream& in) {
    CsvTable t;
    try {
        t = read_csv(in);
    } catch (const DataError& e) {
        if (e.code() != "empty_csv") throw;
    }
    if (t.header.empty()) throw DataError("empty_survey", "survey file is empty");
    std::vector<std::string> need{"firm_id", "year", "variable"};
    for (int i = 1; i <= 5; ++i) need.push_back("v" + std::to_string(i));
    for (int i = 1; i <= 5; ++i) need.push_back("p" + std::to_string(i));
    std::vector<int> col;
    for (const auto& n : need) {
        const int c = t.column(n);
        if (c < 0) throw DataError("missing_column", "survey: missing column " + n);
        col.push_back(c);
    }
    SurveyLoad out;
    for (const auto& r : t.rows) {
        auto cell = [&](std::size_t j) -> std::string {
            const auto c = static_cast<std::size_t>(col[j]);
            return c < r.size() ? r[c] : std::string();
        };
        SurveyRow s;
        s.firm_id = cell(0);
        if (s.firm_id.empty()) {
            ++out.rejected["missing_firm_id"];
            continue;
        }
        try {
            std::size_t pos = 0;
            const std::string ys = cell(1);
            s.year = std::stoi(ys, &pos);
            if (pos != ys.size()) throw std::invalid_argument("year");
        } catch (const std::exception&) {
            ++out.rejected["bad_year"];
            continue;
        }
        s.variable = cell(2);
        if (belief_key(s.variable).empty()) {
            ++out.rejected["unknown_variable"];
            continue;
        }
        bool ok = true;
        for (std::size_t j = 0; j < 10 && ok; ++j) {
            const std::string txt = cell(3 + j);
            char* end = nullptr;
            const double v = std::strtod(txt.c_str(), &end);
            if (txt.empty() || end != txt.c_str() + txt.size() || !std::isfinite(v)) {
                ++out.rejected[j < 5 ? "bad_value" : "bad_likelihood"];
                ok = false;
            } else if (j < 5) {
                s.response.values[j] = v;
            } else {
                s.response.likelihoods[j - 5] = v;
            }
        }
        if (ok) out.rows.push_back(std::move(s));
    }
    return out;
}

void write_survey_csv(std::ostream& out, const std::vector<SurveyRow>& rows) {
    write_csv_row(out, {"firm_id", "year", "variable", "v1", "v2", "v3", "v4", "v5", "p1", "p2", "p3", "p4", "p5"});
    for (const auto& r : rows) {
        std::vector<std::string> f{r.firm_id, std::to_string(r.year), r.variable};
        for (double v : r.response.values) f.push_back(format_double(v));
        for (double p : r.response.likelihoods) f.push_back(format_double(p));
        write_csv_row(out, f);
    }
}

SurveyFit fit_survey(const std::vector<SurveyRow>& rows, int threads) {
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
    std::vector<std::string> reason(rows.size());
    std::vector<FittedBelief> fits(rows.size());
    const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            fits[static_cast<std::size_t>(i)] = fit_belief(normalize_likelihoods(rows[static_cast<std::size_t>(i)].response));
        } catch (const DataError& e) {
            reason[static_cast<std::size_t>(i)] = e.code();
        } catch (const std::exception&) {
            reason[static_cast<std::size_t>(i)] = "fit_failed";
        }
    }
    SurveyFit out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (reason[i].empty())
            out.fitted.push_back({rows[i], fits[i]});
        else
            ++out.discarded[reason[i]];
    }
    return out;
}

void write_beliefs_csv(std::ostream& out, const SurveyFit& fit) {
    std::map<std::pair<std::string, int>, std::map<std::string, const FittedBelief*>> byrow;
    for (const auto& r : fit.fitted) byrow[{r.source.firm_id, r.source.year}][belief_key(r.source.variable)] = &r.fit;
    write_csv_row(out, {"firm_id", "year", "belief_mu_y", "belief_sigma2_y", "belief_mu_l", "belief_sigma2_l",
                        "belief_mu_m", "belief_sigma2_m"});
    for (const auto& [key, vars] : byrow) {
        std::vector<std::string> f{key.first, std::to_string(key.second)};
        for (const char* v : {"y", "l", "m"}) {
            auto it = vars.find(v);
            if (it == vars.end()) {
                f.emplace_back();
                f.emplace_back();
            } else {
                f.push_back(format_double(it->second->mu));
                f.push_back(format_double(it->second->sigma2));
            }
        }
        write_csv_row(out, f);
    }
}

void write_belief_diagnostics_csv(std::ostream& out, const SurveyFit& fit) {
    struct Acc {
        std::size_t n = 0, degenerate = 0;
        double cdf = 0, surv = 0, both = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& r : fit.fitted) {
        Acc& a = acc[r.source.variable];
        ++a.n;
        a.degenerate += r.fit.degenerate ? 1 : 0;
        a.cdf += r.fit.mad_cdf;
        a.surv += r.fit.mad_survival;
        a.both += r.fit.mad;
    }
    write_csv_row(out, {"variable", "n", "mad_cdf", "mad_survival", "mad", "degenerate"});
    for (const auto& [v, a] : acc) {
        const double n = static_cast<double>(a.n);
        write_csv_row(out, {v, std::to_string(a.n), format_double(a.cdf / n), format_double(a.surv / n),
                            format_double(a.both / n), std::to_string(a.degenerate)});
    }
}

ScenarioResponse synthetic_response(double mu, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("synthetic_response: sigma must be >= 0");
    static const double pct[5] = {0.05, 0.25, 0.50, 0.75, 0.95};
    const boost::math::normal_distribution<double> nd;
    std::array<double, 5> zq{};
    for (int i = 0; i < 5; ++i) zq[i] = boost::math::quantile(nd, pct[i]);
    ScenarioResponse r;
    double prev = 0.0;
    for (int i = 0; i < 5; ++i) {
        r.values[i] = std::exp(mu + sigma * zq[i]);
        const double edge = i < 4 ? norm_cdf(0.5 * (zq[i] + zq[i + 1])) : 1.0;
        r.likelihoods[i] = 100.0 * (edge - prev);
        prev = edge;
    }
    return r;
}

SyntheticSurvey generate_survey(std::size_t n, std::uint64_t seed, double mu_lo, double mu_hi, double sigma_lo,
                                double sigma_hi) {
    static const char* vars[3] = {"turnover", "employment", "materials"};
    Rng rng(derive_seed(seed, 0, 0x5E));
    std::uniform_real_distribution<double> um(mu_lo, mu_hi), us(sigma_lo, sigma_hi);
    SyntheticSurvey s;
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = um(rng), sg = us(rng);
        SurveyRow row;
        row.firm_id = "s" + std::to_string(i / 3);
        row.year = 1;
        row.variable = vars[i % 3];
        row.response = synthetic_response(mu, sg);
        s.rows.push_back(std::move(row));
        s.truth.emplace_back(mu, sg * sg);
    }
    return s;
}

SyntheticSurvey survey_from_panel(const Panel& panel) {
    SyntheticSurvey s;
    for (const auto& r : panel.rows()) {
        for (const auto& [key, var] : {std::pair<const char*, const char*>{"y", "turnover"}, {"l", "employment"},
                                       {"m", "materials"}}) {
            const BeliefDistribution* b = r.belief(key);
            if (!b) continue;
            SurveyRow row;
            row.firm_id = r.firm_id;
            row.year = r.year;
            row.variable = var;
            row.response = synthetic_response(b->mu, std::sqrt(b->sigma2));
            s.rows.push_back(std::move(row));
            s.truth.emplace_back(b->mu, b->sigma2);
        }
    }
    return s;
}

}  // namespace prodexp
