#include "doctest.h"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "prodexp/mcsim.hpp"
#include "prodexp/rng.hpp"

using namespace prodexp;

TEST_CASE("optimal labor maximizes value added net of the wage bill") {
    const DgpConfig c;
    CHECK(optimal_labor(1.0, 0.0, c) == doctest::Approx(std::pow(0.6, 2.5)).epsilon(1e-14));
    CHECK(std::pow(0.6, 2.5) == doctest::Approx(0.27885).epsilon(1e-4));
    for (double K : {0.5, 1.0, 7.0})
        for (double w : {-0.4, 0.0, 0.3}) {
            auto neg_profit = [&](double L) { return -(c.beta0 * std::pow(K, c.beta_k) * std::pow(L, c.beta_l) * std::exp(w) - L); };
            const auto r = boost::math::tools::brent_find_minima(neg_profit, 1e-6, 50.0, 50);
            CHECK(optimal_labor(K, w, c) == doctest::Approx(r.first).epsilon(1e-6));
        }
    DgpConfig flat = c;
    flat.beta_k = 0.0;
    CHECK(optimal_labor(1.0, 0.1, flat) == optimal_labor(9.0, 0.1, flat));
    CHECK(optimal_labor(1.0, 0.2, c) > optimal_labor(1.0, 0.1, c));
}

TEST_CASE("optimal materials sits at the Leontief kink") {
    const DgpConfig c;
    CHECK(optimal_materials(1.0, 1.0, 0.0, c) == 1.0);
    const double m1 = optimal_materials(2.0, 0.7, 0.0, c), m2 = optimal_materials(2.0, 0.7, std::log(3.0), c);
    CHECK(m2 / m1 == doctest::Approx(3.0).epsilon(1e-14));
    const double va = c.beta0 * std::pow(2.0, c.beta_k) * std::pow(0.7, c.beta_l);
    CHECK(c.beta_m * m1 == doctest::Approx(va).epsilon(1e-14));
}

TEST_CASE("investment series") {
    const DgpConfig c = scenario_config("l");
    const InvestmentPolicy pol(c);
    for (double w : {-0.9, 0.0, 0.9}) {
        const double a = pol.truncated(w, 1.0, 200), b = pol.truncated(w, 1.0, 2000);
        CHECK(std::abs(a - b) / b < 1e-12);
        CHECK(std::abs(pol(w, 1.0) - b) / b < 1e-11);
    }
    CHECK(pol(0.2, 1.0) > pol(0.1, 1.0));
    CHECK(pol(0.0, 2.0) == doctest::Approx(0.5 * pol(0.0, 1.0)).epsilon(1e-14));

    // Bracket factor: present only with labor error; sigma -> 0 limit is the plain bracket.
    const double bl = c.beta_l, a = 1.0 / (1.0 - bl), s2 = 0.37 * 0.37;
    CHECK(pol.bracket() == doctest::Approx(std::pow(bl, bl * a) * std::exp(0.5 * bl * bl * s2) - std::pow(bl, a) * std::exp(0.5 * s2)));
    DgpConfig tiny = c;
    tiny.opt_err.l = 1e-9;
    CHECK(InvestmentPolicy(tiny).bracket() == doctest::Approx(std::pow(bl, bl * a) - std::pow(bl, a)).epsilon(1e-12));
    CHECK(InvestmentPolicy(scenario_config("none")).bracket() == 1.0);

    // Term-by-term oracle for the first terms.
    const double sx2 = c.sigma_xi() * c.sigma_xi();
    double sum = 0;
    for (int tau = 1; tau <= 5; ++tau) {
        double v = 0;
        for (int s = 0; s <= tau; ++s) v += std::pow(c.rho, 2.0 * (tau - s));
        sum += std::pow(c.discount * (1 - c.delta), tau) * (c.beta_k * a) * std::pow(c.beta0, a) *
               std::exp(a * std::pow(c.rho, tau + 1) * 0.3 + 0.5 * a * a * v * sx2);
    }
    CHECK(pol.truncated(0.3, 1.0, 5) == doctest::Approx(c.discount * sum * pol.bracket()).epsilon(1e-13));

    DgpConfig bad = c;
    bad.discount = 1.3;
    CHECK_THROWS_AS(InvestmentPolicy{bad}, std::invalid_argument);
}

TEST_CASE("expected log labor") {
    const DgpConfig c = scenario_config("l");
    CHECK(expected_log_labor(0.0, 0.0, c) == doctest::Approx(std::log(0.6) / 0.4).epsilon(1e-14));
    CHECK(std::log(0.6) / 0.4 == doctest::Approx(-1.27706).epsilon(1e-5));
    DgpConfig r0 = c;
    r0.rho = 0.0;
    CHECK(expected_log_labor(0.5, 0.2, r0) == expected_log_labor(0.5, -0.4, r0));

    // Monte Carlo: log of realized labor next period given (k', omega).
    const double kn = 0.7, w = 0.25;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> nd;
    const int n = 1000000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double wn = c.rho * w + c.sigma_xi() * nd(rng);
        const double ll = std::log(optimal_labor(std::exp(kn), wn, c)) + c.opt_err.l * nd(rng);
        s += ll;
        ss += ll * ll;
    }
    const double mean = s / n, var = ss / n - mean * mean;
    CHECK(std::abs(mean - expected_log_labor(kn, w, c)) < 4.0 * std::sqrt(var / n));
    CHECK(var == doctest::Approx(variance_log_labor(c)).epsilon(1e-2));
}

TEST_CASE("expected log output matches brute force") {
    for (const char* sc : {"lm", "l"}) {
        const DgpConfig c = scenario_config(sc);
        const double kn = 1.3, w = -0.2;
        std::mt19937_64 rng(7);
        std::normal_distribution<double> nd;
        const int pairs = 500000;  // antithetic: 10^6 draws
        double s = 0, ss = 0;
        for (int i = 0; i < pairs; ++i) {
            const double z1 = nd(rng), z2 = nd(rng), z3 = nd(rng), z4 = nd(rng);
            for (double sg : {1.0, -1.0}) {
                const double wn = c.rho * w + c.sigma_xi() * sg * z1;
                const double K = std::exp(kn);
                const double L = optimal_labor(K, wn, c) * std::exp(c.opt_err.l * sg * z2);
                const double va = c.beta0 * std::pow(K, c.beta_k) * std::pow(L, c.beta_l) * std::exp(wn);
                const double M = va / c.beta_m * std::exp(c.opt_err.m * sg * z3);
                const double ly = std::log(std::min(va, c.beta_m * M)) + c.sigma_eps * sg * z4;
                s += ly;
                ss += ly * ly;
            }
        }
        const double n = 2.0 * pairs, mean = s / n;
        CHECK(std::abs(mean - expected_log_output(kn, w, c)) < 1e-3);
        CHECK(ss / n - mean * mean == doctest::Approx(variance_log_output(c)).epsilon(1e-2));
    }
    DgpConfig c = scenario_config("lm");
    const double with_m = expected_log_output(0.3, 0.1, c);
    c.opt_err.m = 0.0;
    CHECK(c.opt_err.m == 0.0);
    CHECK(expected_log_output(0.3, 0.1, c) - with_m == doctest::Approx(0.185 / std::sqrt(2 * M_PI)).epsilon(1e-12));
    CHECK(0.185 / std::sqrt(2 * M_PI) == doctest::Approx(0.07380).epsilon(1e-4));
}

TEST_CASE("simulated panel invariants") {
    DgpConfig c = scenario_config("l");
    c.seed = 5;
    const SimPanel sim = simulate(c);
    const Panel& p = sim.panel;
    REQUIRE(p.size() == 10000);
    REQUIRE(sim.truth.size() == p.size());

    SUBCASE("stationary productivity") {
        CHECK(std::abs(calibration(sim).sd_omega - 0.3) < 0.02);
    }
    SUBCASE("capital law of motion and carried beliefs") {
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            const double kn = sim.truth[i].k_next;
            CHECK(std::exp(kn) == doctest::Approx((1 - c.delta) * std::exp(p[i].k) + std::exp(*p[i].inv)).epsilon(1e-12));
            if (p[i + 1].firm_id == p[i].firm_id) CHECK(p[i + 1].k == kn);
            CHECK(p[i].belief("l")->mu == expected_log_labor(kn, sim.truth[i].omega, c));
            CHECK(p[i].belief("y")->mu == expected_log_output(kn, sim.truth[i].omega, c));
            CHECK(p[i].belief("l")->sigma2 == variance_log_labor(c));
        }
    }
    SUBCASE("beliefs are unbiased forecasts") {
        double sy = 0, syy = 0, sl = 0, sll = 0;
        int n = 0;
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            if (p[i + 1].firm_id != p[i].firm_id) continue;
            const double ey = p[i + 1].y - p[i].belief("y")->mu, el = p[i + 1].l - p[i].belief("l")->mu;
            sy += ey, syy += ey * ey, sl += el, sll += el * el;
            ++n;
        }
        const double my = sy / n, ml = sl / n;
        CHECK(std::abs(my) < 3.0 * std::sqrt((syy / n - my * my) / n));
        CHECK(std::abs(ml) < 3.0 * std::sqrt((sll / n - ml * ml) / n));
    }
    SUBCASE("planned materials follow optimal labor") {
        for (std::size_t i = 0; i < 50; ++i) {
            const double ls = std::log(optimal_labor(std::exp(p[i].k), sim.truth[i].omega, c));
            CHECK(*p[i].m == doctest::Approx(c.beta_k * p[i].k + c.beta_l * ls + sim.truth[i].omega).epsilon(1e-12));
        }
    }
}

TEST_CASE("Leontief identity with realized materials") {
    DgpConfig c = scenario_config("l");
    c.materials_proxy = MaterialsProxy::Realized;
    c.n_firms = 50;
    const SimPanel sim = simulate(c);
    for (std::size_t i = 0; i < sim.panel.size(); ++i)
        CHECK(sim.panel[i].y - sim.truth[i].eps == doctest::Approx(std::log(c.beta_m) + *sim.panel[i].m).epsilon(1e-12));
}

TEST_CASE("noiseless simulation: output equals value added") {
    DgpConfig c = scenario_config("none");
    c.sigma_eps = 0.0;
    c.n_firms = 20;
    const SimPanel sim = simulate(c);
    for (std::size_t i = 0; i < sim.panel.size(); ++i) {
        const FirmYear& r = sim.panel[i];
        CHECK(r.y == doctest::Approx(c.beta_k * r.k + c.beta_l * r.l + sim.truth[i].omega).epsilon(1e-12));
    }
}

TEST_CASE("bias channels shift beliefs") {
    DgpConfig base = scenario_config("l");
    base.n_firms = 30;
    const SimPanel ref = simulate(base);
    for (const char* sc : {"bias-el", "bias-ey", "bias-eomega", "bias-eomega-fixed", "bias-mgmt"}) {
        DgpConfig c = scenario_config(sc);
        c.n_firms = 30;
        const SimPanel sim = simulate(c);
        std::map<std::string, double> first_iota;
        for (std::size_t i = 0; i < sim.panel.size(); ++i) {
            const FirmYear& r = sim.panel[i];
            const FirmYear& q = ref.panel[i];
            // Shared random numbers: the realized panel is unchanged.
            CHECK(r.y == q.y);
            CHECK(r.l == q.l);
            const double b = sim.truth[i].iota;
            const double dl = r.belief("l")->mu - q.belief("l")->mu, dy = r.belief("y")->mu - q.belief("y")->mu;
            const std::string s = sc;
            if (s == "bias-el") {
                CHECK(dl == doctest::Approx(b).epsilon(1e-12));
                CHECK(dy == doctest::Approx(0.6 * b).epsilon(1e-12));
            } else if (s == "bias-ey") {
                CHECK(dl == 0.0);
                CHECK(dy == doctest::Approx(b).epsilon(1e-12));
            } else {
                CHECK(dl == doctest::Approx(b / 0.4).epsilon(1e-12));
                CHECK(dy == doctest::Approx(b / 0.4).epsilon(1e-12));
            }
            if (s == "bias-mgmt") {
                CHECK(b == doctest::Approx(-0.15 * *r.aux_value("mgmt")).epsilon(1e-14));
            } else {
                CHECK_FALSE(r.aux_value("mgmt").has_value());
            }
            if (s == "bias-eomega-fixed") {
                auto [it, fresh] = first_iota.emplace(r.firm_id, b);
                if (!fresh) CHECK(it->second == b);
            }
        }
    }
}

TEST_CASE("simulation is deterministic and seed dependent") {
    DgpConfig c = scenario_config("lim");
    c.n_firms = 40;
    c.seed = 17;
    std::ostringstream a, b, d;
    write_truth_csv(a, simulate(c));
    write_truth_csv(b, simulate(c));
    CHECK(a.str() == b.str());
    c.seed = 18;
    write_truth_csv(d, simulate(c));
    CHECK(a.str() != d.str());
}

TEST_CASE("config validation") {
    DgpConfig c;
    c.sigma_eps = -0.1;
    CHECK_THROWS_AS(simulate(c), std::invalid_argument);
    c = DgpConfig{};
    c.rho = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_THROWS_AS(scenario_config("nope"), std::invalid_argument);
    CHECK(scenario_config("mgmt").bias == BiasChannel::BiasedEOmegaMgmt);
    CHECK(DgpConfig{}.burn_in + DgpConfig{}.n_keep == 100);
    CHECK(DgpConfig{}.sigma_xi() == doctest::Approx(0.3 * std::sqrt(1 - 0.49)));
    CHECK(scenario_config("lm").realized_materials());
    CHECK_FALSE(scenario_config("l").realized_materials());
}

TEST_CASE("summaries") {
    const ParamSummary one = summarize({0.62}, 0.6);
    CHECK(one.mean == 0.62);
    CHECK(one.median == 0.62);
    CHECK_FALSE(one.sd.has_value());
    CHECK(one.mse == doctest::Approx(0.0004));
    const ParamSummary s = summarize({1.0, 2.0, 4.0, 3.0}, 2.0);
    CHECK(s.median == 2.5);
    CHECK(*s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.mse == doctest::Approx(1.5));
}

TEST_CASE("replications do not depend on the thread count") {
    DgpConfig c = scenario_config("l");
    c.n_firms = 150;
    const std::vector<Method> est{Method::OLS, Method::LP, Method::ACF};
    const SummaryTable a = run_replications(c, 4, est, 1, 3);
    const SummaryTable b = run_replications(c, 4, est, 3, 3);
    for (std::size_t e = 0; e < est.size(); ++e) {
        CHECK(a.estimators[e].beta_l == b.estimators[e].beta_l);
        CHECK(a.estimators[e].beta_k == b.estimators[e].beta_k);
    }
    const EstimatorSummary* lp = a.find(Method::LP);
    REQUIRE(lp);
    CHECK(lp->n_failed == 0);
    CHECK(lp->l.n == 4);
    CHECK(a.find(Method::OP) == nullptr);
    CHECK_THROWS_AS(run_replications(c, 0, est), std::invalid_argument);

    const SummaryTable single = run_replications(c, 1, {Method::OLS}, 1, 3);
    const SimPanel sim = [&] {
        DgpConfig d = c;
        d.seed = derive_seed(3, 0, 0x3C);
        return simulate(d);
    }();
    CHECK(single.estimators[0].l.mean == ols_levels(sim.panel).spec.beta_l);
    CHECK_FALSE(single.estimators[0].l.sd.has_value());
}
