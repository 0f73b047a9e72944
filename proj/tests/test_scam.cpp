#include "doctest.h"

#include <cmath>
#include <random>

#include "prodexp/scam.hpp"

using namespace prodexp;

namespace {

struct Data {
    Vector y, z;
    Matrix x;
};

Data identity_psi(int n, double sd, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Data d;
    d.y.resize(n);
    d.z.resize(n);
    d.x.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        const double x1 = nd(rng), z = nd(rng);
        d.x(i, 0) = 1.0;
        d.x(i, 1) = x1;
        d.z[i] = z;
        d.y[i] = 2.0 + 0.5 * x1 + z + sd * nd(rng);
    }
    return d;
}

double full_objective(const Data& d, const ScamFit& f, const Vector& beta, const Vector& gamma) {
    MonotoneSmooth s = f.smooth;
    s.gamma = gamma;
    const Vector r = d.y - d.x * beta - s(d.z);
    return r.squaredNorm() + penalty(gamma, f.smooth.lambda);
}

}  // namespace

TEST_CASE("identity smooth is recovered") {
    Data d = identity_psi(500, 0.01, 42);
    ScamFit f = fit_scam(d.y, d.x, d.z);
    CHECK(f.converged);
    CHECK(std::abs(f.beta[1] - 0.5) < 0.02);
    // Psi tracks z up to a constant.
    const Vector dev = f.psi - d.z;
    CHECK((dev.array() - dev.mean()).abs().maxCoeff() < 0.05);
    CHECK(std::abs(f.psi.mean()) < 1e-10);
    CHECK(f.edf >= 1.0);
    CHECK(f.edf <= 20.0 + 2.0);
}

TEST_CASE("fitted smooth is nondecreasing on a grid") {
    Data d = identity_psi(400, 0.3, 9);
    ScamFit f = fit_scam(d.y, d.x, d.z);
    const double lo = f.smooth.basis.lower(), hi = f.smooth.basis.upper();
    double prev = f.smooth(lo - 1.0);
    for (int i = 0; i <= 2000; ++i) {
        const double v = f.smooth(lo - 0.5 + (hi - lo + 1.0) * i / 2000.0);
        CHECK(v - prev >= -1e-10);
        prev = v;
    }
}

TEST_CASE("objective trace is nonincreasing") {
    Data d = identity_psi(300, 0.2, 4);
    ScamFit f = fit_scam(d.y, d.x, d.z, 1.0);
    REQUIRE(f.trace.size() >= 2);
    for (std::size_t i = 1; i < f.trace.size(); ++i)
        CHECK(f.trace[i] <= f.trace[i - 1] * (1 + 1e-12) + 1e-12);
}

TEST_CASE("GCV choice is locally optimal by a decade") {
    Data d = identity_psi(600, 0.5, 17);
    ScamDesign des(d.y, d.x);
    ScamFit f = des.fit(d.z, std::nullopt);
    const double lam = f.smooth.lambda;
    const double g = des.gcv(d.z, lam);
    CHECK(g == doctest::Approx(f.gcv).epsilon(1e-8));
    CHECK(g <= des.gcv(d.z, lam / 10) * (1 + 1e-6));
    CHECK(g <= des.gcv(d.z, lam * 10) * (1 + 1e-6));
}

TEST_CASE("returned point minimizes the unprofiled objective") {
    Data d = identity_psi(300, 0.4, 23);
    ScamFit f = fit_scam(d.y, d.x, d.z, 2.0);
    const double f0 = full_objective(d, f, f.beta, f.smooth.gamma);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 1e-3);
    for (int t = 0; t < 200; ++t) {
        Vector b = f.beta, raw = f.smooth.gamma_raw;
        for (auto& v : b) v += nd(rng);
        for (auto& v : raw) v += 10 * nd(rng);
        CHECK(full_objective(d, f, b, monotone_map(raw)) >= f0 - 1e-9);
    }
}

TEST_CASE("constant response gives a flat fit") {
    Data d = identity_psi(200, 0.0, 3);
    d.y.setConstant(1.7);
    ScamFit f = fit_scam(d.y, d.x, d.z);
    CHECK(f.beta[0] == doctest::Approx(1.7).epsilon(1e-10));
    CHECK(std::abs(f.beta[1]) < 1e-10);
    CHECK(f.psi.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(f.sse < 1e-16);
}

TEST_CASE("huge lambda flattens the smooth") {
    Data d = identity_psi(300, 0.1, 8);
    ScamFit f = fit_scam(d.y, d.x, d.z, 1e8);
    CHECK(f.psi.cwiseAbs().maxCoeff() < 1e-3);
    // Whatever flexibility remains is linear in z.
    Matrix zx(300, 2);
    zx.col(0).setOnes();
    zx.col(1) = d.z;
    OlsFit lin = ols(zx, f.psi, SeType::None);
    CHECK(lin.resid.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("errors and degenerate inputs") {
    Data d = identity_psi(100, 0.1, 1);
    Matrix bad(100, 3);
    bad << d.x, d.x.col(1) * 2.0;
    CHECK_THROWS_AS(fit_scam(d.y, bad, d.z), RankDeficientError);

    Matrix noint = d.x.rightCols(1);
    CHECK_THROWS_AS(fit_scam(d.y, noint, d.z), std::invalid_argument);

    Vector zc = Vector::Constant(100, 0.3);
    ScamFit f = fit_scam(d.y, d.x, zc);
    CHECK(!f.warnings.empty());
    CHECK(f.smooth.lambda == 1e8);
    CHECK(f.psi.cwiseAbs().maxCoeff() == 0.0);
}
