#pragma once

#include <vector>

#include "prodexp/datamodel.hpp"
#include "prodexp/linalg.hpp"
#include "prodexp/optim.hpp"

namespace prodexp {

struct ProxyConfig {
    int poly_degree = 3;
    // Run stage 1 on an orthonormalized polynomial basis (same fitted values).
    bool orthogonalize = false;
    BfgsOptions optimizer{};
    bool plausibility_filter = false;
    double grid_lo = -0.5, grid_hi = 1.5;  // OP/LP stage-2 line search range
    int grid_points = 401;
};

// y on (1, l, k, year dummies); classical standard errors.
EstimationResult ols_levels(const Panel& panel);
// dy on (1, dl, dk, year dummies) over consecutive-year pairs.
EstimationResult ols_fd(const Panel& panel);
// Within-firm transformation of y, l, k and year dummies.
EstimationResult ols_fe(const Panel& panel);

EstimationResult op_fit(const Panel& panel, const ProxyConfig& cfg = {});
EstimationResult lp_fit(const Panel& panel, const ProxyConfig& cfg = {});
EstimationResult acf_fit(const Panel& panel, const ProxyConfig& cfg = {});

// Stage-1 fitted values of y on the proxy polynomial (plus l for OP/LP),
// exposed for basis-invariance checks. which: "op", "lp" or "acf".
Vector proxy_stage1_fitted(const Panel& panel, const std::string& which, const ProxyConfig& cfg);

bool plausible(const EstimationResult& r);

struct FilteredResults {
    std::vector<EstimationResult> kept;
    std::size_t n_in = 0;
    std::size_t n_kept = 0;
};

// Keeps results with beta_l and beta_k strictly inside (0, 1).
FilteredResults filter_plausible(const std::vector<EstimationResult>& results);

}  // namespace prodexp
