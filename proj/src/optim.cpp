#include "prodexp/optim.hpp"

#include <boost/math/tools/minima.hpp>
#include <ceres/ceres.h>

#include <cmath>
#include <cstdint>

namespace prodexp {

namespace {

class CeresObjective final : public ceres::FirstOrderFunction {
public:
    CeresObjective(const Objective& fn, int n) : fn_(fn), n_(n), x_(n), g_(n) {}

    bool Evaluate(const double* params, double* cost, double* gradient) const override {
        for (int i = 0; i < n_; ++i) x_[i] = params[i];
        const double f = fn_(x_, gradient ? &g_ : nullptr);
        if (!std::isfinite(f)) return false;
        *cost = f;
        if (gradient) {
            for (int i = 0; i < n_; ++i) {
                if (!std::isfinite(g_[i])) return false;
                gradient[i] = g_[i];
            }
        }
        return true;
    }
    int NumParameters() const override { return n_; }

private:
    const Objective& fn_;
    int n_;
    mutable Vector x_;
    mutable Vector g_;
};

class TraceCallback final : public ceres::IterationCallback {
public:
    explicit TraceCallback(std::vector<double>* trace) : trace_(trace) {}
    ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
        if (s.step_is_successful || s.iteration == 0) trace_->push_back(s.cost);
        return ceres::SOLVER_CONTINUE;
    }

private:
    std::vector<double>* trace_;
};

}  // namespace

BfgsResult minimize_bfgs(const Objective& fn, const Vector& x0, const BfgsOptions& opt) {
    BfgsResult res;
    res.x = x0;
    const int n = static_cast<int>(x0.size());
    if (n == 0) {
        res.f = fn(x0, nullptr);
        res.converged = true;
        return res;
    }

    ceres::GradientProblem problem(new CeresObjective(fn, n));
    ceres::GradientProblemSolver::Options o;
    o.line_search_direction_type = ceres::BFGS;
    o.line_search_type = ceres::WOLFE;
    o.max_num_iterations = opt.max_iter;
    o.gradient_tolerance = opt.grad_tol;
    o.function_tolerance = opt.rel_obj_tol;
    o.parameter_tolerance = 0.0;
    o.logging_type = ceres::SILENT;
    o.minimizer_progress_to_stdout = false;
    TraceCallback cb(&res.trace);
    if (opt.record_trace) o.callbacks.push_back(&cb);

    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(o, problem, res.x.data(), &summary);

    res.f = summary.final_cost;
    res.iterations = static_cast<int>(summary.iterations.size());
    res.converged = summary.termination_type == ceres::CONVERGENCE;
    res.message = summary.message;
    return res;
}

Scalar1dResult minimize_scalar(const std::function<double(double)>& f, double lo, double hi,
                               int bits, int max_eval) {
    std::uintmax_t it = static_cast<std::uintmax_t>(max_eval);
    auto r = boost::math::tools::brent_find_minima(f, lo, hi, bits, it);
    Scalar1dResult out;
    out.x = r.first;
    out.f = r.second;
    out.evaluations = static_cast<int>(it);
    return out;
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + step;
        const double fp = f(xp);
        xp[i] = x[i] - step;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

}  // namespace prodexp
