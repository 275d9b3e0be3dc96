#pragma once

#include <functional>

#include "mqi/autodiff.hpp"

// Central finite differences against the tape's analytic gradients.
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8); the check
// reports the max over all coordinates of all listed parameters.

namespace mqi {

namespace detail {

template <typename F>
double eval_loss(F&& f) {
    Tape<double> t;
    Val<double> loss = f(t);
    check(loss.tensor().numel() == 1, "finite_diff: loss must be scalar");
    const double v = loss.tensor()[0];
    if (!std::isfinite(v)) throw std::runtime_error("finite_diff: NaN during evaluation");
    return v;
}

}  // namespace detail

// f builds a scalar loss on the given tape; it must bind every parameter in
// `params` itself (via tape.param), so both the analytic pass and the
// perturbed re-evaluations see current parameter values.
template <typename F>
double finite_diff_check_params(F&& f, const std::vector<Parameter<double>*>& params, double eps = 1e-6) {
    for (auto* p : params) p->zero_grad();
    {
        Tape<double> t;
        Val<double> loss = f(t);
        check(loss.tensor().numel() == 1, "finite_diff: loss must be scalar");
        t.backward(loss);
    }
    double max_rel = 0;
    for (auto* p : params) {
        if (!p->grad.all_finite()) throw std::runtime_error("finite_diff: NaN gradient for " + p->name);
        for (long long i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double lp = detail::eval_loss(f);
            p->value[i] = saved - eps;
            const double lm = detail::eval_loss(f);
            p->value[i] = saved;
            const double numeric = (lp - lm) / (2 * eps);
            const double analytic = p->grad[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

// Gradient of a scalar function with respect to a single input tensor.
inline double finite_diff_check(const std::function<Val<double>(Tape<double>&, Val<double>)>& f,
                                const Tensor<double>& x, double eps = 1e-6) {
    Parameter<double> px("x", x);
    auto build = [&](Tape<double>& t) { return f(t, t.param(px)); };
    return finite_diff_check_params(build, {&px}, eps);
}

}  // namespace mqi
