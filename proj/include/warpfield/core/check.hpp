#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tape.hpp"

namespace warpfield {

struct GradCheckResult {
    double max_rel_error = 0;
    double analytic_at_worst = 0, numeric_at_worst = 0;
    std::string worst_param;
    int worst_index = -1;
};

// Central finite differences against a backward sweep.
//
// `params` are the live parameter tensors the closures read. `analytic` must
// build the objective on a fresh tape and return per-parameter gradients
// aligned with `params`. `value` must re-evaluate the scalar objective (it is
// called with params perturbed in place). Relative error uses
// |a-n| / max(|a|,|n|), switching to absolute error when both magnitudes are
// below 1e-8.
inline GradCheckResult check_gradients(const std::vector<std::pair<std::string, Tensor*>>& params,
                                       const std::function<std::vector<Tensor>()>& analytic,
                                       const std::function<double()>& value, double eps = 1e-4) {
    std::vector<Tensor> grads = analytic();
    if (grads.size() != params.size())
        throw NumericError("check_gradients: analytic gradient count mismatch");

    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p].second;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double saved = t[i];
            t[i] = saved + eps;
            double fp = value();
            t[i] = saved - eps;
            double fm = value();
            t[i] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double analytic_g = grads[p][i];
            double err;
            if (std::abs(analytic_g) < 1e-8 && std::abs(numeric) < 1e-8)
                err = std::abs(analytic_g - numeric);
            else
                err = std::abs(analytic_g - numeric) / std::max(std::abs(analytic_g), std::abs(numeric));
            if (err > res.max_rel_error) {
                res.max_rel_error = err;
                res.analytic_at_worst = analytic_g;
                res.numeric_at_worst = numeric;
                res.worst_param = params[p].first;
                res.worst_index = int(i);
            }
        }
    }
    return res;
}

} // namespace warpfield
