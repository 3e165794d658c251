#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hgclr/ops.hpp"
#include "hgclr/tensor.hpp"

namespace hgclr {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference check of a scalar-valued computation against its recorded
// backward pass. `f` must rebuild the graph from the current parameter values
// and be deterministic (fix all noise before calling). Meaningful in 64-bit
// mode only.
template <class S>
GradCheckReport finite_diff_gradcheck(const std::function<Tensor<S>()>& f,
                                      const std::vector<std::pair<std::string, Tensor<S>>>& params,
                                      double step = 1e-5) {
    if (!(step > 0)) throw InvalidArgument("finite_diff_gradcheck: step must be positive");
    for (auto& [name, p] : params) const_cast<Tensor<S>&>(p).zero_grad();

    Tensor<S> loss = f();
    if (loss.numel() != 1) throw ShapeError("finite_diff_gradcheck: f must return a scalar");
    backward(loss);

    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) analytic.push_back(p.grad());

    GradCheckReport report;
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<S>& p = const_cast<Tensor<S>&>(params[pi].second);
        S* data = p.data();
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const S old = data[i];
            data[i] = old + static_cast<S>(step);
            const double lp = static_cast<double>(f().item());
            data[i] = old - static_cast<S>(step);
            const double lm = static_cast<double>(f().item());
            data[i] = old;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("finite_diff_gradcheck: non-finite loss at perturbed point of " +
                                   params[pi].first);
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = static_cast<double>(analytic[pi][static_cast<std::size_t>(i)]);
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[pi].first;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

// Single-tensor convenience form.
template <class S>
double finite_diff_gradcheck(const std::function<Tensor<S>()>& f, const Tensor<S>& point,
                             double step = 1e-5) {
    return finite_diff_gradcheck<S>(f, {{"point", point}}, step).max_rel_err;
}

}  // namespace hgclr
