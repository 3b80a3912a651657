#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "octpredict/autodiff.hpp"
#include "octpredict/rng.hpp"
#include "octpredict/tensor.hpp"

namespace oct {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool finite = true;
    std::int64_t probes = 0;

    bool passed(double tol) const { return finite && max_rel_err <= tol; }
};

// Rebuilds the graph from the given inputs; must be side-effect free across
// calls (construct fresh batchnorm states inside).
using GraphFnD = std::function<ad::Var<double>(const std::vector<TensorPtrD>&)>;

// Compares reverse-mode gradients against central finite differences at
// n_probes randomly chosen coordinates of the differentiable inputs.
// Relative error is |a - n| / max(1, |a|, |n|). `exclude(input, index)`
// skips documented non-differentiable points (e.g. relu exactly at 0).
inline GradCheckReport gradcheck(const GraphFnD& f, const std::vector<TensorPtrD>& inputs, int n_probes, Rng& rng,
                                 double step = 1e-4,
                                 const std::function<bool(std::size_t, std::int64_t)>& exclude = nullptr) {
    GradCheckReport report;

    for (auto& t : inputs) {
        t->ensure_grad();
        t->zero_grad();
    }
    ad::Var<double> out = f(inputs);
    if (!std::isfinite(out.scalar())) {
        report.finite = false;
        return report;
    }
    out.backward();

    std::vector<std::size_t> diff_inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i]->requires_grad && inputs[i]->numel() > 0) diff_inputs.push_back(i);
    if (diff_inputs.empty()) return report;

    for (int probe = 0; probe < n_probes; ++probe) {
        const std::size_t ti = diff_inputs[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(diff_inputs.size())))];
        Tensor<double>& t = *inputs[ti];
        const std::int64_t ei = rng.uniform_int(t.numel());
        if (exclude && exclude(ti, ei)) continue;

        const double x0 = t.data[ei];
        const double h = step * std::max(1.0, std::abs(x0));
        t.data[ei] = x0 + h;
        const double fp = f(inputs).scalar();
        t.data[ei] = x0 - h;
        const double fm = f(inputs).scalar();
        t.data[ei] = x0;

        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            report.finite = false;
            return report;
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = t.grad[ei];
        const double rel = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.probes;
    }
    return report;
}

}  // namespace oct
