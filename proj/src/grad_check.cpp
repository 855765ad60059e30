// SPDX-License-Identifier: Apache-2.0
#include "layerlab/grad_check.hpp"

#include <cmath>

#include "layerlab/common.hpp"

namespace layerlab {

namespace {

double eval_at(const TapedScalarFn& fn, const Tensor& p) {
    Tape tape;
    Tape::NodeId leaf = tape.leaf(p, "p");
    Tape::NodeId root = fn(tape, leaf);
    const double v = tape.value(root).item();
    if (std::isnan(v))
        throw NumericError("gradient_check: function returned NaN at perturbed point");
    return v;
}

}  // namespace

double gradient_check(const TapedScalarFn& fn, const Tensor& p, double h) {
    if (h <= 0.0) throw NumericError("gradient_check: step must be positive");
    Tape tape;
    Tape::NodeId leaf = tape.leaf(p, "p");
    Tape::NodeId root = fn(tape, leaf);
    GradMap grads = tape.backward(root);
    const Tensor& analytic = grads.at("p");

    double worst = 0.0;
    Tensor probe = p;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double orig = p.data[i];
        probe.data[i] = orig + h;
        const double fp = eval_at(fn, probe);
        probe.data[i] = orig - h;
        const double fm = eval_at(fn, probe);
        probe.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel = std::abs(analytic.data[i] - numeric) /
                           (std::abs(analytic.data[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace layerlab
