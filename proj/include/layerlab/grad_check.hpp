// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "layerlab/tape.hpp"
#include "layerlab/tensor.hpp"

namespace layerlab {

// Builds a scalar expression from one leaf on a fresh tape.
using TapedScalarFn = std::function<Tape::NodeId(Tape&, Tape::NodeId)>;

// Compares the tape gradient of `fn` at `p` against central finite
// differences with step `h`. Returns the max over coordinates of
// |analytic - numeric| / (|analytic| + 1e-8). Errors if `fn` evaluates to
// NaN at any perturbed point.
double gradient_check(const TapedScalarFn& fn, const Tensor& p, double h);

}  // namespace layerlab
