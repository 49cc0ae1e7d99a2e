/*
 * Copyright 2026 The ecunlearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ecu/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ecu/error.hpp"

namespace ecu {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& x) {
    const Tensor y = f(x);
    if (y.numel() != 1) throw ShapeError("grad_check: function is not scalar-valued");
    const double v = y.item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
}

}  // namespace

double grad_check(const ScalarFunction& f, const Tensor& x, double h) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    {
        Tape tape;
        Tensor y;
        {
            Tape::Scope scope(tape);
            y = f(probe);
        }
        if (y.numel() != 1) throw ShapeError("grad_check: function is not scalar-valued");
        tape.backward(y);
    }
    std::vector<double> analytic(probe.numel(), 0.0);
    if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

    double worst = 0.0;
    Tensor shifted = x.detach();
    auto values = shifted.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + h;
        const double plus = evaluate(f, shifted);
        values[i] = original - h;
        const double minus = evaluate(f, shifted);
        values[i] = original;
        const double numeric = (plus - minus) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace ecu
