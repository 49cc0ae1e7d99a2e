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

#ifndef ECU_GRAD_CHECK_HPP
#define ECU_GRAD_CHECK_HPP

#include <functional>

#include "ecu/tensor.hpp"

namespace ecu {

using ScalarFunction = std::function<Tensor(const Tensor&)>;

/// Compares the taped gradient of scalar `f` at `x` with central finite
/// differences of step `h`. Returns max_i |analytic - numeric| / max(1, |analytic|).
/// Throws NumericError if `f` produces a non-finite value.
double grad_check(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

}  // namespace ecu

#endif  // ECU_GRAD_CHECK_HPP
