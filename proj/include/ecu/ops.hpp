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

#ifndef ECU_OPS_HPP
#define ECU_OPS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "ecu/tensor.hpp"

namespace ecu {

// Primitive operations. No broadcasting: operand shapes must match exactly
// unless stated otherwise. All results are checked for finiteness.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// Mean / sum of all elements, as a scalar tensor.
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);

/// 2-D only. axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// 2-D only. Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Repeats a [d] or [1 x d] tensor into [rows x d].
Tensor expand_rows(const Tensor& a, std::size_t rows);

/// x / ||x|| along `axis` (1-D: axis 0; 2-D: axis 1 normalizes rows).
/// With eps == 0 a zero-norm slice throws PreconditionError; with eps > 0
/// the divisor is max(||x||, eps), so an all-zero slice maps to zero.
Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps = 0.0);

/// Mean over rows of -log softmax(logits)[label], max-subtracted.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise log-sum-exp over entries whose mask byte is non-zero.
/// `mask` is row-major with the same element count as `a`. Output [n x 1].
Tensor masked_row_logsumexp(const Tensor& a, std::span<const unsigned char> mask);

/// x W + b with b given as [1 x out].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace ecu

#endif  // ECU_OPS_HPP
