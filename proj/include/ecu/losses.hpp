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

#ifndef ECU_LOSSES_HPP
#define ECU_LOSSES_HPP

#include <optional>
#include <span>
#include <vector>

#include "ecu/data.hpp"
#include "ecu/tensor.hpp"

namespace ecu {

/// Supervised contrastive loss over row-normalized embeddings `z`.
/// Positives are the other rows with the same label; the denominator runs
/// over every other row. Anchors without a positive are skipped; throws
/// PreconditionError when every anchor is skipped.
Tensor supcon_loss(const Tensor& z, std::span<const int> labels, double temperature);

/// Contrastive unlearning term of one layer:
/// -(1 / (m r)) * sum_ij log exp(zf_i . zr_j / tau) = -(1 / (m r tau)) * sum_ij zf_i . zr_j.
/// Rows must be unit-norm to within 1e-6.
Tensor cu_loss_layer(const Tensor& forget_z, const Tensor& retain_z, double temperature);

/// Mean cross-entropy of retain-batch logits. Throws if a forget-class
/// label slipped into the batch.
Tensor ce_loss_layer(const Tensor& logits, std::span<const int> labels, const SplitSpec& split);

/// Either term may be absent (ablation variants drop some of them).
struct LayerLoss {
    std::optional<Tensor> cu;
    std::optional<Tensor> ce;
};

/// sum_l w_l * (lambda_cu * cu_l + lambda_ce * ce_l), skipping absent terms.
Tensor total_loss(std::span<const LayerLoss> layers, std::span<const double> weights, double lambda_cu,
                  double lambda_ce);

}  // namespace ecu

#endif  // ECU_LOSSES_HPP
