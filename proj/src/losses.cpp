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

#include "ecu/losses.hpp"

#include <cmath>
#include <string>

#include "ecu/error.hpp"
#include "ecu/ops.hpp"

namespace ecu {

namespace {

// Exact-zero rows are accepted: they are what the normalization floor emits
// for a dead ReLU row, and they contribute nothing to either loss.
void require_unit_rows(const char* op, const Tensor& z) {
    if (z.ndim() != 2 || z.rows() == 0) throw ShapeError(std::string(op) + ": expected non-empty [n x p] embeddings");
    const std::size_t p = z.cols();
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < p; ++j) sq += z.values()[i * p + j] * z.values()[i * p + j];
        if (sq != 0.0 && std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
            throw PreconditionError(std::string(op) + ": row " + std::to_string(i) + " is not unit-norm");
        }
    }
}

}  // namespace

Tensor supcon_loss(const Tensor& z, std::span<const int> labels, double temperature) {
    if (!(temperature > 0.0)) throw PreconditionError("supcon_loss: temperature must be positive");
    require_unit_rows("supcon_loss", z);
    const std::size_t n = z.rows();
    if (labels.size() != n) throw ShapeError("supcon_loss: label count does not match rows");

    std::vector<unsigned char> others(n * n, 1);
    std::vector<double> positive_weight(n * n, 0.0);
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        others[i * n + i] = 0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) count += (j != i && labels[j] == labels[i]);
        if (count == 0) continue;
        ++anchors;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && labels[j] == labels[i]) positive_weight[i * n + j] = 1.0 / static_cast<double>(count);
        }
    }
    if (anchors == 0) throw PreconditionError("supcon_loss: no anchor in the batch has a positive");
    if (n < 2) throw PreconditionError("supcon_loss: batch needs at least 2 rows");

    // loss = -(1/A) sum_i (1/|P_i|) sum_{p in P_i} (s_ip - lse_{a != i} s_ia)
    const Tensor sim = scale(matmul(z, transpose(z)), 1.0 / temperature);
    const Tensor lse = masked_row_logsumexp(sim, others);  // [n x 1]
    std::vector<double> has_positive(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) has_positive[i] += positive_weight[i * n + j];
    }
    const Tensor pos = sum(mul(sim, Tensor({n, n}, std::move(positive_weight))));
    const Tensor norm = sum(mul(lse, Tensor({n, 1}, std::move(has_positive))));
    return scale(sub(norm, pos), 1.0 / static_cast<double>(anchors));
}

Tensor cu_loss_layer(const Tensor& forget_z, const Tensor& retain_z, double temperature) {
    if (!(temperature > 0.0)) throw PreconditionError("cu_loss_layer: temperature must be positive");
    require_unit_rows("cu_loss_layer", forget_z);
    require_unit_rows("cu_loss_layer", retain_z);
    if (forget_z.cols() != retain_z.cols()) throw ShapeError("cu_loss_layer: embedding widths differ");
    const double pairs = static_cast<double>(forget_z.rows() * retain_z.rows());
    return scale(sum(matmul(forget_z, transpose(retain_z))), -1.0 / (pairs * temperature));
}

Tensor ce_loss_layer(const Tensor& logits, std::span<const int> labels, const SplitSpec& split) {
    for (int y : labels) {
        if (split.is_forget(y)) {
            throw PreconditionError("ce_loss_layer: forget-class label " + std::to_string(y) + " in retain batch");
        }
    }
    return softmax_cross_entropy(logits, labels);
}

Tensor total_loss(std::span<const LayerLoss> layers, std::span<const double> weights, double lambda_cu,
                  double lambda_ce) {
    if (layers.size() != weights.size()) {
        throw ShapeError("total_loss: " + std::to_string(layers.size()) + " layers but " +
                         std::to_string(weights.size()) + " weights");
    }
    std::optional<Tensor> total;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::optional<Tensor> term;
        if (layers[l].cu) term = scale(*layers[l].cu, lambda_cu);
        if (layers[l].ce) {
            Tensor ce = scale(*layers[l].ce, lambda_ce);
            term = term ? add(*term, ce) : ce;
        }
        if (!term) continue;
        Tensor weighted = scale(*term, weights[l]);
        total = total ? add(*total, weighted) : weighted;
    }
    if (!total) throw PreconditionError("total_loss: no loss terms");
    return *total;
}

}  // namespace ecu
