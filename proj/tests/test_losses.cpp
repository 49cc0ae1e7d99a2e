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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "ecu/error.hpp"
#include "ecu/losses.hpp"
#include "ecu/ops.hpp"

using namespace ecu;

TEST_CASE("CU term scalar oracles") {
    const double s = 1.0 / std::sqrt(2.0);
    // One pair at 45 degrees, tau = 2: -(1 / tau) cos 45.
    CHECK(cu_loss_layer(Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(1, 2, {s, s}), 2.0).item() ==
          doctest::Approx(-0.353553).epsilon(1e-6));
    // Identical embeddings: -1 / tau.
    CHECK(cu_loss_layer(Tensor::matrix(1, 2, {0, 1}), Tensor::matrix(1, 2, {0, 1}), 0.07).item() ==
          doctest::Approx(-1.0 / 0.07));
    // Averaged over all m x r pairs.
    CHECK(cu_loss_layer(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::matrix(1, 2, {1, 0}), 1.0).item() ==
          doctest::Approx(-0.5));
}

TEST_CASE("CU term rejects unnormalized rows but allows zero rows") {
    CHECK_THROWS_AS(cu_loss_layer(Tensor::matrix(1, 2, {2, 0}), Tensor::matrix(1, 2, {1, 0}), 1.0),
                    PreconditionError);
    CHECK(cu_loss_layer(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {1, 0}), 1.0).item() == 0.0);
}

TEST_CASE("CE term refuses forget labels") {
    const SplitSpec split = SplitSpec::from_forget({1}, 3);
    const Tensor logits = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 1});
    CHECK(ce_loss_layer(logits, std::vector<int>{0, 2}, split).item() ==
          doctest::Approx(std::log(1.0 + 2.0 * std::exp(-1.0))));
    CHECK_THROWS_AS(ce_loss_layer(logits, std::vector<int>{0, 1}, split), PreconditionError);
}

TEST_CASE("SupCon oracle on two pairs") {
    // Rows 0,1 share a label and coincide; rows 2,3 likewise, orthogonal to the first pair.
    const Tensor z = Tensor::matrix(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
    const std::vector<int> labels{0, 0, 1, 1};
    const double tau = 0.5;
    // Each anchor: positive logit 1/tau against {1/tau, 0, 0}.
    const double expected = -(1.0 / tau - std::log(std::exp(1.0 / tau) + 2.0));
    CHECK(supcon_loss(z, labels, tau).item() == doctest::Approx(expected));
    CHECK_THROWS_AS(supcon_loss(z, std::vector<int>{0, 1, 2, 3}, tau), PreconditionError);
}

TEST_CASE("total loss weights layers and skips absent terms") {
    std::vector<LayerLoss> layers(3);
    layers[0].cu = Tensor::scalar(1.0);
    layers[0].ce = Tensor::scalar(10.0);
    layers[1].ce = Tensor::scalar(100.0);
    layers[2].cu = Tensor::scalar(1000.0);
    const std::vector<double> w{0.5, 0.25, 1.0};
    const double expected = 0.5 * (2 * 1 + 3 * 10) + 0.25 * 3 * 100 + 1.0 * 2 * 1000;
    CHECK(total_loss(layers, w, 2.0, 3.0).item() == doctest::Approx(expected));
    CHECK_THROWS(total_loss(layers, std::vector<double>{1.0}, 1.0, 1.0));
}
