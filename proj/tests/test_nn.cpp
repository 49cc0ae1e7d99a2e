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

#include <algorithm>
#include <string>
#include <vector>

#include "ecu/checkpoint.hpp"
#include "ecu/error.hpp"
#include "ecu/nn.hpp"

using namespace ecu;

namespace {

Architecture small_arch() {
    Architecture a;
    a.input_dim = 5;
    a.hidden_width = 7;
    a.num_stages = 4;
    a.num_classes = 3;
    a.proj_dim = 4;
    return a;
}

// Plain loops: x W + b then ReLU, row by row.
std::vector<double> dense_relu(const std::vector<double>& x, std::size_t n, const Affine& layer, bool relu) {
    const std::size_t in = layer.in_dim(), out = layer.out_dim();
    const auto w = layer.weight.values();
    const auto b = layer.bias.values();
    std::vector<double> y(n * out);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < out; ++j) {
            double acc = b[j];
            for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[k * out + j];
            y[i * out + j] = relu ? std::max(acc, 0.0) : acc;
        }
    }
    return y;
}

}  // namespace

TEST_CASE("forward taps follow the affine+ReLU chain") {
    const Backbone net = make_backbone(small_arch(), 11);
    std::vector<double> x(2 * 5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 * static_cast<double>(i) - 1.0;
    const ForwardResult out = forward_taps(net, Tensor::matrix(2, 5, x));
    REQUIRE(out.taps.size() == 4);

    std::vector<double> h = x;
    for (std::size_t l = 0; l < 4; ++l) {
        h = dense_relu(h, 2, net.stages[l].affine, true);
        const auto tap = out.taps[l].values();
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(tap[i] == doctest::Approx(h[i]).epsilon(1e-12));
    }
    const auto logits = dense_relu(h, 2, net.classifier, false);
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(out.logits.values()[i] == doctest::Approx(logits[i]));
}

TEST_CASE("EC modules hold L - k blocks") {
    const ModelBundle b = attach_ec_modules(make_backbone(small_arch(), 1), 4, 2);
    REQUIRE(b.ec_modules().size() == 3);
    for (const ECModule& m : b.ec_modules()) {
        CHECK(m.blocks.size() == 4 - m.stage);
        CHECK(m.proj_dim() == 4);
        CHECK(m.aux_classifier.out_dim() == 3);
    }
    CHECK(b.module_at(4) == nullptr);
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("initialization is a pure function of the seed") {
    const auto h1 = hash_parameters(attach_ec_modules(make_backbone(small_arch(), 5), 4, 6).parameters());
    const auto h2 = hash_parameters(attach_ec_modules(make_backbone(small_arch(), 5), 4, 6).parameters());
    const auto h3 = hash_parameters(attach_ec_modules(make_backbone(small_arch(), 5), 4, 7).parameters());
    CHECK(h1 == h2);
    CHECK(h1 != h3);
    CHECK(hash_hex(h1).size() == 16);
}

TEST_CASE("clone is independent") {
    const ModelBundle a = attach_ec_modules(make_backbone(small_arch(), 3), 4, 3);
    ModelBundle b = a.clone();
    b.backbone().stages[0].affine.weight.mutable_values()[0] += 1.0;
    CHECK(hash_parameters(a.parameters()) != hash_parameters(b.parameters()));
}

TEST_CASE("checkpoint round-trip is exact") {
    BundleMetadata meta{42, "abcdef", "unlearned:ec"};
    const ModelBundle a = attach_ec_modules(make_backbone(small_arch(), 9), 4, 10, meta);
    const ModelBundle b = decode_checkpoint(encode_checkpoint(a));
    CHECK(hash_parameters(a.parameters()) == hash_parameters(b.parameters()));
    CHECK(b.metadata().seed == 42);
    CHECK(b.metadata().config_hash == "abcdef");
    CHECK(b.metadata().provenance == "unlearned:ec");
    CHECK(encode_checkpoint(b) == encode_checkpoint(a));
}

TEST_CASE("corrupt checkpoints are rejected") {
    const std::string bytes = encode_checkpoint(attach_ec_modules(make_backbone(small_arch(), 9), 4, 10));
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 5)), FormatError);

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);

    std::string future = bytes;
    future[4] = static_cast<char>(kCheckpointVersion + 1);
    CHECK_THROWS_WITH_AS(decode_checkpoint(future), doctest::Contains("version"), FormatError);
}
