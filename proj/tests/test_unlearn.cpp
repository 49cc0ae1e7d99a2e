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

#include <vector>

#include "ecu/config.hpp"
#include "ecu/error.hpp"
#include "ecu/pipeline.hpp"

using namespace ecu;

namespace {

ExperimentConfig tiny() {
    ExperimentConfig c;
    c.blobs.num_classes = 6;
    c.blobs.dim = 6;
    c.blobs.train_per_class = 20;
    c.blobs.test_per_class = 10;
    c.blobs.spread = 0.5;
    c.downstream_classes = 4;
    c.hidden_width = 12;
    c.proj_dim = 6;
    c.train.epochs = 3;
    c.pretrain.epochs = 2;
    c.unlearn.epochs = 2;
    c.probe.epochs = 30;
    return c;
}

}  // namespace

TEST_CASE("method and variant names") {
    CHECK(parse_method("ec").method == Method::ec);
    const MethodSpec p = parse_method("plugin:ga");
    CHECK(p.method == Method::plugin);
    CHECK(p.plugin_base == Method::ga);
    CHECK(p.name() == "plugin:ga");
    CHECK_THROWS_WITH(parse_method("ecx"), doctest::Contains("ec"));
    CHECK_THROWS(parse_method("plugin:plugin:ga"));
    CHECK_THROWS(parse_method("plugin:"));
    CHECK(parse_variant("no-layerwise-ce") == Variant::no_layerwise_ce);
    CHECK(to_string(parse_variant("plus-final-blocks")) == "plus-final-blocks");
    CHECK_THROWS(parse_variant("everything"));
}

TEST_CASE("unlearning config validation") {
    UnlearnConfig u;
    CHECK_NOTHROW(u.validate(4));
    CHECK_THROWS(u.validate(3));
    u.layer_weights = {0.2, 0.4, 0.8, -1.0};
    CHECK_THROWS(u.validate(4));
}

TEST_CASE("zero loss weights leave every parameter untouched") {
    ExperimentConfig c = tiny();
    c.unlearn.lambda_cu = 0.0;
    c.unlearn.lambda_ce = 0.0;
    const ExperimentData data = prepare_data(c, 0);
    const ModelBundle original = stage_original(c, data, 0);
    const ModelBundle pre = stage_pretrain_ec(c, data, original, 0);
    std::size_t steps = 0;
    const UnlearnResult r = stage_unlearn(c, data, original, &pre, parse_method("ec"), 0,
                                          [&](std::size_t, const ModelBundle&) { ++steps; });
    CHECK(steps > 0);
    CHECK(hash_parameters(r.bundle.parameters()) == hash_parameters(pre.parameters()));
}

TEST_CASE("pretraining moves only the projection blocks") {
    const ExperimentConfig c = tiny();
    const ExperimentData data = prepare_data(c, 1);
    const ModelBundle original = stage_original(c, data, 1);
    PretrainReport report;
    const ModelBundle pre = stage_pretrain_ec(c, data, original, 1, &report);
    CHECK(report.frozen_hash_before == report.frozen_hash_after);
    CHECK(hash_parameters(pre.backbone_parameters()) == hash_parameters(original.backbone_parameters()));
    CHECK(report.epoch_loss.size() == c.pretrain.epochs);
}

TEST_CASE("EC runs need the pretrained bundle") {
    const ExperimentConfig c = tiny();
    const ExperimentData data = prepare_data(c, 2);
    const ModelBundle original = stage_original(c, data, 2);
    CHECK_THROWS_AS(stage_unlearn(c, data, original, nullptr, parse_method("ec"), 2), PreconditionError);
    CHECK_NOTHROW(stage_unlearn(c, data, original, nullptr, parse_method("ga"), 2));
}

TEST_CASE("unlearning is reproducible and logs every step") {
    const ExperimentConfig c = tiny();
    const ExperimentData data = prepare_data(c, 3);
    const ModelBundle original = stage_original(c, data, 3);
    const ModelBundle pre = stage_pretrain_ec(c, data, original, 3);
    const UnlearnResult a = stage_unlearn(c, data, original, &pre, parse_method("ec"), 3);
    const UnlearnResult b = stage_unlearn(c, data, original, &pre, parse_method("ec"), 3);
    CHECK(hash_parameters(a.bundle.parameters()) == hash_parameters(b.bundle.parameters()));
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK_FALSE(a.log.rows.empty());
    CHECK(a.log.rows.front().cu.size() == 4);
}
