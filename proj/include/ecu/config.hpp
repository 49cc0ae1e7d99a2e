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

#ifndef ECU_CONFIG_HPP
#define ECU_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ecu/data.hpp"
#include "ecu/eval.hpp"
#include "ecu/nn.hpp"
#include "ecu/unlearn.hpp"

namespace ecu {

// Experiment configuration.
//
// The file is plain text: `[section]` headers followed by `key = value`
// lines; `#` starts a comment. Lists are comma separated. Every key is
// optional (defaults below), every unknown key is an error, and errors carry
// the dotted path of the offending key. Sections and keys:
//
//   [data]      source (blobs|file), train_file, test_file, num_classes, dim,
//               train_per_class, test_per_class, spread, mean_scale,
//               downstream_sets, downstream_classes
//   [forget]    strategy (random|top-similarity|explicit), count, classes
//   [arch]      hidden_width, num_stages, proj_dim
//   [train]     epochs, batch, lr, momentum
//   [pretrain]  epochs, batch, lr, momentum, temperature
//   [unlearn]   layer_weights, lambda_cu, lambda_ce, temperature, variant,
//               epochs, forget_batch, retain_batch, omega, lr, grad_clip
//   [eval]      probe_epochs, probe_lr, probe_l2, probe_standardize, knn_k,
//               probe_attack
//   [run]       methods, seeds, output
//   [bench]     weight_schedules (`;`-separated list of weight lists)

enum class DataSource { blobs, file };
enum class ForgetStrategy { random, top_similarity, explicit_classes };

struct ExperimentConfig {
    // [data]
    DataSource source = DataSource::blobs;
    std::string train_file;
    std::string test_file;
    BlobParams blobs{};
    std::size_t downstream_sets = 1;
    std::size_t downstream_classes = 10;

    // [forget]
    ForgetStrategy forget_strategy = ForgetStrategy::random;
    std::size_t forget_count = 2;
    std::vector<int> forget_classes;

    // [arch]
    std::size_t hidden_width = 64;
    std::size_t num_stages = 4;
    std::size_t proj_dim = 32;

    TrainConfig train{};
    PretrainConfig pretrain{};
    UnlearnConfig unlearn{};

    // [eval]
    ProbeConfig probe{};
    std::size_t knn_k = 5;
    bool probe_attack = true;

    // [run]
    std::vector<std::string> methods{"ec", "cu"};
    std::vector<std::uint64_t> seeds{0};
    std::string output = "out";

    // [bench]
    std::vector<std::vector<double>> weight_schedules;

    /// Parses config text; `origin` names the source in error messages.
    static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
    static ExperimentConfig load(const std::string& path);

    /// Fully resolved `section.key = value` listing (defaults included),
    /// sorted by key.
    std::string canonical() const;
    /// FNV-1a of canonical() minus run.seeds, run.methods and
    /// unlearn.variant, which the artifact path already encodes.
    std::string hash() const;

    Architecture architecture(const Dataset& train) const;
    void validate() const;
};

std::string to_string(ForgetStrategy s);

}  // namespace ecu

#endif  // ECU_CONFIG_HPP
