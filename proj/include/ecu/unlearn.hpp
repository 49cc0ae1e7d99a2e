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

#ifndef ECU_UNLEARN_HPP
#define ECU_UNLEARN_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ecu/data.hpp"
#include "ecu/losses.hpp"
#include "ecu/nn.hpp"
#include "ecu/optim.hpp"

namespace ecu {

// ---------------------------------------------------------------------------
// Supervised training of the original model and the retrained oracle.

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 64;
    OptimizerConfig optimizer{OptimizerKind::sgd_momentum, 0.05, 0.9};
    std::uint64_t seed = 0;
};

/// Cross-entropy training of a freshly initialized backbone on `train`.
/// `epoch_loss`, when given, receives the mean batch loss of every epoch.
ModelBundle train_classifier(const Dataset& train, const Architecture& arch, const TrainConfig& config,
                             const std::string& provenance, std::vector<double>* epoch_loss = nullptr);
ModelBundle train_original(const Dataset& train, const Architecture& arch, const TrainConfig& config,
                           std::vector<double>* epoch_loss = nullptr);
/// Same recipe on the retain split only; the head keeps all C outputs.
ModelBundle retrain_oracle(const Dataset& retain_train, const Architecture& arch, const TrainConfig& config,
                           std::vector<double>* epoch_loss = nullptr);

// ---------------------------------------------------------------------------
// SupCon pretraining of the EC projection blocks.

struct PretrainConfig {
    std::size_t epochs = 20;
    std::size_t batch = 256;
    OptimizerConfig optimizer{OptimizerKind::sgd_momentum, 0.05, 0.9};
    double temperature = 0.1;
    std::uint64_t seed = 0;
};

struct PretrainReport {
    std::string frozen_hash_before;
    std::string frozen_hash_after;
    std::vector<double> epoch_loss;
};

/// Trains only the EC block parameters; backbone, final classifier and aux
/// classifiers stay bit-identical (verified by hash, NumericError-free
/// runtime_error otherwise).
ModelBundle supcon_pretrain(ModelBundle bundle, const Dataset& data, const PretrainConfig& config,
                            PretrainReport* report = nullptr);

/// Hash of every parameter that must not move during pretraining.
std::string frozen_hash(const ModelBundle& bundle);

// ---------------------------------------------------------------------------
// Unlearning.

enum class Variant { full, no_layerwise_ce, no_ec_modules, plus_final_blocks };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct UnlearnConfig {
    std::vector<double> layer_weights{0.2, 0.4, 0.8, 1.0};
    double lambda_cu = 1.5;
    double lambda_ce = 1.5;
    double temperature = 0.07;
    Variant variant = Variant::full;

    std::size_t epochs = 20;
    std::size_t forget_batch = 32;
    std::size_t retain_batch = 32;
    std::size_t omega = 2;
    OptimizerConfig optimizer{OptimizerKind::adam, 2e-4};
    double grad_clip = 0.0;  // 0 disables
    std::uint64_t seed = 0;

    void validate(std::size_t num_stages) const;
};

/// Inputs of one optimization step.
struct StepInput {
    Tensor forget_x;
    std::vector<int> forget_y;
    Tensor retain_x;
    std::vector<int> retain_y;
    std::vector<std::size_t> forget_index;  // row indices into D_f
    std::size_t epoch = 0;
};

/// Loss of one step plus per-supervision-point values for the log.
struct StepLoss {
    Tensor total;
    std::vector<std::optional<double>> cu;
    std::vector<std::optional<double>> ce;
};

using Objective = std::function<StepLoss(const ModelBundle&, const StepInput&)>;

struct LossLogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::vector<std::optional<double>> cu;
    std::vector<std::optional<double>> ce;
    double total = 0.0;
};

struct LossLog {
    std::vector<LossLogRow> rows;
    std::size_t num_stages = 0;

    /// Column label of supervision point p: 1..L, then L.0, L.1 for the
    /// split points inside the final stage.
    std::string point_name(std::size_t p) const;

    /// epoch,step,cu_1..cu_P,ce_1..ce_P,total (empty cells for absent terms).
    void write_csv(std::ostream& out) const;
    std::string to_csv() const;
};

/// Called after every optimizer step with the global step index.
using StepObserver = std::function<void(std::size_t step, const ModelBundle&)>;

struct UnlearnResult {
    ModelBundle bundle;
    LossLog log;
};

/// Generic unlearning loop: epochs x sampler steps, one optimizer over every
/// parameter of the bundle.
UnlearnResult run_unlearning(ModelBundle bundle, const Dataset& forget, const Dataset& retain,
                             const UnlearnConfig& config, const Objective& objective, const std::string& method,
                             const StepObserver& observer = {});

/// Per-layer CU / CE terms of the EC objective (supervision points 1..L,
/// plus two split points inside stage L for plus_final_blocks).
std::vector<LayerLoss> ec_layer_losses(const ModelBundle& bundle, const StepInput& in, const UnlearnConfig& config,
                                       const SplitSpec& split);
/// Weights matching `ec_layer_losses`.
std::vector<double> ec_point_weights(const UnlearnConfig& config);

Objective ec_objective(const UnlearnConfig& config, const SplitSpec& split);
/// Final-layer CU + CE only.
Objective cu_objective(const UnlearnConfig& config, const SplitSpec& split);
/// Forget labels redrawn uniformly from the retain classes every epoch.
Objective random_label_objective(const SplitSpec& split, std::uint64_t seed);
/// -CE on the forget batch plus CE on the retain batch.
Objective gradient_ascent_objective(const SplitSpec& split);
Objective finetune_objective(const SplitSpec& split);

/// Adds the intermediate-layer (l < L) EC terms to any base objective.
Objective plugin_augment(Objective base, const UnlearnConfig& config, const SplitSpec& split);

/// Random-label target for forget row `index` in `epoch`.
int random_label_for(const SplitSpec& split, std::uint64_t seed, std::size_t epoch, std::size_t index);

enum class Method { ec, cu, rl, ga, finetune, plugin };

struct MethodSpec {
    Method method = Method::ec;
    std::optional<Method> plugin_base;  // set when method == plugin

    std::string name() const;
};

/// Accepts ec, cu, rl, ga, finetune and plugin:<base>.
MethodSpec parse_method(const std::string& name);
std::string valid_methods();

/// Builds the objective for `spec` and adjusts the config (GA clipping).
UnlearnResult unlearn(ModelBundle bundle, const Splits& splits, const SplitSpec& split, const MethodSpec& spec,
                      UnlearnConfig config, const StepObserver& observer = {});

inline constexpr double kGradientAscentClip = 5.0;

}  // namespace ecu

#endif  // ECU_UNLEARN_HPP
