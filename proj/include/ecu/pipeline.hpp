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

#ifndef ECU_PIPELINE_HPP
#define ECU_PIPELINE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecu/config.hpp"
#include "ecu/data.hpp"
#include "ecu/eval.hpp"
#include "ecu/nn.hpp"
#include "ecu/unlearn.hpp"

namespace ecu {

// Everything one seed of an experiment trains and evaluates on.
struct ExperimentData {
    Dataset train;
    Dataset test;
    SplitSpec split;
    Splits splits;
    std::vector<DownstreamSet> downstream;
};

ExperimentData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

// Pipeline stages. Each derives its own RNG stream from the run seed and
// stamps the config hash and seed into the bundle metadata.
ModelBundle stage_original(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                           std::vector<double>* epoch_loss = nullptr);
ModelBundle stage_retrain(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                          std::vector<double>* epoch_loss = nullptr);
ModelBundle stage_pretrain_ec(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                              std::uint64_t seed, PretrainReport* report = nullptr);

/// True when `spec` (under `variant`) trains through EC modules and so needs
/// the EC-pretrained bundle as its starting point.
bool needs_ec_modules(const MethodSpec& spec, Variant variant);

/// Unlearning from `original`, or from `ec_pretrained` when the method needs
/// EC modules (missing prerequisite -> PreconditionError).
UnlearnResult stage_unlearn(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                            const ModelBundle* ec_pretrained, const MethodSpec& spec, std::uint64_t seed,
                            const StepObserver& observer = {});

EvalReport stage_eval(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                      const ModelBundle& unlearned, const ModelBundle& retrained, const std::string& label);

/// Throws ShapeError unless the bundles share stage and classifier shapes.
void require_same_architecture(const ModelBundle& a, const ModelBundle& b, const std::string& what);

/// Report / directory label of a method run: "ec", "cu", "plugin:ga",
/// "ec[no-layerwise-ce]" for non-default variants.
std::string run_label(const MethodSpec& spec, Variant variant);

// out/<config-hash>/<label>/<seed>/...
struct RunPaths {
    std::string dir;
    std::string checkpoint;
    std::string losses;
    std::string train_log;
    std::string report_json;
    std::string report_csv;
    std::string features_dir;
};

RunPaths run_paths(const std::string& out, const std::string& config_hash, const std::string& label,
                   std::uint64_t seed);

/// "# config_hash=<h> seed=<s>" line that opens every CSV artifact.
std::string artifact_header(const std::string& config_hash, std::uint64_t seed);

std::string epoch_loss_csv(const std::vector<double>& loss);

// ---------------------------------------------------------------------------
// Grid driver

struct BenchCell {
    std::string method;  // run label
    std::size_t schedule = 0;
    std::vector<double> weights;
    std::uint64_t seed = 0;
    std::optional<EvalReport> report;
    std::string error;  // set when the cell failed
};

struct BenchResult {
    std::vector<BenchCell> cells;  // canonical order: method, schedule, seed
    std::string summary_csv;       // mean ± stdev per (method, schedule)
    std::string cells_csv;
};

/// Runs methods x seeds x weight schedules (the configured unlearn weights
/// when bench.weight_schedules is empty) on `parallel` worker threads.
/// Cells run in isolation; failed cells are recorded and the grid continues.
BenchResult run_bench(const ExperimentConfig& config, std::size_t parallel);

// ---------------------------------------------------------------------------
// Published table rows for H-Mean replay

struct PublishedRow {
    std::string table;  // benchmark setting: "imagenet1k-random100" or "cifar100-random10"
    std::string method;
    HMeanInputs inputs;
    double published = 0.0;
    bool required = false;  // must match within tolerance
};

const std::vector<PublishedRow>& published_rows();

inline constexpr double kReplayTolerance = 0.05;

}  // namespace ecu

#endif  // ECU_PIPELINE_HPP
