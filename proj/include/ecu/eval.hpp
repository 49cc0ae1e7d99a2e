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

#ifndef ECU_EVAL_HPP
#define ECU_EVAL_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecu/data.hpp"
#include "ecu/nn.hpp"

namespace ecu {

/// Plain row-major feature matrix used by the metrics.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

Matrix to_matrix(const Tensor& t);
Matrix hconcat(const std::vector<Matrix>& parts);

/// Top-1 accuracy of the final logits, in percent.
double accuracy(const ModelBundle& bundle, const Dataset& part);

/// Raw backbone tap features (1-based tap index) for every row of `data`.
std::vector<Matrix> extract_taps(const ModelBundle& bundle, const Dataset& data);
Matrix penultimate_features(const ModelBundle& bundle, const Dataset& data);

/// Linear CKA of column-centered X and Y, in [0, 1].
double linear_cka(const Matrix& x, const Matrix& y);

/// linear_cka between the two bundles' raw taps on `data`, one value per
/// requested (1-based) tap.
std::vector<double> layerwise_cka(const ModelBundle& a, const ModelBundle& b, const Dataset& data,
                                  const std::vector<std::size_t>& taps);

// ---------------------------------------------------------------------------
// Linear probes

struct ProbeConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.05;
    double l2 = 1e-3;
    bool standardize = true;  // z-score features with train statistics
};

/// Multinomial logistic regression on (optionally standardized) features, trained
/// full-batch with Adam from a zero initialization (fully deterministic).
class LinearProbe {
  public:
    static LinearProbe fit(const Matrix& x, const std::vector<int>& labels, std::size_t num_classes,
                           const ProbeConfig& config);

    std::vector<int> predict(const Matrix& x) const;
    double accuracy(const Matrix& x, const std::vector<int>& labels) const;  // percent

  private:
    std::vector<double> mean_;
    std::vector<double> inv_std_;
    Tensor weight_;
    Tensor bias_;
};

struct IdiResult {
    double acc_original = 0.0;
    double acc_unlearned = 0.0;
    double acc_retrained = 0.0;
    double idi = 0.0;
};

inline constexpr double kIdiGuardPoints = 2.0;

/// Probe-based information difference index over the last min(3, L) taps.
/// (A_u - A_r) / (A_o - A_r); throws PreconditionError when |A_o - A_r| is
/// under kIdiGuardPoints.
IdiResult idi_probe(const ModelBundle& original, const ModelBundle& unlearned, const ModelBundle& retrained,
                    const Dataset& forget_train, const Dataset& forget_test, const SplitSpec& split,
                    const ProbeConfig& config = {});

/// Probe accuracy (percent) of forget-class identity from one bundle's
/// concatenated late taps.
double forget_probe_accuracy(const ModelBundle& bundle, const Dataset& forget_train, const Dataset& forget_test,
                             const SplitSpec& split, const ProbeConfig& config = {});

/// Euclidean k-NN with majority vote; ties go to the class with the smallest
/// summed neighbor distance, then the lower label. Percent.
double knn_accuracy(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, std::size_t k);

struct KnnResult {
    double accuracy = 0.0;
    std::optional<double> gap;  // |accuracy - retrained accuracy|
};

KnnResult knn_transfer(const ModelBundle& bundle, const Dataset& downstream_train, const Dataset& downstream_test,
                       std::size_t k = 5, std::optional<double> retrained_accuracy = std::nullopt);

/// Retrains a fresh C-way head on frozen penultimate features of `train`
/// and returns its accuracy (percent) on `forget_test`.
double probe_attack(const ModelBundle& bundle, const Dataset& train, const Dataset& forget_test,
                    const ProbeConfig& config = {});

// ---------------------------------------------------------------------------
// H-Mean

struct HMeanInputs {
    double fa = 0.0;
    double ra = 0.0;
    double tfa = 0.0;
    double tra = 0.0;
    double cka = 0.0;  // percent
    std::vector<double> knn_gaps;
    double idi = 0.0;  // signed or absolute; only |IDI| is used
};

struct HMeanScores {
    double s_fa = 0.0;
    double s_tfa = 0.0;
    double s_cka = 0.0;
    double s_ra = 0.0;
    double s_tra = 0.0;
    std::vector<double> s_knn;
    double s_idi = 0.0;
    double hmean = 0.0;

    std::vector<double> all() const;
};

/// Harmonic mean of the normalized scores. `published_layout` demands exactly
/// three k-NN gaps (nine scores).
HMeanScores hmean(const HMeanInputs& in, bool published_layout = false);

// ---------------------------------------------------------------------------
// Reports

struct DownstreamSet {
    std::string name;
    Dataset train;
    Dataset test;
};

struct EvalOptions {
    ProbeConfig probe;
    std::size_t knn_k = 5;
    bool run_probe_attack = true;
};

struct EvalReport {
    std::string method;
    std::uint64_t seed = 0;
    std::string config_hash;

    double fa = 0.0;
    double ra = 0.0;
    double tfa = 0.0;
    double tra = 0.0;
    double cka = 0.0;  // percent, final tap, D_f^te
    std::vector<double> layer_cka;  // percent, taps 1..L
    std::optional<double> idi;
    double idi_acc_original = 0.0;
    double idi_acc_unlearned = 0.0;
    double idi_acc_retrained = 0.0;
    std::vector<std::string> knn_names;
    std::vector<double> knn_accuracy;
    std::vector<double> knn_gaps;
    std::optional<double> probe_attack_tfa;
    std::optional<HMeanScores> scores;
};

EvalReport assemble_report(const std::string& method, const ModelBundle& original, const ModelBundle& unlearned,
                           const ModelBundle& retrained, const Splits& splits, const SplitSpec& split,
                           const std::vector<DownstreamSet>& downstream, const EvalOptions& options = {});

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Column order: method, FA, RA, TFA, TRA, knn gaps..., CKA, |IDI|, H-Mean.
std::string report_csv_header(const EvalReport& report);
std::string report_csv_row(const EvalReport& report);

}  // namespace ecu

#endif  // ECU_EVAL_HPP
