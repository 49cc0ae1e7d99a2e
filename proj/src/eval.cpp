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

#include "ecu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "ecu/error.hpp"
#include "ecu/ops.hpp"
#include "ecu/optim.hpp"

namespace ecu {

using nlohmann::json;

Matrix to_matrix(const Tensor& t) {
    return Matrix{t.rows(), t.cols(), std::vector<double>(t.values().begin(), t.values().end())};
}

Matrix hconcat(const std::vector<Matrix>& parts) {
    if (parts.empty()) throw ShapeError("hconcat: no parts");
    Matrix out{parts[0].rows, 0, {}};
    for (const auto& p : parts) {
        if (p.rows != out.rows) throw ShapeError("hconcat: row counts differ");
        out.cols += p.cols;
    }
    out.data.reserve(out.rows * out.cols);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (const auto& p : parts) out.data.insert(out.data.end(), p.data.begin() + r * p.cols, p.data.begin() + (r + 1) * p.cols);
    }
    return out;
}

namespace {

std::size_t argmax_row(std::span<const double> values, std::size_t row, std::size_t cols) {
    const double* begin = values.data() + row * cols;
    return static_cast<std::size_t>(std::max_element(begin, begin + cols) - begin);
}

}  // namespace

double accuracy(const ModelBundle& bundle, const Dataset& part) {
    if (part.size() == 0) throw PreconditionError("accuracy: empty dataset part");
    const Tensor logits = forward_taps(bundle, part.all()).logits;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < part.size(); ++i) {
        correct += static_cast<int>(argmax_row(logits.values(), i, logits.cols())) == part.labels[i];
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(part.size());
}

std::vector<Matrix> extract_taps(const ModelBundle& bundle, const Dataset& data) {
    const ForwardResult fwd = forward_taps(bundle, data.all());
    std::vector<Matrix> out;
    for (const auto& t : fwd.taps) out.push_back(to_matrix(t));
    return out;
}

Matrix penultimate_features(const ModelBundle& bundle, const Dataset& data) {
    return to_matrix(forward_taps(bundle, data.all()).taps.back());
}

namespace {

Matrix center_columns(const Matrix& m) {
    Matrix out = m;
    for (std::size_t c = 0; c < m.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m.rows; ++r) mean += m.at(r, c);
        mean /= static_cast<double>(m.rows);
        for (std::size_t r = 0; r < m.rows; ++r) out.at(r, c) -= mean;
    }
    return out;
}

// ||A^T B||_F^2
double cross_frobenius_sq(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.cols; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double dot = 0.0;
            for (std::size_t r = 0; r < a.rows; ++r) dot += a.at(r, i) * b.at(r, j);
            total += dot * dot;
        }
    }
    return total;
}

}  // namespace

double linear_cka(const Matrix& x, const Matrix& y) {
    if (x.rows != y.rows) throw ShapeError("linear_cka: row counts differ");
    if (x.rows < 2) throw PreconditionError("linear_cka: need at least 2 rows");
    const Matrix xc = center_columns(x);
    const Matrix yc = center_columns(y);
    const double xx = std::sqrt(cross_frobenius_sq(xc, xc));
    const double yy = std::sqrt(cross_frobenius_sq(yc, yc));
    const double denom = xx * yy;
    if (denom < 1e-12) throw PreconditionError("linear_cka: zero-variance input");
    return std::clamp(cross_frobenius_sq(yc, xc) / denom, 0.0, 1.0);
}

std::vector<double> layerwise_cka(const ModelBundle& a, const ModelBundle& b, const Dataset& data,
                                  const std::vector<std::size_t>& taps) {
    if (a.num_stages() != b.num_stages()) throw ShapeError("layerwise_cka: tap structure differs between bundles");
    const auto fa = extract_taps(a, data);
    const auto fb = extract_taps(b, data);
    std::vector<double> out;
    for (std::size_t t : taps) {
        if (t < 1 || t > fa.size()) throw PreconditionError("layerwise_cka: tap " + std::to_string(t) + " out of range");
        if (fa[t - 1].cols != fb[t - 1].cols) throw ShapeError("layerwise_cka: tap widths differ");
        out.push_back(linear_cka(fa[t - 1], fb[t - 1]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear probe

LinearProbe LinearProbe::fit(const Matrix& x, const std::vector<int>& labels, std::size_t num_classes,
                             const ProbeConfig& config) {
    if (x.rows == 0 || x.rows != labels.size()) throw PreconditionError("probe: empty or mismatched training set");
    LinearProbe probe;
    probe.mean_.assign(x.cols, 0.0);
    probe.inv_std_.assign(x.cols, 0.0);
    for (std::size_t c = 0; c < x.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) mean += x.at(r, c);
        mean /= static_cast<double>(x.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
        var /= static_cast<double>(x.rows);
        probe.mean_[c] = config.standardize ? mean : 0.0;
        probe.inv_std_[c] = !config.standardize ? 1.0 : var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    }
    std::vector<double> standardized(x.data.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            standardized[r * x.cols + c] = (x.at(r, c) - probe.mean_[c]) * probe.inv_std_[c];
        }
    }
    const Tensor input({x.rows, x.cols}, std::move(standardized));
    probe.weight_ = Tensor::zeros({x.cols, num_classes}, true);
    probe.bias_ = Tensor::zeros({1, num_classes}, true);
    Optimizer opt(OptimizerConfig{OptimizerKind::adam, config.learning_rate}, {probe.weight_, probe.bias_});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        opt.zero_grad();
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            loss = softmax_cross_entropy(affine(input, probe.weight_, probe.bias_), labels);
            if (config.l2 > 0.0) loss = add(loss, scale(sum(mul(probe.weight_, probe.weight_)), 0.5 * config.l2));
        }
        tape.backward(loss);
        opt.step();
    }
    probe.weight_.zero_grad();
    probe.bias_.zero_grad();
    return probe;
}

std::vector<int> LinearProbe::predict(const Matrix& x) const {
    if (x.cols != mean_.size()) throw ShapeError("probe: feature width differs from training");
    std::vector<double> standardized(x.data.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) standardized[r * x.cols + c] = (x.at(r, c) - mean_[c]) * inv_std_[c];
    }
    const Tensor logits = affine(Tensor({x.rows, x.cols}, std::move(standardized)), weight_.detach(), bias_.detach());
    std::vector<int> out;
    for (std::size_t r = 0; r < x.rows; ++r) out.push_back(static_cast<int>(argmax_row(logits.values(), r, logits.cols())));
    return out;
}

double LinearProbe::accuracy(const Matrix& x, const std::vector<int>& labels) const {
    if (x.rows == 0) throw PreconditionError("probe: empty evaluation set");
    const auto pred = predict(x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// IDI

namespace {

Matrix late_tap_features(const ModelBundle& bundle, const Dataset& data) {
    auto taps = extract_taps(bundle, data);
    const std::size_t keep = std::min<std::size_t>(3, taps.size());
    std::vector<Matrix> late(taps.end() - static_cast<std::ptrdiff_t>(keep), taps.end());
    return hconcat(late);
}

std::vector<int> forget_index_labels(const Dataset& data, const SplitSpec& split) {
    std::vector<int> out;
    for (int y : data.labels) {
        const auto it = std::lower_bound(split.forget.begin(), split.forget.end(), y);
        if (it == split.forget.end() || *it != y) throw PreconditionError("idi: sample outside the forget classes");
        out.push_back(static_cast<int>(it - split.forget.begin()));
    }
    return out;
}

}  // namespace

double forget_probe_accuracy(const ModelBundle& bundle, const Dataset& forget_train, const Dataset& forget_test,
                             const SplitSpec& split, const ProbeConfig& config) {
    const auto probe = LinearProbe::fit(late_tap_features(bundle, forget_train), forget_index_labels(forget_train, split),
                                        split.forget.size(), config);
    return probe.accuracy(late_tap_features(bundle, forget_test), forget_index_labels(forget_test, split));
}

IdiResult idi_probe(const ModelBundle& original, const ModelBundle& unlearned, const ModelBundle& retrained,
                    const Dataset& forget_train, const Dataset& forget_test, const SplitSpec& split,
                    const ProbeConfig& config) {
    if (original.num_stages() != unlearned.num_stages() || original.num_stages() != retrained.num_stages()) {
        throw ShapeError("idi_probe: bundles do not share an architecture");
    }
    IdiResult r;
    r.acc_original = forget_probe_accuracy(original, forget_train, forget_test, split, config);
    r.acc_retrained = forget_probe_accuracy(retrained, forget_train, forget_test, split, config);
    r.acc_unlearned = forget_probe_accuracy(unlearned, forget_train, forget_test, split, config);
    const double denom = r.acc_original - r.acc_retrained;
    if (std::abs(denom) < kIdiGuardPoints) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "idi_probe: undefined, |A_o - A_r| = %.3f points is below the %.1f-point guard",
                      std::abs(denom), kIdiGuardPoints);
        throw PreconditionError(buf);
    }
    r.idi = (r.acc_unlearned - r.acc_retrained) / denom;
    return r;
}

// ---------------------------------------------------------------------------
// k-NN

double knn_accuracy(const Matrix& train, const std::vector<int>& train_labels, const Matrix& test,
                    const std::vector<int>& test_labels, std::size_t k) {
    if (train.rows == 0 || test.rows == 0) throw PreconditionError("knn: empty train or test set");
    if (k == 0 || k > train.rows) throw PreconditionError("knn: k = " + std::to_string(k) + " exceeds train size");
    if (train.cols != test.cols) throw ShapeError("knn: feature widths differ");
    std::size_t correct = 0;
    std::vector<std::pair<double, std::size_t>> dist(train.rows);
    for (std::size_t q = 0; q < test.rows; ++q) {
        for (std::size_t i = 0; i < train.rows; ++i) {
            double sq = 0.0;
            for (std::size_t c = 0; c < train.cols; ++c) {
                const double d = test.at(q, c) - train.at(i, c);
                sq += d * d;
            }
            dist[i] = {std::sqrt(sq), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, summed distance)
        for (std::size_t j = 0; j < k; ++j) {
            auto& v = votes[train_labels[dist[j].second]];
            ++v.first;
            v.second += dist[j].first;
        }
        int best = votes.begin()->first;
        for (const auto& [label, v] : votes) {
            const auto& b = votes[best];
            if (v.first > b.first || (v.first == b.first && v.second < b.second)) best = label;
        }
        correct += best == test_labels[q];
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test.rows);
}

KnnResult knn_transfer(const ModelBundle& bundle, const Dataset& downstream_train, const Dataset& downstream_test,
                       std::size_t k, std::optional<double> retrained_accuracy) {
    KnnResult r;
    r.accuracy = knn_accuracy(penultimate_features(bundle, downstream_train), downstream_train.labels,
                              penultimate_features(bundle, downstream_test), downstream_test.labels, k);
    if (retrained_accuracy) r.gap = std::abs(r.accuracy - *retrained_accuracy);
    return r;
}

double probe_attack(const ModelBundle& bundle, const Dataset& train, const Dataset& forget_test,
                    const ProbeConfig& config) {
    const auto probe = LinearProbe::fit(penultimate_features(bundle, train), train.labels, bundle.num_classes(), config);
    return probe.accuracy(penultimate_features(bundle, forget_test), forget_test.labels);
}

// ---------------------------------------------------------------------------
// H-Mean

std::vector<double> HMeanScores::all() const {
    std::vector<double> out{s_fa, s_ra, s_tfa, s_tra};
    out.insert(out.end(), s_knn.begin(), s_knn.end());
    out.push_back(s_cka);
    out.push_back(s_idi);
    return out;
}

HMeanScores hmean(const HMeanInputs& in, bool published_layout) {
    auto check_pct = [](const char* name, double v) {
        if (!(v >= 0.0 && v <= 100.0)) throw PreconditionError(std::string("hmean: ") + name + " outside [0, 100]");
    };
    check_pct("FA", in.fa);
    check_pct("RA", in.ra);
    check_pct("TFA", in.tfa);
    check_pct("TRA", in.tra);
    check_pct("CKA", in.cka);
    for (double g : in.knn_gaps) check_pct("k-NN gap", std::abs(g));
    if (!std::isfinite(in.idi)) throw PreconditionError("hmean: IDI is not finite");
    if (published_layout && in.knn_gaps.size() != 3) {
        throw PreconditionError("hmean: published-layout mode needs exactly 3 k-NN gaps");
    }
    HMeanScores s;
    s.s_fa = 100.0 - in.fa;
    s.s_tfa = 100.0 - in.tfa;
    s.s_cka = 100.0 - in.cka;
    s.s_ra = in.ra;
    s.s_tra = in.tra;
    for (double g : in.knn_gaps) s.s_knn.push_back(100.0 - std::abs(g));
    s.s_idi = 100.0 * std::clamp(1.0 - std::abs(in.idi), 0.1, 1.0);
    double inv = 0.0;
    const auto scores = s.all();
    for (double v : scores) {
        if (!(v > 0.0)) throw PreconditionError("hmean: a normalized score is not positive");
        inv += 1.0 / v;
    }
    s.hmean = static_cast<double>(scores.size()) / inv;
    return s;
}

// ---------------------------------------------------------------------------
// Report

EvalReport assemble_report(const std::string& method, const ModelBundle& original, const ModelBundle& unlearned,
                           const ModelBundle& retrained, const Splits& splits, const SplitSpec& split,
                           const std::vector<DownstreamSet>& downstream, const EvalOptions& options) {
    EvalReport r;
    r.method = method;
    r.seed = unlearned.metadata().seed;
    r.config_hash = unlearned.metadata().config_hash;
    r.fa = accuracy(unlearned, splits.forget_train);
    r.ra = accuracy(unlearned, splits.retain_train);
    r.tfa = accuracy(unlearned, splits.forget_test);
    r.tra = accuracy(unlearned, splits.retain_test);

    std::vector<std::size_t> taps;
    for (std::size_t t = 1; t <= original.num_stages(); ++t) taps.push_back(t);
    for (double v : layerwise_cka(original, unlearned, splits.forget_test, taps)) r.layer_cka.push_back(100.0 * v);
    r.cka = r.layer_cka.back();

    try {
        const IdiResult idi =
            idi_probe(original, unlearned, retrained, splits.forget_train, splits.forget_test, split, options.probe);
        r.idi = idi.idi;
        r.idi_acc_original = idi.acc_original;
        r.idi_acc_unlearned = idi.acc_unlearned;
        r.idi_acc_retrained = idi.acc_retrained;
    } catch (const PreconditionError&) {
        r.idi.reset();
    }

    for (const auto& ds : downstream) {
        const double ref = knn_transfer(retrained, ds.train, ds.test, options.knn_k).accuracy;
        const KnnResult k = knn_transfer(unlearned, ds.train, ds.test, options.knn_k, ref);
        r.knn_names.push_back(ds.name);
        r.knn_accuracy.push_back(k.accuracy);
        r.knn_gaps.push_back(*k.gap);
    }
    if (options.run_probe_attack) {
        r.probe_attack_tfa =
            probe_attack(unlearned, concat_datasets(splits.forget_train, splits.retain_train), splits.forget_test,
                         options.probe);
    }
    if (r.idi) {
        try {
            r.scores = hmean(HMeanInputs{r.fa, r.ra, r.tfa, r.tra, r.cka, r.knn_gaps, *r.idi});
        } catch (const PreconditionError&) {
            r.scores.reset();
        }
    }
    return r;
}

json report_to_json(const EvalReport& r) {
    json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["FA"] = r.fa;
    j["RA"] = r.ra;
    j["TFA"] = r.tfa;
    j["TRA"] = r.tra;
    j["CKA"] = r.cka;
    j["layer_CKA"] = r.layer_cka;
    j["IDI"] = r.idi ? json(*r.idi) : json(nullptr);
    j["IDI_probe_acc"] = {{"original", r.idi_acc_original},
                          {"unlearned", r.idi_acc_unlearned},
                          {"retrained", r.idi_acc_retrained}};
    j["knn"] = json::array();
    for (std::size_t i = 0; i < r.knn_names.size(); ++i) {
        j["knn"].push_back({{"name", r.knn_names[i]}, {"accuracy", r.knn_accuracy[i]}, {"gap", r.knn_gaps[i]}});
    }
    j["probe_attack_TFA"] = r.probe_attack_tfa ? json(*r.probe_attack_tfa) : json(nullptr);
    if (r.scores) {
        const auto& s = *r.scores;
        j["scores"] = {{"s_FA", s.s_fa}, {"s_RA", s.s_ra},   {"s_TFA", s.s_tfa}, {"s_TRA", s.s_tra},
                       {"s_kNN", s.s_knn}, {"s_CKA", s.s_cka}, {"s_IDI", s.s_idi}};
        j["H_Mean"] = s.hmean;
    } else {
        j["scores"] = nullptr;
        j["H_Mean"] = nullptr;
    }
    return j;
}

EvalReport report_from_json(const json& j) {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.fa = j.at("FA").get<double>();
    r.ra = j.at("RA").get<double>();
    r.tfa = j.at("TFA").get<double>();
    r.tra = j.at("TRA").get<double>();
    r.cka = j.at("CKA").get<double>();
    r.layer_cka = j.at("layer_CKA").get<std::vector<double>>();
    if (!j.at("IDI").is_null()) r.idi = j.at("IDI").get<double>();
    r.idi_acc_original = j.at("IDI_probe_acc").at("original").get<double>();
    r.idi_acc_unlearned = j.at("IDI_probe_acc").at("unlearned").get<double>();
    r.idi_acc_retrained = j.at("IDI_probe_acc").at("retrained").get<double>();
    for (const auto& k : j.at("knn")) {
        r.knn_names.push_back(k.at("name").get<std::string>());
        r.knn_accuracy.push_back(k.at("accuracy").get<double>());
        r.knn_gaps.push_back(k.at("gap").get<double>());
    }
    if (!j.at("probe_attack_TFA").is_null()) r.probe_attack_tfa = j.at("probe_attack_TFA").get<double>();
    if (!j.at("scores").is_null()) {
        const auto& s = j.at("scores");
        HMeanScores sc;
        sc.s_fa = s.at("s_FA").get<double>();
        sc.s_ra = s.at("s_RA").get<double>();
        sc.s_tfa = s.at("s_TFA").get<double>();
        sc.s_tra = s.at("s_TRA").get<double>();
        sc.s_knn = s.at("s_kNN").get<std::vector<double>>();
        sc.s_cka = s.at("s_CKA").get<double>();
        sc.s_idi = s.at("s_IDI").get<double>();
        sc.hmean = j.at("H_Mean").get<double>();
        r.scores = sc;
    }
    return r;
}

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string report_csv_header(const EvalReport& r) {
    std::string out = "method,FA,RA,TFA,TRA";
    for (const auto& name : r.knn_names) out += ",knn_gap_" + name;
    out += ",CKA,abs_IDI,H_Mean";
    return out;
}

std::string report_csv_row(const EvalReport& r) {
    std::string out = r.method + "," + fixed(r.fa) + "," + fixed(r.ra) + "," + fixed(r.tfa) + "," + fixed(r.tra);
    for (double g : r.knn_gaps) out += "," + fixed(g);
    out += "," + fixed(r.cka);
    out += "," + (r.idi ? fixed(std::abs(*r.idi)) : std::string("NA"));
    out += "," + (r.scores ? fixed(r.scores->hmean) : std::string("NA"));
    return out;
}

}  // namespace ecu
