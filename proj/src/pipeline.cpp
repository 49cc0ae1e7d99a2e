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

#include "ecu/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ecu/error.hpp"
#include "ecu/random.hpp"

namespace ecu {

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void stamp(ModelBundle& bundle, const ExperimentConfig& config, std::uint64_t seed) {
    bundle.metadata().config_hash = config.hash();
    bundle.metadata().seed = seed;
}

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
    ExperimentData d;
    if (config.source == DataSource::file) {
        d.train = load_dataset(config.train_file);
        d.test = load_dataset(config.test_file);
        if (d.train.dim != d.test.dim || d.train.num_classes != d.test.num_classes) {
            throw ConfigError("data.test_file", "train and test files disagree on dim or class count");
        }
    } else {
        BlobParams p = config.blobs;
        p.seed = derive_seed(seed, "data");
        std::tie(d.train, d.test) = gen_blobs(p);
    }
    for (std::size_t i = 0; i < config.downstream_sets; ++i) {
        BlobParams p = config.blobs;
        p.seed = derive_seed(seed, "downstream-" + std::to_string(i));
        p.num_classes = config.downstream_classes;
        p.dim = d.train.dim;
        auto [tr, te] = gen_blobs(p);
        d.downstream.push_back(DownstreamSet{"downstream" + std::to_string(i + 1), std::move(tr), std::move(te)});
    }
    switch (config.forget_strategy) {
        case ForgetStrategy::random:
            d.split = select_random_classes(d.train, config.forget_count, derive_seed(seed, "forget"));
            break;
        case ForgetStrategy::top_similarity:
            d.split = select_top_similarity(d.train, config.forget_count, d.downstream.front().train);
            break;
        case ForgetStrategy::explicit_classes:
            try {
                d.split = SplitSpec::from_forget(config.forget_classes, d.train.num_classes);
            } catch (const PreconditionError& e) {
                throw ConfigError("forget.classes", e.what());
            }
            break;
    }
    d.splits = split_by_classes(d.train, d.test, d.split);
    return d;
}

ModelBundle stage_original(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                           std::vector<double>* epoch_loss) {
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, "original");
    ModelBundle b = train_original(data.train, config.architecture(data.train), tc, epoch_loss);
    stamp(b, config, seed);
    return b;
}

ModelBundle stage_retrain(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                          std::vector<double>* epoch_loss) {
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, "retrain");
    ModelBundle b = retrain_oracle(data.splits.retain_train, config.architecture(data.train), tc, epoch_loss);
    stamp(b, config, seed);
    return b;
}

ModelBundle stage_pretrain_ec(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                              std::uint64_t seed, PretrainReport* report) {
    if (!original.ec_modules().empty()) throw PreconditionError("pretrain-ec: bundle already carries EC modules");
    ModelBundle start = original.clone();
    ModelBundle b = attach_ec_modules(std::move(start.backbone()), config.proj_dim, derive_seed(seed, "ec-init"),
                                      original.metadata());
    PretrainConfig pc = config.pretrain;
    pc.seed = derive_seed(seed, "pretrain");
    b = supcon_pretrain(std::move(b), data.train, pc, report);
    stamp(b, config, seed);
    return b;
}

bool needs_ec_modules(const MethodSpec& spec, Variant variant) {
    if (spec.method == Method::plugin) return true;
    return spec.method == Method::ec && variant != Variant::no_ec_modules;
}

UnlearnResult stage_unlearn(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                            const ModelBundle* ec_pretrained, const MethodSpec& spec, std::uint64_t seed,
                            const StepObserver& observer) {
    UnlearnConfig uc = config.unlearn;
    uc.seed = derive_seed(seed, "unlearn");
    ModelBundle start;
    if (needs_ec_modules(spec, uc.variant)) {
        if (ec_pretrained == nullptr) {
            throw PreconditionError("unlearn " + spec.name() +
                                    ": missing prerequisite EC-pretrained checkpoint (run pretrain-ec first)");
        }
        start = ec_pretrained->clone();
    } else {
        start = original.clone();
    }
    UnlearnResult r = unlearn(std::move(start), data.splits, data.split, spec, uc, observer);
    stamp(r.bundle, config, seed);
    return r;
}

void require_same_architecture(const ModelBundle& a, const ModelBundle& b, const std::string& what) {
    const auto pa = a.backbone_parameters();
    const auto pb = b.backbone_parameters();
    bool same = pa.size() == pb.size();
    for (std::size_t i = 0; same && i < pa.size(); ++i) {
        same = pa[i].name == pb[i].name && pa[i].tensor.shape() == pb[i].tensor.shape();
    }
    if (!same) throw ShapeError("architecture mismatch between checkpoints: " + what);
}

EvalReport stage_eval(const ExperimentConfig& config, const ExperimentData& data, const ModelBundle& original,
                      const ModelBundle& unlearned, const ModelBundle& retrained, const std::string& label) {
    require_same_architecture(original, unlearned, "original vs unlearned");
    require_same_architecture(original, retrained, "original vs retrained");
    const EvalOptions options{config.probe, config.knn_k, config.probe_attack};
    return assemble_report(label, original, unlearned, retrained, data.splits, data.split, data.downstream, options);
}

std::string run_label(const MethodSpec& spec, Variant variant) {
    std::string label = spec.name();
    if (spec.method == Method::ec && variant != Variant::full) label += "[" + to_string(variant) + "]";
    return label;
}

RunPaths run_paths(const std::string& out, const std::string& config_hash, const std::string& label,
                   std::uint64_t seed) {
    std::string safe = label;
    for (char& c : safe) {
        if (c == ':' || c == '[' || c == ']' || c == '/') c = '_';
    }
    while (!safe.empty() && safe.back() == '_') safe.pop_back();
    RunPaths p;
    p.dir = out + "/" + config_hash + "/" + safe + "/" + std::to_string(seed);
    p.checkpoint = p.dir + "/checkpoint.ulck";
    p.losses = p.dir + "/losses.csv";
    p.train_log = p.dir + "/train_log.csv";
    p.report_json = p.dir + "/report.json";
    p.report_csv = p.dir + "/report.csv";
    p.features_dir = p.dir + "/features";
    return p;
}

std::string artifact_header(const std::string& config_hash, std::uint64_t seed) {
    return "# config_hash=" + config_hash + " seed=" + std::to_string(seed) + "\n";
}

std::string epoch_loss_csv(const std::vector<double>& loss) {
    std::string out = "epoch,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < loss.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, loss[i]);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid driver

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

struct SeedState {
    ExperimentData data;
    ModelBundle original;
    ModelBundle retrained;
    std::optional<ModelBundle> ec_pretrained;
    std::string error;
};

bool uses_layer_weights(const MethodSpec& spec) {
    return spec.method == Method::ec || spec.method == Method::plugin;
}

struct Stat {
    std::size_t n = 0;
    double mean = 0.0;
    double stdev = 0.0;
};

Stat stat_of(const std::vector<double>& xs) {
    Stat s;
    s.n = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string weights_text(const std::vector<double>& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) out += " ";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", w[i]);
        out += buf;
    }
    return out;
}

}  // namespace

BenchResult run_bench(const ExperimentConfig& config, std::size_t parallel) {
    const std::vector<std::vector<double>> schedules =
        config.weight_schedules.empty() ? std::vector<std::vector<double>>{config.unlearn.layer_weights}
                                        : config.weight_schedules;
    bool any_ec = false;
    for (const auto& m : config.methods) any_ec = any_ec || needs_ec_modules(parse_method(m), config.unlearn.variant);

    // Per-seed prerequisites, shared read-only by the cells of that seed.
    std::vector<SeedState> seeds(config.seeds.size());
    parallel_for(config.seeds.size(), parallel, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        try {
            SeedState& s = seeds[i];
            s.data = prepare_data(config, seed);
            s.original = stage_original(config, s.data, seed);
            s.retrained = stage_retrain(config, s.data, seed);
            if (any_ec) s.ec_pretrained = stage_pretrain_ec(config, s.data, s.original, seed);
        } catch (const std::exception& e) {
            seeds[i].error = e.what();
        }
    });

    BenchResult result;
    for (const auto& m : config.methods) {
        const MethodSpec spec = parse_method(m);
        const std::size_t n_sched = uses_layer_weights(spec) ? schedules.size() : 1;
        for (std::size_t s = 0; s < n_sched; ++s) {
            for (std::uint64_t seed : config.seeds) {
                BenchCell c;
                c.method = run_label(spec, config.unlearn.variant);
                c.schedule = s;
                c.weights = uses_layer_weights(spec) ? schedules[s] : config.unlearn.layer_weights;
                c.seed = seed;
                result.cells.push_back(std::move(c));
            }
        }
    }

    parallel_for(result.cells.size(), parallel, [&](std::size_t i) {
        BenchCell& cell = result.cells[i];
        const std::size_t si =
            static_cast<std::size_t>(std::find(config.seeds.begin(), config.seeds.end(), cell.seed) - config.seeds.begin());
        const SeedState& st = seeds[si];
        if (!st.error.empty()) {
            cell.error = "seed setup failed: " + st.error;
            return;
        }
        try {
            ExperimentConfig local = config;
            local.unlearn.layer_weights = cell.weights;
            const std::string method = cell.method.substr(0, cell.method.find('['));
            const MethodSpec spec = parse_method(method);
            UnlearnResult r = stage_unlearn(local, st.data, st.original,
                                            st.ec_pretrained ? &*st.ec_pretrained : nullptr, spec, cell.seed);
            cell.report = stage_eval(local, st.data, st.original, r.bundle, st.retrained, cell.method);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    // Cells csv: one row per cell, canonical order.
    const std::string hash = config.hash();
    std::string cells = "# config_hash=" + hash + "\n";
    std::vector<std::string> knn_names;
    for (const auto& c : result.cells) {
        if (c.report) {
            knn_names = c.report->knn_names;
            break;
        }
    }
    cells += "method,weights,seed,status,FA,RA,TFA,TRA";
    for (const auto& n : knn_names) cells += ",knn_gap_" + n;
    cells += ",CKA,abs_IDI,H_Mean,probe_attack_TFA\n";
    for (const auto& c : result.cells) {
        cells += c.method + "," + weights_text(c.weights) + "," + std::to_string(c.seed) + ",";
        if (!c.report) {
            std::string err = c.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            cells += "failed: " + err + "\n";
            continue;
        }
        const EvalReport& r = *c.report;
        cells += "ok," + fixed(r.fa) + "," + fixed(r.ra) + "," + fixed(r.tfa) + "," + fixed(r.tra);
        for (double g : r.knn_gaps) cells += "," + fixed(g);
        cells += "," + fixed(r.cka) + "," + (r.idi ? fixed(std::abs(*r.idi)) : "NA") + "," +
                 (r.scores ? fixed(r.scores->hmean) : "NA") + "," +
                 (r.probe_attack_tfa ? fixed(*r.probe_attack_tfa) : "NA") + "\n";
    }
    result.cells_csv = cells;

    // Summary: mean ± stdev per (method, schedule) over successful seeds.
    std::string summary = "# config_hash=" + hash + "\n";
    summary += "method,weights,runs,failed,FA,RA,TFA,TRA";
    for (const auto& n : knn_names) summary += ",knn_gap_" + n;
    summary += ",CKA,abs_IDI,H_Mean\n";
    std::size_t i = 0;
    while (i < result.cells.size()) {
        std::size_t j = i;
        while (j < result.cells.size() && result.cells[j].method == result.cells[i].method &&
               result.cells[j].schedule == result.cells[i].schedule) {
            ++j;
        }
        std::map<std::string, std::vector<double>> cols;
        std::size_t failed = 0;
        for (std::size_t k = i; k < j; ++k) {
            const auto& c = result.cells[k];
            if (!c.report) {
                ++failed;
                continue;
            }
            const EvalReport& r = *c.report;
            cols["FA"].push_back(r.fa);
            cols["RA"].push_back(r.ra);
            cols["TFA"].push_back(r.tfa);
            cols["TRA"].push_back(r.tra);
            for (std::size_t g = 0; g < r.knn_gaps.size(); ++g) cols["knn" + std::to_string(g)].push_back(r.knn_gaps[g]);
            cols["CKA"].push_back(r.cka);
            if (r.idi) cols["IDI"].push_back(std::abs(*r.idi));
            if (r.scores) cols["H"].push_back(r.scores->hmean);
        }
        auto cell = [&](const std::string& key) {
            const auto it = cols.find(key);
            if (it == cols.end() || it->second.empty()) return std::string("NA");
            const Stat s = stat_of(it->second);
            return fixed(s.mean) + " ± " + fixed(s.stdev);
        };
        summary += result.cells[i].method + "," + weights_text(result.cells[i].weights) + "," +
                   std::to_string(j - i - failed) + "," + std::to_string(failed);
        for (const char* k : {"FA", "RA", "TFA", "TRA"}) summary += "," + cell(k);
        for (std::size_t g = 0; g < knn_names.size(); ++g) summary += "," + cell("knn" + std::to_string(g));
        summary += "," + cell("CKA") + "," + cell("IDI") + "," + cell("H") + "\n";
        i = j;
    }
    result.summary_csv = summary;
    return result;
}

// ---------------------------------------------------------------------------
// Published rows

const std::vector<PublishedRow>& published_rows() {
    // Raw metrics as printed in the published comparison tables; IDI is the
    // absolute value column. The CIFAR-100 rows have no k-NN columns.
    static const std::vector<PublishedRow> rows = {
        {"imagenet1k-random100", "PL", {0.61, 79.46, 0.42, 75.59, 96.01, {0.12, 3.52, 0.62}, 0.778}, 24.19, false},
        {"imagenet1k-random100", "DUCK", {0.04, 71.21, 0.02, 72.34, 90.15, {0.34, 2.96, 1.62}, 0.538}, 44.65, true},
        {"imagenet1k-random100", "SCAR", {5.23, 79.01, 4.76, 77.21, 96.95, {2.17, 4.33, 0.67}, 0.774}, 20.02, false},
        {"imagenet1k-random100", "SCRUB", {1.19, 67.54, 1.10, 65.68, 52.60, {1.95, 5.56, 0.28}, 0.702}, 66.31, false},
        {"imagenet1k-random100", "SalUn", {23.27, 39.84, 21.26, 35.89, 9.10, {31.89, 30.95, 32.47}, 0.421}, 59.63, false},
        {"imagenet1k-random100", "RL", {4.31, 9.56, 3.76, 8.98, 3.39, {36.59, 33.96, 36.67}, 0.508}, 28.65, false},
        {"imagenet1k-random100", "DELETE", {1.58, 80.12, 1.22, 77.24, 97.19, {0.91, 3.02, 0.41}, 0.726}, 19.21, false},
        {"imagenet1k-random100", "COLA", {0.00, 72.57, 0.00, 73.77, 89.28, {0.57, 2.29, 2.10}, 0.867}, 36.54, false},
        {"imagenet1k-random100", "CU", {0.00, 75.83, 0.00, 75.49, 69.52, {2.29, 9.50, 0.62}, 0.403}, 70.68, true},
        {"imagenet1k-random100", "EC", {0.00, 72.63, 0.00, 73.84, 38.68, {1.50, 4.03, 2.23}, 0.051}, 85.75, true},
        {"cifar100-random10", "PL", {4.60, 97.49, 4.00, 75.56, 82.17, {}, 0.853}, 35.64, false},
        {"cifar100-random10", "DUCK", {4.56, 98.76, 4.70, 73.87, 83.39, {}, 0.763}, 40.81, false},
        {"cifar100-random10", "SCAR", {0.29, 97.60, 0.70, 76.67, 88.72, {}, 0.685}, 36.63, false},
        {"cifar100-random10", "SCRUB", {0.02, 97.18, 0.00, 73.96, 75.78, {}, 0.577}, 55.17, false},
        {"cifar100-random10", "SalUn", {44.93, 97.77, 24.30, 75.54, 59.33, {}, 0.873}, 37.97, false},
        {"cifar100-random10", "RL", {31.47, 97.99, 19.00, 75.92, 44.66, {}, 0.927}, 29.24, false},
        {"cifar100-random10", "DELETE", {1.49, 97.54, 0.50, 75.68, 83.26, {}, 0.822}, 37.56, false},
        {"cifar100-random10", "COLA", {0.00, 99.57, 0.00, 75.13, 79.11, {}, 0.744}, 46.06, false},
        {"cifar100-random10", "CU", {0.09, 97.20, 0.00, 76.22, 66.93, {}, 0.539}, 62.94, false},
        {"cifar100-random10", "EC", {0.00, 95.63, 0.00, 74.80, 61.98, {}, 0.291}, 71.23, true},
    };
    return rows;
}

}  // namespace ecu
