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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits with
// 3 if any criterion fails, unless it is listed in --known-failures (the
// FAIL line is printed either way).
//
//   acceptance [--config configs/acceptance.cfg] [--only 1,2,...] [--known-failures 6,7]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "ecu/binary_io.hpp"
#include "ecu/config.hpp"
#include "ecu/eval.hpp"
#include "ecu/grad_check.hpp"
#include "ecu/losses.hpp"
#include "ecu/ops.hpp"
#include "ecu/pipeline.hpp"
#include "ecu/random.hpp"

#ifndef ECU_SOURCE_DIR
#define ECU_SOURCE_DIR "."
#endif
#ifndef ECU_CLI_PATH
#define ECU_CLI_PATH "ecunlearn"
#endif

namespace {

using namespace ecu;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Tensor gaussian(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> v(r * c);
    for (double& x : v) x = n(rng);
    return Tensor({r, c}, std::move(v));
}

// ---------------------------------------------------------------------------
// 1. H-Mean parity

Outcome check_hmean_parity() {
    const std::set<std::pair<std::string, std::string>> required = {
        {"imagenet1k-random100", "EC"}, {"imagenet1k-random100", "CU"}, {"imagenet1k-random100", "DUCK"}, {"cifar100-random10", "EC"}};
    double worst = 0.0;
    std::size_t seen = 0;
    for (const auto& row : published_rows()) {
        if (!required.count({row.table, row.method})) continue;
        ++seen;
        const double got = hmean(row.inputs, row.table == "imagenet1k-random100").hmean;
        worst = std::max(worst, std::abs(got - row.published));
    }
    return {seen == required.size() && worst <= kReplayTolerance,
            fmt("max |computed - published| = %.4f over the required rows (ImageNet-1K EC/CU/DUCK, CIFAR-100 EC)", worst)};
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness

Outcome check_gradients() {
    constexpr double kTau = 0.07;
    constexpr double kTol = 1e-4;
    std::map<std::string, double> worst;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(0x67726164ULL, trial));
        std::uniform_int_distribution<std::size_t> dim(3, 6), rows(2, 5);
        const std::size_t p = dim(rng), m = rows(rng), r = rows(rng) + 1;
        const SplitSpec split = SplitSpec::from_forget({0}, 4);

        // Contrastive unlearning term on normalized features.
        const Tensor x = gaussian(rng, m + r, p);
        auto cu = [&](const Tensor& t) {
            const Tensor z = l2_normalize(t, 1);
            return cu_loss_layer(slice(z, 0, 0, m), slice(z, 0, m, m + r), kTau);
        };
        worst["CU"] = std::max(worst["CU"], grad_check(cu, x));

        // Retain cross-entropy through a layer head (features and weights).
        std::vector<int> y(r);
        std::uniform_int_distribution<int> retain_label(1, 3);
        for (int& v : y) v = retain_label(rng);
        const Tensor h = gaussian(rng, r, p);
        const Tensor w = gaussian(rng, p, 4, 0.5);
        const Tensor b = gaussian(rng, 1, 4, 0.1);
        auto ce_h = [&](const Tensor& t) { return ce_loss_layer(affine(t, w, b), y, split); };
        auto ce_w = [&](const Tensor& t) { return ce_loss_layer(affine(h, t, b), y, split); };
        worst["CE"] = std::max({worst["CE"], grad_check(ce_h, h), grad_check(ce_w, w)});

        // Weighted total over four supervision points, each with its own
        // feature block and head.
        constexpr std::size_t kPoints = 4;
        const Tensor all = gaussian(rng, m + r, kPoints * p);
        std::vector<Tensor> heads;
        for (std::size_t l = 0; l < kPoints; ++l) heads.push_back(gaussian(rng, p, 4, 0.5));
        const std::vector<double> weights{0.2, 0.4, 0.8, 1.0};
        auto total = [&](const Tensor& t) {
            std::vector<LayerLoss> layers;
            for (std::size_t l = 0; l < kPoints; ++l) {
                const Tensor block = slice(t, 1, l * p, (l + 1) * p);
                const Tensor z = l2_normalize(block, 1);
                LayerLoss layer;
                layer.cu = cu_loss_layer(slice(z, 0, 0, m), slice(z, 0, m, m + r), kTau);
                layer.ce = ce_loss_layer(matmul(slice(block, 0, m, m + r), heads[l]), y, split);
                layers.push_back(std::move(layer));
            }
            return total_loss(layers, weights, 1.5, 1.5);
        };
        worst["total"] = std::max(worst["total"], grad_check(total, all));

        // Supervised contrastive pretraining loss; labels guarantee positives.
        const std::size_t n = 2 * rows(rng) + 2;
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % (n / 2));
        std::shuffle(labels.begin(), labels.end(), rng);
        const Tensor s = gaussian(rng, n, p);
        auto supcon = [&](const Tensor& t) { return supcon_loss(l2_normalize(t, 1), labels, 0.1); };
        worst["SupCon"] = std::max(worst["SupCon"], grad_check(supcon, s));
    }
    bool ok = true;
    std::string detail = "max relative error over 100 instances each:";
    for (const auto& [k, v] : worst) {
        ok = ok && v <= kTol;
        char buf[64];
        std::snprintf(buf, sizeof buf, " %s %.2e", k.c_str(), v);
        detail += buf;
    }
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// 3. CKA properties

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) { return to_matrix(gaussian(rng, r, c)); }

Matrix multiply(const Matrix& a, const Matrix& b) {
    Matrix out{a.rows, b.cols, std::vector<double>(a.rows * b.cols, 0.0)};
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
        }
    }
    return out;
}

Matrix random_orthogonal(Rng& rng, std::size_t n) {
    Matrix q = random_matrix(rng, n, n);
    // Modified Gram-Schmidt over columns.
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += q.at(i, j) * q.at(i, k);
            for (std::size_t i = 0; i < n; ++i) q.at(i, j) -= dot * q.at(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q.at(i, j) * q.at(i, j);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) q.at(i, j) /= norm;
    }
    return q;
}

Outcome check_cka() {
    double dev = 0.0;
    for (std::uint64_t t = 0; t < 50; ++t) {
        Rng rng(derive_seed(0x636b61ULL, t));
        const Matrix x = random_matrix(rng, 40, 6);
        const Matrix y = random_matrix(rng, 40, 5);
        const double base = linear_cka(x, y);
        dev = std::max(dev, std::abs(linear_cka(x, x) - 1.0));
        dev = std::max(dev, std::abs(linear_cka(x, multiply(x, random_orthogonal(rng, 6))) - 1.0));
        dev = std::max(dev, std::abs(linear_cka(multiply(x, random_orthogonal(rng, 6)), y) - base));
        Matrix scaled = x;
        for (double& v : scaled.data) v *= -3.7;
        dev = std::max(dev, std::abs(linear_cka(x, scaled) - 1.0));
        dev = std::max(dev, std::abs(linear_cka(scaled, y) - base));
        std::vector<std::size_t> perm(6);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix permuted = x;
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t j = 0; j < x.cols; ++j) permuted.at(i, j) = x.at(i, perm[j]);
        }
        dev = std::max(dev, std::abs(linear_cka(permuted, y) - base));
        dev = std::max(dev, std::abs(linear_cka(y, x) - base));
    }
    double independent = 0.0;
    for (std::uint64_t t = 0; t < 20; ++t) {
        Rng rng(derive_seed(0x696e64ULL, t));
        independent = std::max(independent, linear_cka(random_matrix(rng, 1000, 10), random_matrix(rng, 1000, 10)));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "max invariance deviation %.2e (tol 1e-8); max independent CKA %.4f (tol 0.05)",
                  dev, independent);
    return {dev <= 1e-8 && independent < 0.05, buf};
}

// ---------------------------------------------------------------------------
// 4-8. Desk-scale runs

struct SeedRun {
    std::uint64_t seed = 0;
    double original_tra = 0.0;
    std::map<std::string, EvalReport> reports;
    double idi_self = 0.0;
    double idi_retrained = 0.0;
    double idi_control = 0.0;
};

// Same weights as `original` except that stage 1 ignores its input: every
// sample maps to the same features, so all forget-class information is gone.
ModelBundle input_independent_control(const ModelBundle& original) {
    ModelBundle b = original.clone();
    auto& w = b.backbone().stages.front().affine.weight;
    w = Tensor::zeros(w.shape());
    return b;
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed, const std::vector<std::string>& labels) {
    SeedRun run;
    run.seed = seed;
    const ExperimentData data = prepare_data(config, seed);
    const ModelBundle original = stage_original(config, data, seed);
    const ModelBundle retrained = stage_retrain(config, data, seed);
    const ModelBundle pretrained = stage_pretrain_ec(config, data, original, seed);
    run.original_tra = accuracy(original, data.splits.retain_test);

    const auto& s = data.splits;
    run.idi_self = idi_probe(original, original, retrained, s.forget_train, s.forget_test, data.split, config.probe).idi;
    run.idi_retrained =
        idi_probe(original, retrained, retrained, s.forget_train, s.forget_test, data.split, config.probe).idi;
    run.idi_control = idi_probe(original, input_independent_control(original), retrained, s.forget_train,
                                s.forget_test, data.split, config.probe)
                          .idi;

    for (const auto& label : labels) {
        ExperimentConfig local = config;
        std::string method = label;
        const auto open = label.find('[');
        if (open != std::string::npos) {
            method = label.substr(0, open);
            local.unlearn.variant = parse_variant(label.substr(open + 1, label.size() - open - 2));
        }
        const UnlearnResult r = stage_unlearn(local, data, original, &pretrained, parse_method(method), seed);
        run.reports[label] = stage_eval(local, data, original, r.bundle, retrained, label);
    }
    return run;
}

double abs_idi(const EvalReport& r) { return r.idi ? std::abs(*r.idi) : std::nan(""); }

std::string seed_list(const std::vector<SeedRun>& runs, const std::function<std::string(const SeedRun&)>& f) {
    std::string out;
    for (const auto& run : runs) out += (out.empty() ? "" : "; ") + std::string("s") + std::to_string(run.seed) + " " + f(run);
    return out;
}

Outcome check_idi_anchors(const std::vector<SeedRun>& runs) {
    bool ok = !runs.empty();
    for (const auto& r : runs) ok = ok && r.idi_self == 1.0 && r.idi_retrained == 0.0 && r.idi_control < 0.0;
    return {ok, seed_list(runs, [](const SeedRun& r) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "o=%g r=%g control=%.3f", r.idi_self, r.idi_retrained, r.idi_control);
                return std::string(buf);
            })};
}

Outcome check_central_claim(const std::vector<SeedRun>& runs) {
    bool a = true, b = true, c = true;
    double pa_ec = 0.0, pa_cu = 0.0;
    for (const auto& run : runs) {
        const EvalReport& ec = run.reports.at("ec");
        const EvalReport& cu = run.reports.at("cu");
        a = a && ec.fa <= 1.0 && ec.tfa <= 2.0 && cu.fa <= 1.0 && cu.tfa <= 2.0;
        b = b && ec.cka < cu.cka && abs_idi(ec) < abs_idi(cu);
        c = c && std::abs(ec.tra - run.original_tra) <= 10.0;
        pa_ec += ec.probe_attack_tfa.value_or(std::nan(""));
        pa_cu += cu.probe_attack_tfa.value_or(std::nan(""));
    }
    pa_ec /= static_cast<double>(runs.size());
    pa_cu /= static_cast<double>(runs.size());
    const bool d = pa_cu - pa_ec >= 15.0;
    std::string detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " (b) " + (b ? "ok" : "FAIL") + " (c) " +
                         (c ? "ok" : "FAIL") + " (d) " + (d ? "ok" : "FAIL") + " | ";
    detail += seed_list(runs, [](const SeedRun& r) {
        const EvalReport& ec = r.reports.at("ec");
        const EvalReport& cu = r.reports.at("cu");
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "FA/TFA ec %.1f/%.1f cu %.1f/%.1f, CKA ec %.2f cu %.2f, |IDI| ec %.3f cu %.3f, TRA ec %.1f o %.1f",
                      ec.fa, ec.tfa, cu.fa, cu.tfa, ec.cka, cu.cka, abs_idi(ec), abs_idi(cu), ec.tra, r.original_tra);
        return std::string(buf);
    });
    char buf[96];
    std::snprintf(buf, sizeof buf, " | probe attack mean TFA cu %.1f ec %.1f (gap %.1f, need >= 15)", pa_cu, pa_ec,
                  pa_cu - pa_ec);
    return {a && b && c && d, detail + buf};
}

Outcome check_ablation(const std::vector<SeedRun>& runs) {
    double cka_full = 0.0, cka_nolce = 0.0, idi_full = 0.0, idi_noec = 0.0;
    for (const auto& run : runs) {
        cka_full += run.reports.at("ec").cka;
        cka_nolce += run.reports.at("ec[no-layerwise-ce]").cka;
        idi_full += abs_idi(run.reports.at("ec"));
        idi_noec += abs_idi(run.reports.at("ec[no-ec-modules]"));
    }
    const double n = static_cast<double>(runs.size());
    cka_full /= n, cka_nolce /= n, idi_full /= n, idi_noec /= n;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "mean over seeds: CKA no-layerwise-ce %.2f vs full %.2f; |IDI| no-ec-modules %.3f vs full %.3f",
                  cka_nolce, cka_full, idi_noec, idi_full);
    return {cka_nolce > cka_full && idi_noec > idi_full, buf};
}

Outcome check_plugin(const std::vector<SeedRun>& runs) {
    bool ok = !runs.empty();
    for (const auto& run : runs) ok = ok && run.reports.at("plugin:ga").cka < run.reports.at("ga").cka;
    return {ok, seed_list(runs, [](const SeedRun& r) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "CKA ga %.2f ga+EC %.2f", r.reports.at("ga").cka,
                              r.reports.at("plugin:ga").cka);
                return std::string(buf);
            })};
}

// ---------------------------------------------------------------------------
// 9. Determinism

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path().string());
    }
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ECU_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return status == -1 ? -1 : WEXITSTATUS(status);
}

Outcome check_determinism(const std::string& config_path) {
    const fs::path base = fs::temp_directory_path() / ("ecu_determinism_" + std::to_string(::getpid()));
    fs::remove_all(base);
    const std::vector<std::string> steps = {"train-original", "retrain", "pretrain-ec", "unlearn", "eval"};
    std::vector<std::map<std::string, std::string>> trees;
    for (const std::string run : {"a", "b"}) {
        const std::string out = (base / run).string();
        for (const auto& step : steps) {
            const int code = run_cli(step + " --config " + config_path + " --out " + out);
            if (code != 0) {
                fs::remove_all(base);
                return {false, step + " exited with " + std::to_string(code)};
            }
        }
        trees.push_back(tree_contents(out));
    }
    // Grid output must not depend on the number of workers.
    for (const std::string run : {"p1", "p3"}) {
        const std::string out = (base / run).string();
        const int code = run_cli("bench --config " + config_path + " --out " + out + " --parallel " + run.substr(1));
        if (code != 0) {
            fs::remove_all(base);
            return {false, "bench exited with " + std::to_string(code)};
        }
        trees.push_back(tree_contents(out));
    }
    fs::remove_all(base);
    const bool pipeline_same = trees[0] == trees[1] && !trees[0].empty();
    const bool bench_same = trees[2] == trees[3] && !trees[2].empty();
    std::size_t reports = 0;
    for (const auto& [path, _] : trees[0]) reports += path.find("report.json") != std::string::npos;
    return {pipeline_same && bench_same,
            std::to_string(trees[0].size()) + " pipeline artifacts (" + std::to_string(reports) +
                " reports) byte-identical across reruns: " + (pipeline_same ? "yes" : "no") +
                "; bench --parallel 1 vs 3 identical: " + (bench_same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    std::string config_path = std::string(ECU_SOURCE_DIR) + "/configs/acceptance.cfg";
    std::string smoke_path = std::string(ECU_SOURCE_DIR) + "/configs/smoke.cfg";
    std::set<int> only, known;
    auto parse_ids = [](const char* text, std::set<int>& out) {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    };
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            config_path = argv[++i];
        } else if (a == "--smoke-config" && i + 1 < argc) {
            smoke_path = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            parse_ids(argv[++i], only);
        } else if (a == "--known-failures" && i + 1 < argc) {
            parse_ids(argv[++i], known);
        } else {
            std::fprintf(stderr,
                         "usage: acceptance [--config FILE] [--smoke-config FILE] [--only 1,2,...] "
                         "[--known-failures 6,7,...]\n");
            return 1;
        }
    }
    auto want = [&](int k) { return only.empty() || only.count(k) > 0; };

    int failures = 0, unexpected = 0;
    auto report = [&](int id, const char* name, const Outcome& o, double seconds) {
        std::printf("%s  %d. %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id, name, seconds, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
        unexpected += o.pass || known.count(id) ? 0 : 1;
    };
    auto timed = [&](int id, const char* name, const std::function<Outcome()>& f) {
        if (!want(id)) return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        report(id, name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };

    timed(1, "H-Mean parity with published rows", check_hmean_parity);
    timed(2, "gradient correctness", check_gradients);
    timed(3, "CKA property suite", check_cka);

    const bool desk = want(4) || want(6) || want(7) || want(8);
    std::vector<SeedRun> runs;
    double desk_seconds = 0.0;
    std::string desk_error;
    ExperimentConfig config;
    if (desk) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            config = ExperimentConfig::load(config_path);
            const std::vector<std::string> labels = {"ec", "cu", "ec[no-layerwise-ce]", "ec[no-ec-modules]", "ga",
                                                     "plugin:ga"};
            for (std::uint64_t seed : config.seeds) runs.push_back(run_seed(config, seed, labels));
        } catch (const std::exception& e) {
            desk_error = e.what();
        }
        desk_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("      desk runs: %zu seeds in %.1fs (config %s)\n", runs.size(), desk_seconds, config_path.c_str());
    }
    auto desk_check = [&](int id, const char* name, const std::function<Outcome()>& f) {
        if (!want(id)) return;
        if (!desk_error.empty()) {
            report(id, name, {false, "desk run failed: " + desk_error}, 0.0);
            return;
        }
        timed(id, name, f);
    };

    desk_check(4, "IDI anchors", [&] { return check_idi_anchors(runs); });

    timed(5, "EC with w=(0,0,0,1) matches CU step for step", [&] {
        ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
        const std::uint64_t seed = c.seeds.front();
        const ExperimentData data = prepare_data(c, seed);
        const ModelBundle original = stage_original(c, data, seed);
        const ModelBundle pretrained = stage_pretrain_ec(c, data, original, seed);
        c.unlearn.layer_weights = std::vector<double>(c.num_stages, 0.0);
        c.unlearn.layer_weights.back() = 1.0;
        std::vector<std::string> ec_hashes, cu_hashes;
        auto record = [](std::vector<std::string>& out) {
            return [&out](std::size_t, const ModelBundle& b) { out.push_back(hash_hex(hash_parameters(b.parameters()))); };
        };
        stage_unlearn(c, data, original, &pretrained, parse_method("ec"), seed, record(ec_hashes));
        // CU starts from the same bundle so that every parameter is comparable.
        stage_unlearn(c, data, pretrained, nullptr, parse_method("cu"), seed, record(cu_hashes));
        const bool same = ec_hashes == cu_hashes;
        std::string detail = std::to_string(ec_hashes.size()) + " steps compared, trajectories " +
                             (same ? "bit-identical" : "differ");
        if (!same) {
            std::size_t k = 0;
            while (k < std::min(ec_hashes.size(), cu_hashes.size()) && ec_hashes[k] == cu_hashes[k]) ++k;
            detail += " from step " + std::to_string(k);
        }
        return Outcome{same && ec_hashes.size() >= 100, detail};
    });

    desk_check(6, "central claim at desk scale", [&] { return check_central_claim(runs); });
    desk_check(7, "ablation ordering", [&] { return check_ablation(runs); });
    desk_check(8, "plug-in lowers CKA", [&] { return check_plugin(runs); });
    timed(9, "determinism", [&] { return check_determinism(smoke_path); });

    std::printf("%d criterion/criteria failed", failures);
    if (!known.empty()) std::printf(" (%d outside the known-failure list)", unexpected);
    std::printf("\n");
    return unexpected == 0 ? 0 : 3;
}
