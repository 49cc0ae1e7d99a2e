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

// Command-line experiment runner.
//
//   ecunlearn train-original --config exp.cfg [--seed N] [--out DIR]
//   ecunlearn retrain        --config exp.cfg
//   ecunlearn pretrain-ec    --config exp.cfg
//   ecunlearn unlearn        --config exp.cfg --method ec [--variant no-layerwise-ce]
//   ecunlearn eval           --config exp.cfg --method ec
//   ecunlearn bench          --config exp.cfg --parallel 4
//   ecunlearn export-features --config exp.cfg --method ec
//   ecunlearn hmean-replay
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 acceptance-check
// failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecu/binary_io.hpp"
#include "ecu/checkpoint.hpp"
#include "ecu/config.hpp"
#include "ecu/error.hpp"
#include "ecu/pipeline.hpp"

namespace {

using namespace ecu;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string method;
    std::string variant;
    std::size_t parallel = 1;
};

struct Context {
    ExperimentConfig config;
    std::string hash;
    std::string out;
    std::vector<std::string> methods;
};

Context load_context(const Flags& f, bool allow_reference = false) {
    Context c;
    c.config = ExperimentConfig::load(f.config);
    if (f.seed) c.config.seeds = {*f.seed};
    if (!f.out.empty()) c.config.output = f.out;
    if (!f.variant.empty()) {
        try {
            c.config.unlearn.variant = parse_variant(f.variant);
        } catch (const PreconditionError& e) {
            throw ConfigError("--variant", e.what());
        }
    }
    const bool reference = f.method == "original" || f.method == "retrained";
    if (!f.method.empty()) {
        try {
            if (!(allow_reference && reference)) parse_method(f.method);
        } catch (const PreconditionError& e) {
            throw ConfigError("--method", e.what());
        }
        c.methods = {f.method};
    } else {
        c.methods = c.config.methods;
    }
    c.hash = c.config.hash();
    c.out = c.config.output;
    return c;
}

ModelBundle load_prerequisite(const std::string& path, const std::string& what, const std::string& hint) {
    if (!std::filesystem::exists(path)) {
        throw PreconditionError("missing prerequisite " + what + " checkpoint " + path + " (run " + hint + " first)");
    }
    return load_checkpoint(path);
}

std::string param_hash(const ModelBundle& b) { return hash_hex(hash_parameters(b.parameters())); }

void train_stage(const Flags& f, bool retrain) {
    const Context c = load_context(f);
    const char* label = retrain ? "retrained" : "original";
    for (std::uint64_t seed : c.config.seeds) {
        const ExperimentData data = prepare_data(c.config, seed);
        std::vector<double> loss;
        const ModelBundle b = retrain ? stage_retrain(c.config, data, seed, &loss)
                                      : stage_original(c.config, data, seed, &loss);
        const RunPaths p = run_paths(c.out, c.hash, label, seed);
        save_checkpoint(b, p.checkpoint);
        io::write_file(p.train_log, artifact_header(c.hash, seed) + epoch_loss_csv(loss));
        std::printf("%s seed=%llu params=%s -> %s\n", label, static_cast<unsigned long long>(seed),
                    param_hash(b).c_str(), p.checkpoint.c_str());
    }
}

void pretrain_stage(const Flags& f) {
    const Context c = load_context(f);
    for (std::uint64_t seed : c.config.seeds) {
        const ExperimentData data = prepare_data(c.config, seed);
        const ModelBundle original =
            load_prerequisite(run_paths(c.out, c.hash, "original", seed).checkpoint, "original", "train-original");
        PretrainReport report;
        const ModelBundle b = stage_pretrain_ec(c.config, data, original, seed, &report);
        const RunPaths p = run_paths(c.out, c.hash, "ec-pretrained", seed);
        save_checkpoint(b, p.checkpoint);
        std::string log = artifact_header(c.hash, seed);
        log += "# frozen_hash_before=" + report.frozen_hash_before + " frozen_hash_after=" + report.frozen_hash_after + "\n";
        log += epoch_loss_csv(report.epoch_loss);
        io::write_file(p.train_log, log);
        std::printf("ec-pretrained seed=%llu frozen=%s (unchanged) params=%s -> %s\n",
                    static_cast<unsigned long long>(seed), report.frozen_hash_after.c_str(), param_hash(b).c_str(),
                    p.checkpoint.c_str());
    }
}

void unlearn_stage(const Flags& f) {
    const Context c = load_context(f);
    for (const auto& m : c.methods) {
        const MethodSpec spec = parse_method(m);
        const std::string label = run_label(spec, c.config.unlearn.variant);
        for (std::uint64_t seed : c.config.seeds) {
            const ExperimentData data = prepare_data(c.config, seed);
            const ModelBundle original =
                load_prerequisite(run_paths(c.out, c.hash, "original", seed).checkpoint, "original", "train-original");
            std::optional<ModelBundle> pretrained;
            if (needs_ec_modules(spec, c.config.unlearn.variant)) {
                pretrained = load_prerequisite(run_paths(c.out, c.hash, "ec-pretrained", seed).checkpoint,
                                               "EC-pretrained", "pretrain-ec");
            }
            const UnlearnResult r =
                stage_unlearn(c.config, data, original, pretrained ? &*pretrained : nullptr, spec, seed);
            const RunPaths p = run_paths(c.out, c.hash, label, seed);
            save_checkpoint(r.bundle, p.checkpoint);
            io::write_file(p.losses, artifact_header(c.hash, seed) + r.log.to_csv());
            std::printf("%s seed=%llu steps=%zu params=%s -> %s\n", label.c_str(),
                        static_cast<unsigned long long>(seed), r.log.rows.size(), param_hash(r.bundle).c_str(),
                        p.checkpoint.c_str());
        }
    }
}

// "original" and "retrained" are accepted as stand-ins for an unlearned model.
std::string label_for(const std::string& m, Variant variant) {
    if (m == "original" || m == "retrained") return m;
    return run_label(parse_method(m), variant);
}

void eval_stage(const Flags& f) {
    const Context c = load_context(f, true);
    for (const auto& m : c.methods) {
        const std::string label = label_for(m, c.config.unlearn.variant);
        for (std::uint64_t seed : c.config.seeds) {
            const ExperimentData data = prepare_data(c.config, seed);
            const ModelBundle o =
                load_prerequisite(run_paths(c.out, c.hash, "original", seed).checkpoint, "original", "train-original");
            const ModelBundle r =
                load_prerequisite(run_paths(c.out, c.hash, "retrained", seed).checkpoint, "retrained", "retrain");
            const RunPaths p = run_paths(c.out, c.hash, label, seed);
            const ModelBundle u = load_prerequisite(p.checkpoint, label, "unlearn --method " + m);
            EvalReport report = stage_eval(c.config, data, o, u, r, label);
            report.seed = seed;
            report.config_hash = c.hash;
            io::write_file(p.report_json, report_to_json(report).dump(2) + "\n");
            io::write_file(p.report_csv, artifact_header(c.hash, seed) + report_csv_header(report) + "\n" +
                                             report_csv_row(report) + "\n");
            std::printf("%s\n", report_csv_row(report).c_str());
        }
    }
}

void export_stage(const Flags& f) {
    const Context c = load_context(f, true);
    const std::string label = label_for(f.method.empty() ? "original" : f.method, c.config.unlearn.variant);
    for (std::uint64_t seed : c.config.seeds) {
        const ExperimentData data = prepare_data(c.config, seed);
        const RunPaths p = run_paths(c.out, c.hash, label, seed);
        const ModelBundle b = load_prerequisite(p.checkpoint, label, "the producing subcommand");
        const std::pair<const char*, const Dataset*> parts[] = {{"forget_test", &data.splits.forget_test},
                                                                {"retain_test", &data.splits.retain_test}};
        for (const auto& [name, part] : parts) {
            const auto taps = extract_taps(b, *part);
            for (std::size_t t = 0; t < taps.size(); ++t) {
                Dataset out;
                out.dim = taps[t].cols;
                out.num_classes = part->num_classes;
                out.split = SplitTag::test;
                out.features = taps[t].data;
                out.labels = part->labels;
                const std::string path = p.features_dir + "/tap" + std::to_string(t + 1) + "_" + name + ".ulab";
                save_dataset(out, path);
                std::printf("%s\n", path.c_str());
            }
        }
    }
}

void bench_stage(const Flags& f) {
    const Context c = load_context(f);
    ExperimentConfig cfg = c.config;
    cfg.methods = c.methods;
    const BenchResult r = run_bench(cfg, f.parallel);
    const std::string dir = c.out + "/" + c.hash + "/bench";
    io::write_file(dir + "/summary.csv", r.summary_csv);
    io::write_file(dir + "/cells.csv", r.cells_csv);
    std::size_t failed = 0;
    for (const auto& cell : r.cells) {
        if (!cell.report) {
            ++failed;
            std::fprintf(stderr, "cell %s seed=%llu failed: %s\n", cell.method.c_str(),
                         static_cast<unsigned long long>(cell.seed), cell.error.c_str());
        }
    }
    std::fputs(r.summary_csv.c_str(), stdout);
    std::printf("%zu cells, %zu failed -> %s\n", r.cells.size(), failed, dir.c_str());
}

int hmean_replay() {
    bool ok = true;
    std::printf("%-20s %-7s %9s %9s %8s  %s\n", "setting", "method", "computed", "published", "diff", "status");
    for (const auto& row : published_rows()) {
        const double got = hmean(row.inputs, row.table == "imagenet1k-random100").hmean;
        const double diff = got - row.published;
        const bool match = std::abs(diff) <= kReplayTolerance;
        const char* status = match ? "ok" : row.required ? "MISMATCH" : "differs (published value inconsistent)";
        if (!match && row.required) ok = false;
        std::printf("%-20s %-7s %9.3f %9.2f %+8.3f  %s\n", row.table.c_str(), row.method.c_str(), got, row.published,
                    diff, status);
    }
    return ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-wise contrastive unlearning experiments"};
    app.require_subcommand(1);
    Flags flags;

    auto common = [&](CLI::App* sub, bool parallel) {
        sub->add_option("--config", flags.config, "Experiment config file")->required();
        sub->add_option("--seed", flags.seed, "Run a single seed instead of run.seeds");
        sub->add_option("--out", flags.out, "Output root (overrides run.output)");
        sub->add_option("--method", flags.method, "Method: ec, cu, rl, ga, finetune, plugin:<base>");
        sub->add_option("--variant", flags.variant, "EC variant: full, no-layerwise-ce, no-ec-modules, plus-final-blocks");
        if (parallel) sub->add_option("--parallel", flags.parallel, "Concurrent grid cells")->check(CLI::PositiveNumber);
    };

    auto* train = app.add_subcommand("train-original", "Train the original model on the full training set");
    auto* retrain = app.add_subcommand("retrain", "Train the retrained oracle on the retain split");
    auto* pretrain = app.add_subcommand("pretrain-ec", "Attach EC modules and pretrain them with SupCon");
    auto* unl = app.add_subcommand("unlearn", "Run an unlearning method");
    auto* eval = app.add_subcommand("eval", "Evaluate an unlearned checkpoint against original and retrained");
    auto* bench = app.add_subcommand("bench", "Run the method x seed x weight-schedule grid");
    auto* exportf = app.add_subcommand("export-features", "Export per-tap test features as ULAB files");
    auto* replay = app.add_subcommand("hmean-replay", "Recompute H-Mean for the published table rows");
    for (auto* s : {train, retrain, pretrain, unl, eval, exportf}) common(s, false);
    common(bench, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train) train_stage(flags, false);
        if (*retrain) train_stage(flags, true);
        if (*pretrain) pretrain_stage(flags);
        if (*unl) unlearn_stage(flags);
        if (*eval) eval_stage(flags);
        if (*bench) bench_stage(flags);
        if (*exportf) export_stage(flags);
        if (*replay) return hmean_replay();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
