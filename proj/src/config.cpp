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

#include "ecu/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "ecu/binary_io.hpp"
#include "ecu/error.hpp"
#include "ecu/hash.hpp"

namespace ecu {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        if constexpr (std::is_same_v<T, double>) {
            out += fmt_double(items[i]);
        } else if constexpr (std::is_same_v<T, std::string>) {
            out += items[i];
        } else {
            out += std::to_string(items[i]);
        }
    }
    return out;
}

struct Entry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
};

class Reader {
  public:
    Reader(const std::string& text, std::string origin) : origin_(std::move(origin)) {
        std::istringstream in(text);
        std::string raw, section;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const auto hash = raw.find('#');
            const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) fail("", line_no, "malformed section header '" + line + "'");
                section = trim(line.substr(1, line.size() - 2));
                static const std::set<std::string> known = {"data", "forget", "arch", "train",
                                                            "pretrain", "unlearn", "eval", "run", "bench"};
                if (!known.count(section)) fail(section, line_no, "unknown section");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail("", line_no, "expected 'key = value', got '" + line + "'");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) fail("", line_no, "empty key");
            const std::string path = section.empty() ? key : section + "." + key;
            if (entries_.count(path)) fail(path, line_no, "duplicate key");
            entries_[path] = Entry{trim(line.substr(eq + 1)), line_no, false};
        }
    }

    [[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) const {
        throw ConfigError(path, what + " (" + origin_ + ":" + std::to_string(line) + ")");
    }

    const Entry* take(const std::string& path) {
        auto it = entries_.find(path);
        if (it == entries_.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }

    void str(const std::string& path, std::string& out) {
        if (const Entry* e = take(path)) out = e->value;
    }

    void real(const std::string& path, double& out) {
        if (const Entry* e = take(path)) out = parse_real(path, *e, e->value);
    }

    template <typename U>
    void uint(const std::string& path, U& out) {
        if (const Entry* e = take(path)) out = static_cast<U>(parse_uint(path, *e, e->value));
    }

    void boolean(const std::string& path, bool& out) {
        if (const Entry* e = take(path)) {
            if (e->value == "true") {
                out = true;
            } else if (e->value == "false") {
                out = false;
            } else {
                fail(path, e->line, "expected true or false, got '" + e->value + "'");
            }
        }
    }

    void reals(const std::string& path, std::vector<double>& out) {
        if (const Entry* e = take(path)) {
            out.clear();
            for (const auto& item : split(e->value, ',')) out.push_back(parse_real(path, *e, item));
        }
    }

    void ints(const std::string& path, std::vector<int>& out) {
        if (const Entry* e = take(path)) {
            out.clear();
            if (e->value.empty()) return;
            for (const auto& item : split(e->value, ',')) out.push_back(static_cast<int>(parse_uint(path, *e, item)));
        }
    }

    void u64s(const std::string& path, std::vector<std::uint64_t>& out) {
        if (const Entry* e = take(path)) {
            out.clear();
            for (const auto& item : split(e->value, ',')) out.push_back(parse_uint(path, *e, item));
        }
    }

    void words(const std::string& path, std::vector<std::string>& out) {
        if (const Entry* e = take(path)) {
            out.clear();
            for (const auto& item : split(e->value, ',')) {
                if (item.empty()) fail(path, e->line, "empty list item");
                out.push_back(item);
            }
        }
    }

    void schedules(const std::string& path, std::vector<std::vector<double>>& out) {
        if (const Entry* e = take(path)) {
            out.clear();
            for (const auto& group : split(e->value, ';')) {
                std::vector<double> w;
                for (const auto& item : split(group, ',')) w.push_back(parse_real(path, *e, item));
                out.push_back(std::move(w));
            }
        }
    }

    template <typename F>
    void with(const std::string& path, F&& f) {
        if (const Entry* e = take(path)) {
            try {
                f(e->value);
            } catch (const std::invalid_argument& err) {
                fail(path, e->line, err.what());
            }
        }
    }

    void finish() const {
        for (const auto& [path, e] : entries_) {
            if (!e.used) fail(path, e.line, "unknown key");
        }
    }

  private:
    double parse_real(const std::string& path, const Entry& e, const std::string& s) const {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size() || errno != 0 || !std::isfinite(v)) {
            fail(path, e.line, "expected a finite number, got '" + s + "'");
        }
        return v;
    }

    std::uint64_t parse_uint(const std::string& path, const Entry& e, const std::string& s) const {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (s.empty() || s.front() == '-' || end != s.c_str() + s.size() || errno != 0) {
            fail(path, e.line, "expected a non-negative integer, got '" + s + "'");
        }
        return v;
    }

    std::string origin_;
    std::map<std::string, Entry> entries_;
};

OptimizerKind parse_optimizer_kind(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd_momentum;
    if (s == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + s + "' (valid: sgd, adam)");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

}  // namespace

std::string to_string(ForgetStrategy s) {
    switch (s) {
        case ForgetStrategy::random: return "random";
        case ForgetStrategy::top_similarity: return "top-similarity";
        case ForgetStrategy::explicit_classes: return "explicit";
    }
    return "?";
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    ExperimentConfig c;
    Reader r(text, origin);

    r.with("data.source", [&](const std::string& v) {
        if (v == "blobs") {
            c.source = DataSource::blobs;
        } else if (v == "file") {
            c.source = DataSource::file;
        } else {
            throw std::invalid_argument("unknown source '" + v + "' (valid: blobs, file)");
        }
    });
    r.str("data.train_file", c.train_file);
    r.str("data.test_file", c.test_file);
    r.uint("data.num_classes", c.blobs.num_classes);
    r.uint("data.dim", c.blobs.dim);
    r.uint("data.train_per_class", c.blobs.train_per_class);
    r.uint("data.test_per_class", c.blobs.test_per_class);
    r.real("data.spread", c.blobs.spread);
    r.real("data.mean_scale", c.blobs.mean_scale);
    r.uint("data.downstream_sets", c.downstream_sets);
    r.uint("data.downstream_classes", c.downstream_classes);

    r.with("forget.strategy", [&](const std::string& v) {
        if (v == "random") {
            c.forget_strategy = ForgetStrategy::random;
        } else if (v == "top-similarity") {
            c.forget_strategy = ForgetStrategy::top_similarity;
        } else if (v == "explicit") {
            c.forget_strategy = ForgetStrategy::explicit_classes;
        } else {
            throw std::invalid_argument("unknown strategy '" + v + "' (valid: random, top-similarity, explicit)");
        }
    });
    r.uint("forget.count", c.forget_count);
    r.ints("forget.classes", c.forget_classes);

    r.uint("arch.hidden_width", c.hidden_width);
    r.uint("arch.num_stages", c.num_stages);
    r.uint("arch.proj_dim", c.proj_dim);

    r.uint("train.epochs", c.train.epochs);
    r.uint("train.batch", c.train.batch);
    r.with("train.optimizer", [&](const std::string& v) { c.train.optimizer.kind = parse_optimizer_kind(v); });
    r.real("train.lr", c.train.optimizer.learning_rate);
    r.real("train.momentum", c.train.optimizer.momentum);

    r.uint("pretrain.epochs", c.pretrain.epochs);
    r.uint("pretrain.batch", c.pretrain.batch);
    r.with("pretrain.optimizer", [&](const std::string& v) { c.pretrain.optimizer.kind = parse_optimizer_kind(v); });
    r.real("pretrain.lr", c.pretrain.optimizer.learning_rate);
    r.real("pretrain.momentum", c.pretrain.optimizer.momentum);
    r.real("pretrain.temperature", c.pretrain.temperature);

    r.reals("unlearn.layer_weights", c.unlearn.layer_weights);
    r.real("unlearn.lambda_cu", c.unlearn.lambda_cu);
    r.real("unlearn.lambda_ce", c.unlearn.lambda_ce);
    r.real("unlearn.temperature", c.unlearn.temperature);
    r.with("unlearn.variant", [&](const std::string& v) { c.unlearn.variant = parse_variant(v); });
    r.uint("unlearn.epochs", c.unlearn.epochs);
    r.uint("unlearn.forget_batch", c.unlearn.forget_batch);
    r.uint("unlearn.retain_batch", c.unlearn.retain_batch);
    r.uint("unlearn.omega", c.unlearn.omega);
    r.with("unlearn.optimizer", [&](const std::string& v) { c.unlearn.optimizer.kind = parse_optimizer_kind(v); });
    r.real("unlearn.lr", c.unlearn.optimizer.learning_rate);
    r.real("unlearn.grad_clip", c.unlearn.grad_clip);

    r.uint("eval.probe_epochs", c.probe.epochs);
    r.real("eval.probe_lr", c.probe.learning_rate);
    r.real("eval.probe_l2", c.probe.l2);
    r.boolean("eval.probe_standardize", c.probe.standardize);
    r.uint("eval.knn_k", c.knn_k);
    r.boolean("eval.probe_attack", c.probe_attack);

    r.words("run.methods", c.methods);
    r.u64s("run.seeds", c.seeds);
    r.str("run.output", c.output);

    r.schedules("bench.weight_schedules", c.weight_schedules);

    r.finish();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("", "cannot read config file " + path + ": " + e.what());
    }
    return parse(text, path);
}

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const char* path, const std::string& what) {
        if (!ok) throw ConfigError(path, what);
    };
    if (source == DataSource::file) {
        need(!train_file.empty(), "data.train_file", "required when data.source = file");
        need(!test_file.empty(), "data.test_file", "required when data.source = file");
    } else {
        need(blobs.num_classes >= 2, "data.num_classes", "must be at least 2");
        need(blobs.dim >= 2, "data.dim", "must be at least 2");
        need(blobs.train_per_class >= 1, "data.train_per_class", "must be positive");
        need(blobs.test_per_class >= 1, "data.test_per_class", "must be positive");
        need(blobs.spread > 0.0, "data.spread", "must be positive");
        need(blobs.mean_scale > 0.0, "data.mean_scale", "must be positive");
    }
    need(downstream_classes >= 2, "data.downstream_classes", "must be at least 2");
    if (forget_strategy == ForgetStrategy::explicit_classes) {
        need(!forget_classes.empty(), "forget.classes", "required when forget.strategy = explicit");
    } else {
        need(forget_count >= 1, "forget.count", "must be positive");
        need(forget_classes.empty(), "forget.classes", "only valid with forget.strategy = explicit");
    }
    need(forget_strategy != ForgetStrategy::top_similarity || downstream_sets >= 1, "data.downstream_sets",
         "top-similarity selection needs a downstream set");
    need(hidden_width >= 1, "arch.hidden_width", "must be positive");
    need(num_stages >= 2, "arch.num_stages", "must be at least 2");
    need(proj_dim >= 1, "arch.proj_dim", "must be positive");
    need(train.batch >= 1, "train.batch", "must be positive");
    need(train.optimizer.learning_rate >= 0.0, "train.lr", "must be non-negative");
    need(pretrain.batch >= 1, "pretrain.batch", "must be positive");
    need(pretrain.temperature > 0.0, "pretrain.temperature", "must be positive");
    try {
        unlearn.validate(num_stages);
    } catch (const PreconditionError& e) {
        throw ConfigError("unlearn", e.what());
    }
    need(probe.epochs >= 1, "eval.probe_epochs", "must be positive");
    need(knn_k >= 1, "eval.knn_k", "must be positive");
    need(!methods.empty(), "run.methods", "must list at least one method");
    for (const auto& m : methods) {
        try {
            parse_method(m);
        } catch (const PreconditionError& e) {
            throw ConfigError("run.methods", e.what());
        }
    }
    need(!seeds.empty(), "run.seeds", "must list at least one seed");
    for (const auto& w : weight_schedules) {
        need(w.size() == num_stages, "bench.weight_schedules", "each schedule needs one weight per stage");
    }
}

Architecture ExperimentConfig::architecture(const Dataset& train) const {
    Architecture a;
    a.input_dim = train.dim;
    a.num_classes = train.num_classes;
    a.hidden_width = hidden_width;
    a.num_stages = num_stages;
    a.proj_dim = proj_dim;
    return a;
}

std::string ExperimentConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["data.source"] = source == DataSource::blobs ? "blobs" : "file";
    if (source == DataSource::file) {
        kv["data.train_file"] = train_file;
        kv["data.test_file"] = test_file;
    } else {
        kv["data.num_classes"] = std::to_string(blobs.num_classes);
        kv["data.dim"] = std::to_string(blobs.dim);
        kv["data.train_per_class"] = std::to_string(blobs.train_per_class);
        kv["data.test_per_class"] = std::to_string(blobs.test_per_class);
        kv["data.spread"] = fmt_double(blobs.spread);
        kv["data.mean_scale"] = fmt_double(blobs.mean_scale);
    }
    kv["data.downstream_sets"] = std::to_string(downstream_sets);
    kv["data.downstream_classes"] = std::to_string(downstream_classes);
    kv["forget.strategy"] = to_string(forget_strategy);
    kv["forget.count"] = std::to_string(forget_count);
    kv["forget.classes"] = join(forget_classes, ",");
    kv["arch.hidden_width"] = std::to_string(hidden_width);
    kv["arch.num_stages"] = std::to_string(num_stages);
    kv["arch.proj_dim"] = std::to_string(proj_dim);
    kv["train.epochs"] = std::to_string(train.epochs);
    kv["train.batch"] = std::to_string(train.batch);
    kv["train.optimizer"] = optimizer_name(train.optimizer.kind);
    kv["train.lr"] = fmt_double(train.optimizer.learning_rate);
    kv["train.momentum"] = fmt_double(train.optimizer.momentum);
    kv["pretrain.epochs"] = std::to_string(pretrain.epochs);
    kv["pretrain.batch"] = std::to_string(pretrain.batch);
    kv["pretrain.optimizer"] = optimizer_name(pretrain.optimizer.kind);
    kv["pretrain.lr"] = fmt_double(pretrain.optimizer.learning_rate);
    kv["pretrain.momentum"] = fmt_double(pretrain.optimizer.momentum);
    kv["pretrain.temperature"] = fmt_double(pretrain.temperature);
    kv["unlearn.layer_weights"] = join(unlearn.layer_weights, ",");
    kv["unlearn.lambda_cu"] = fmt_double(unlearn.lambda_cu);
    kv["unlearn.lambda_ce"] = fmt_double(unlearn.lambda_ce);
    kv["unlearn.temperature"] = fmt_double(unlearn.temperature);
    kv["unlearn.variant"] = to_string(unlearn.variant);
    kv["unlearn.epochs"] = std::to_string(unlearn.epochs);
    kv["unlearn.forget_batch"] = std::to_string(unlearn.forget_batch);
    kv["unlearn.retain_batch"] = std::to_string(unlearn.retain_batch);
    kv["unlearn.omega"] = std::to_string(unlearn.omega);
    kv["unlearn.optimizer"] = optimizer_name(unlearn.optimizer.kind);
    kv["unlearn.lr"] = fmt_double(unlearn.optimizer.learning_rate);
    kv["unlearn.grad_clip"] = fmt_double(unlearn.grad_clip);
    kv["eval.probe_epochs"] = std::to_string(probe.epochs);
    kv["eval.probe_lr"] = fmt_double(probe.learning_rate);
    kv["eval.probe_l2"] = fmt_double(probe.l2);
    kv["eval.probe_standardize"] = probe.standardize ? "true" : "false";
    kv["eval.knn_k"] = std::to_string(knn_k);
    kv["eval.probe_attack"] = probe_attack ? "true" : "false";
    kv["run.methods"] = join(methods, ",");
    kv["run.seeds"] = join(seeds, ",");
    std::vector<std::string> groups;
    for (const auto& w : weight_schedules) groups.push_back(join(w, ","));
    kv["bench.weight_schedules"] = join(groups, ";");
    // run.output is deliberately absent: moving the output tree must not
    // change the hash that names it.
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    // Seeds, methods and the EC variant are spelled out in the artifact path
    // (out/<hash>/<label>/<seed>), so they stay out of the hash; otherwise a
    // --seed or --variant override would orphan the prerequisite checkpoints.
    Fnv1a h;
    std::istringstream in(canonical());
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("run.seeds ", 0) == 0 || line.rfind("run.methods ", 0) == 0 ||
            line.rfind("unlearn.variant ", 0) == 0) {
            continue;
        }
        h.text(line);
        h.byte('\n');
    }
    return hash_hex(h.value());
}

}  // namespace ecu
