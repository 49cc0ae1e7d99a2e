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

#include "ecu/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ecu/binary_io.hpp"
#include "ecu/error.hpp"
#include "ecu/random.hpp"

namespace ecu {

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * dim);
    for (std::size_t i : indices) {
        if (i >= size()) throw PreconditionError("dataset: row index " + std::to_string(i) + " out of range");
        const auto r = row(i);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor({indices.size(), dim}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels.at(i));
    return out;
}

Tensor Dataset::all() const { return Tensor({size(), dim}, features); }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out{dim, num_classes, split, {}, {}};
    out.features.reserve(indices.size() * dim);
    for (std::size_t i : indices) {
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels.at(i));
    }
    return out;
}

Dataset Dataset::filter(const std::vector<bool>& classes) const {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y < classes.size() && classes[y]) keep.push_back(i);
    }
    return subset(keep);
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
    if (a.dim != b.dim || a.num_classes != b.num_classes) throw ShapeError("concat_datasets: incompatible datasets");
    Dataset out = a;
    out.features.insert(out.features.end(), b.features.begin(), b.features.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

std::pair<Dataset, Dataset> gen_blobs(const BlobParams& p) {
    if (p.num_classes < 2) throw PreconditionError("gen_blobs: need at least 2 classes");
    if (p.dim < 2) throw PreconditionError("gen_blobs: need at least 2 dimensions");
    if (!(p.spread > 0.0)) throw PreconditionError("gen_blobs: spread must be positive");
    if (!(p.mean_scale > 0.0)) throw PreconditionError("gen_blobs: mean scale must be positive");
    if (p.train_per_class == 0 || p.test_per_class == 0) throw PreconditionError("gen_blobs: empty class");

    std::normal_distribution<double> normal(0.0, 1.0);
    Rng mean_rng(derive_seed(p.seed, "class-means"));
    std::vector<double> means(p.num_classes * p.dim);
    for (std::size_t c = 0; c < p.num_classes; ++c) {
        double sq = 0.0;
        for (std::size_t j = 0; j < p.dim; ++j) {
            const double v = normal(mean_rng);
            means[c * p.dim + j] = v;
            sq += v * v;
        }
        const double s = p.mean_scale / std::sqrt(sq);
        for (std::size_t j = 0; j < p.dim; ++j) means[c * p.dim + j] *= s;
    }

    auto draw = [&](SplitTag tag, std::size_t per_class, std::uint64_t seed) {
        Dataset d{p.dim, p.num_classes, tag, {}, {}};
        d.features.reserve(p.num_classes * per_class * p.dim);
        Rng rng(seed);
        for (std::size_t c = 0; c < p.num_classes; ++c) {
            for (std::size_t i = 0; i < per_class; ++i) {
                for (std::size_t j = 0; j < p.dim; ++j) {
                    d.features.push_back(means[c * p.dim + j] + p.spread * normal(rng));
                }
                d.labels.push_back(static_cast<int>(c));
            }
        }
        return d;
    };
    return {draw(SplitTag::train, p.train_per_class, derive_seed(p.seed, "train")),
            draw(SplitTag::test, p.test_per_class, derive_seed(p.seed, "test"))};
}

SplitSpec SplitSpec::from_forget(std::vector<int> forget, std::size_t num_classes) {
    std::sort(forget.begin(), forget.end());
    if (std::adjacent_find(forget.begin(), forget.end()) != forget.end()) {
        throw PreconditionError("split: duplicate forget class");
    }
    for (int c : forget) {
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
            throw PreconditionError("split: class index " + std::to_string(c) + " outside [0, " +
                                    std::to_string(num_classes) + ")");
        }
    }
    if (forget.empty()) throw PreconditionError("split: forget set must be non-empty");
    if (forget.size() >= num_classes) throw PreconditionError("split: forget set must be a proper subset of the classes");
    SplitSpec spec;
    spec.num_classes = num_classes;
    spec.forget = std::move(forget);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (!std::binary_search(spec.forget.begin(), spec.forget.end(), static_cast<int>(c))) {
            spec.retain.push_back(static_cast<int>(c));
        }
    }
    return spec;
}

bool SplitSpec::is_forget(int label) const { return std::binary_search(forget.begin(), forget.end(), label); }

std::vector<bool> SplitSpec::forget_mask() const {
    std::vector<bool> m(num_classes, false);
    for (int c : forget) m[static_cast<std::size_t>(c)] = true;
    return m;
}

std::vector<bool> SplitSpec::retain_mask() const {
    auto m = forget_mask();
    m.flip();
    return m;
}

Splits split_by_classes(const Dataset& train, const Dataset& test, const SplitSpec& spec) {
    if (spec.num_classes != train.num_classes || spec.num_classes != test.num_classes) {
        throw PreconditionError("split_by_classes: split spec class count does not match the dataset");
    }
    const auto f = spec.forget_mask();
    const auto r = spec.retain_mask();
    return Splits{train.filter(f), train.filter(r), test.filter(f), test.filter(r)};
}

SplitSpec select_random_classes(const Dataset& data, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k >= data.num_classes) {
        throw PreconditionError("select_random_classes: k = " + std::to_string(k) + " outside (0, " +
                                std::to_string(data.num_classes) + ")");
    }
    std::vector<int> classes(data.num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    Rng rng(derive_seed(seed, "forget-classes"));
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
        std::swap(classes[i], classes[pick(rng)]);
    }
    classes.resize(k);
    return SplitSpec::from_forget(std::move(classes), data.num_classes);
}

namespace {

std::vector<std::vector<double>> class_means(const Dataset& data) {
    std::vector<std::vector<double>> means(data.num_classes, std::vector<double>(data.dim, 0.0));
    std::vector<std::size_t> counts(data.num_classes, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto y = static_cast<std::size_t>(data.labels[i]);
        const auto r = data.row(i);
        for (std::size_t j = 0; j < data.dim; ++j) means[y][j] += r[j];
        ++counts[y];
    }
    std::vector<std::vector<double>> present;
    for (std::size_t c = 0; c < data.num_classes; ++c) {
        if (counts[c] == 0) {
            present.emplace_back();
            continue;
        }
        for (double& v : means[c]) v /= static_cast<double>(counts[c]);
        present.push_back(means[c]);
    }
    return present;
}

}  // namespace

SplitSpec select_top_similarity(const Dataset& data, std::size_t k, const Dataset& downstream) {
    if (k == 0 || k >= data.num_classes) {
        throw PreconditionError("select_top_similarity: k = " + std::to_string(k) + " outside (0, " +
                                std::to_string(data.num_classes) + ")");
    }
    if (downstream.dim != data.dim) throw ShapeError("select_top_similarity: downstream feature width differs");
    const auto mine = class_means(data);
    const auto theirs = class_means(downstream);
    std::vector<std::pair<double, int>> scored;
    for (std::size_t c = 0; c < mine.size(); ++c) {
        if (mine[c].empty()) throw PreconditionError("select_top_similarity: class " + std::to_string(c) + " is empty");
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& other : theirs) {
            if (other.empty()) continue;
            double sq = 0.0;
            for (std::size_t j = 0; j < data.dim; ++j) sq += (mine[c][j] - other[j]) * (mine[c][j] - other[j]);
            total += std::sqrt(sq);
            ++count;
        }
        if (count == 0) throw PreconditionError("select_top_similarity: downstream dataset is empty");
        scored.emplace_back(total / static_cast<double>(count), static_cast<int>(c));
    }
    std::sort(scored.begin(), scored.end());
    std::vector<int> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(scored[i].second);
    return SplitSpec::from_forget(std::move(chosen), data.num_classes);
}

std::vector<StepBatch> sample_batches(const BatchPlan& plan, std::size_t forget_size, std::size_t retain_size,
                                      std::size_t epoch) {
    if (forget_size == 0 || retain_size == 0) throw PreconditionError("sample_batches: empty forget or retain split");
    if (plan.omega < 1) throw PreconditionError("sample_batches: omega must be at least 1");
    if (plan.forget_batch == 0 || plan.retain_batch == 0) throw PreconditionError("sample_batches: zero batch size");
    if (plan.forget_batch > forget_size) throw PreconditionError("sample_batches: forget batch exceeds forget split");
    if (plan.retain_batch > retain_size) throw PreconditionError("sample_batches: retain batch exceeds retain split");

    Rng rng(derive_seed(plan.seed, epoch));
    std::vector<std::size_t> order(forget_size);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> pool(retain_size);
    std::vector<StepBatch> steps;
    for (std::size_t start = 0; start < forget_size; start += plan.forget_batch) {
        StepBatch step;
        const std::size_t end = std::min(forget_size, start + plan.forget_batch);
        step.forget.assign(order.begin() + start, order.begin() + end);
        for (std::size_t b = 0; b < plan.omega; ++b) {
            std::iota(pool.begin(), pool.end(), 0);
            for (std::size_t i = 0; i < plan.retain_batch; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, retain_size - 1);
                std::swap(pool[i], pool[pick(rng)]);
                step.retain.push_back(pool[i]);
            }
        }
        step.retain_batches = plan.omega;
        steps.push_back(std::move(step));
    }
    return steps;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, std::uint64_t seed) {
    if (batch == 0) throw PreconditionError("shuffled_batches: zero batch size");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        out.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch));
    }
    return out;
}

std::string encode_dataset(const Dataset& data) {
    if (data.num_classes > 0xffff) throw PreconditionError("encode_dataset: more than 65535 classes");
    if (data.features.size() != data.size() * data.dim) throw ShapeError("encode_dataset: feature buffer size mismatch");
    io::Writer out;
    out.bytes("ULAB");
    out.uint<std::uint16_t>(kDatasetVersion);
    out.uint<std::uint32_t>(static_cast<std::uint32_t>(data.size()));
    out.uint<std::uint32_t>(static_cast<std::uint32_t>(data.dim));
    out.uint<std::uint32_t>(static_cast<std::uint32_t>(data.num_classes));
    out.uint<std::uint8_t>(static_cast<std::uint8_t>(data.split));
    for (double v : data.features) out.f64(v);
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) throw PreconditionError("encode_dataset: label out of range");
        out.uint<std::uint16_t>(static_cast<std::uint16_t>(y));
    }
    return out.data();
}

Dataset decode_dataset(const std::string& bytes) {
    io::Reader in(bytes, "dataset");
    if (in.bytes(4) != "ULAB") throw FormatError("dataset: bad magic (expected ULAB)");
    const auto version = in.uint<std::uint16_t>();
    if (version != kDatasetVersion) throw FormatError("dataset: unsupported format version " + std::to_string(version));
    Dataset d;
    const auto n = in.uint<std::uint32_t>();
    d.dim = in.uint<std::uint32_t>();
    d.num_classes = in.uint<std::uint32_t>();
    const auto tag = in.uint<std::uint8_t>();
    if (tag > 1) throw FormatError("dataset: unknown split tag " + std::to_string(tag));
    d.split = static_cast<SplitTag>(tag);
    if (in.remaining() != static_cast<std::size_t>(n) * d.dim * 8 + static_cast<std::size_t>(n) * 2) {
        throw FormatError("dataset: payload size does not match header (truncated?)");
    }
    d.features.resize(static_cast<std::size_t>(n) * d.dim);
    for (double& v : d.features) v = in.f64();
    d.labels.resize(n);
    for (int& y : d.labels) {
        y = in.uint<std::uint16_t>();
        if (static_cast<std::size_t>(y) >= d.num_classes) {
            throw FormatError("dataset: label " + std::to_string(y) + " >= class count " + std::to_string(d.num_classes));
        }
    }
    return d;
}

void save_dataset(const Dataset& data, const std::string& path) { io::write_file(path, encode_dataset(data)); }

Dataset load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace ecu
