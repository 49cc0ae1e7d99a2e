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

#ifndef ECU_DATA_HPP
#define ECU_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecu/tensor.hpp"

namespace ecu {

enum class SplitTag : std::uint8_t { train = 0, test = 1 };

/// Labeled feature matrix. Immutable once built.
struct Dataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    SplitTag split = SplitTag::train;
    std::vector<double> features;  // row-major [size x dim]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

    /// Gathers rows into a constant [indices.size() x dim] tensor.
    Tensor batch(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
    Tensor all() const;
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Rows whose label is in `classes` (a membership mask over [0, C)).
    Dataset filter(const std::vector<bool>& classes) const;
};

Dataset concat_datasets(const Dataset& a, const Dataset& b);

struct BlobParams {
    std::uint64_t seed = 0;
    std::size_t num_classes = 20;
    std::size_t dim = 16;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 50;
    double spread = 0.3;
    double mean_scale = 4.0;
};

/// Gaussian blobs around class means drawn on a sphere of radius
/// `mean_scale`. Train and test samples come from independent streams.
std::pair<Dataset, Dataset> gen_blobs(const BlobParams& params);

/// Forget / retain class partition.
struct SplitSpec {
    std::size_t num_classes = 0;
    std::vector<int> forget;  // sorted
    std::vector<int> retain;  // sorted complement

    static SplitSpec from_forget(std::vector<int> forget, std::size_t num_classes);
    bool is_forget(int label) const;
    std::vector<bool> forget_mask() const;
    std::vector<bool> retain_mask() const;
};

struct Splits {
    Dataset forget_train;  // D_f
    Dataset retain_train;  // D_r
    Dataset forget_test;   // D_f^te
    Dataset retain_test;   // D_r^te
};

Splits split_by_classes(const Dataset& train, const Dataset& test, const SplitSpec& spec);

SplitSpec select_random_classes(const Dataset& data, std::size_t k, std::uint64_t seed);
/// k classes whose class means have the smallest mean Euclidean distance to
/// the downstream class means. Ties go to the lower class index.
SplitSpec select_top_similarity(const Dataset& data, std::size_t k, const Dataset& downstream);

struct BatchPlan {
    std::size_t forget_batch = 32;
    std::size_t retain_batch = 32;
    std::size_t omega = 2;  // retain batches per forget batch
    std::uint64_t seed = 0;
};

/// One optimization step: a forget batch and the concatenation of omega
/// freshly drawn retain batches. Indices point into D_f / D_r.
struct StepBatch {
    std::vector<std::size_t> forget;
    std::vector<std::size_t> retain;
    std::size_t retain_batches = 0;
};

/// Batches of one epoch. Every forget index appears exactly once; the last
/// forget batch may be short.
std::vector<StepBatch> sample_batches(const BatchPlan& plan, std::size_t forget_size, std::size_t retain_size,
                                      std::size_t epoch);

/// Plain shuffled minibatches over [0, n), for supervised training loops.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, std::uint64_t seed);

inline constexpr std::uint16_t kDatasetVersion = 1;

// "ULAB", u16 version, u32 n, u32 d, u32 C, u8 split tag, n*d f64 features,
// n u16 labels; all little-endian.
std::string encode_dataset(const Dataset& data);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace ecu

#endif  // ECU_DATA_HPP
