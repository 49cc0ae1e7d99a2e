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

#ifndef ECU_NN_HPP
#define ECU_NN_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ecu/tensor.hpp"

namespace ecu {

enum class Activation { relu, identity };

/// x W + b. weight is [in x out], bias is [1 x out].
struct Affine {
    Tensor weight;
    Tensor bias;

    std::size_t in_dim() const { return weight.shape()[0]; }
    std::size_t out_dim() const { return weight.shape()[1]; }
    Tensor apply(const Tensor& x) const;
};

struct Stage {
    Affine affine;
    Activation activation = Activation::relu;

    Tensor apply(const Tensor& x) const;
};

struct Architecture {
    std::size_t input_dim = 16;
    std::size_t hidden_width = 64;
    std::size_t num_stages = 4;
    std::size_t num_classes = 20;
    std::size_t proj_dim = 32;
};

/// Stage-tapped feature extractor plus the final linear classifier.
struct Backbone {
    std::vector<Stage> stages;
    Affine classifier;

    std::size_t num_stages() const { return stages.size(); }
    std::size_t input_dim() const { return stages.front().affine.in_dim(); }
    std::size_t feature_dim() const { return stages.back().affine.out_dim(); }
    std::size_t num_classes() const { return classifier.out_dim(); }
};

/// Auxiliary projection stack attached after backbone stage `stage`
/// (1-based). Holds exactly L - stage affine+ReLU blocks.
struct ECModule {
    std::size_t stage = 0;
    std::vector<Stage> blocks;
    Affine aux_classifier;
    bool aux_frozen = true;

    std::size_t proj_dim() const { return blocks.back().affine.out_dim(); }
};

struct BundleMetadata {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string provenance = "original";  // original | retrained | unlearned:<method>
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Backbone, classifier and EC modules trained together during unlearning.
/// Tensors are shared handles, so copying is explicit through `clone()`.
class ModelBundle {
  public:
    ModelBundle() = default;
    ModelBundle(Backbone backbone, std::vector<ECModule> modules, BundleMetadata meta);

    ModelBundle(const ModelBundle&) = delete;
    ModelBundle& operator=(const ModelBundle&) = delete;
    ModelBundle(ModelBundle&&) = default;
    ModelBundle& operator=(ModelBundle&&) = default;

    ModelBundle clone() const;

    Backbone& backbone() { return backbone_; }
    const Backbone& backbone() const { return backbone_; }
    const std::vector<ECModule>& ec_modules() const { return modules_; }
    std::vector<ECModule>& ec_modules() { return modules_; }
    const ECModule* module_at(std::size_t stage) const;
    BundleMetadata& metadata() { return meta_; }
    const BundleMetadata& metadata() const { return meta_; }

    std::size_t num_stages() const { return backbone_.num_stages(); }
    std::size_t num_classes() const { return backbone_.num_classes(); }

    /// Every parameter in a fixed order (backbone, classifier, modules).
    std::vector<NamedParameter> parameters() const;
    std::vector<NamedParameter> backbone_parameters() const;  // stages + final classifier
    std::vector<NamedParameter> ec_block_parameters() const;
    std::vector<NamedParameter> aux_classifier_parameters() const;

    /// Throws PreconditionError if a structural invariant is broken.
    void validate() const;

  private:
    Backbone backbone_;
    std::vector<ECModule> modules_;
    BundleMetadata meta_;
};

struct ForwardResult {
    std::vector<Tensor> taps;  // raw stage outputs t^1..t^L
    Tensor logits;             // final classifier applied to t^L
};

Backbone make_backbone(const Architecture& arch, std::uint64_t seed);

ForwardResult forward_taps(const Backbone& backbone, const Tensor& x);
inline ForwardResult forward_taps(const ModelBundle& bundle, const Tensor& x) {
    return forward_taps(bundle.backbone(), x);
}

struct Embedding {
    Tensor z;           // row-normalized embedding
    Tensor aux_logits;  // g^l applied to the pre-normalization projection
};

/// Divisor floor for embedding normalization; a dead (all-zero) ReLU row maps
/// to the zero embedding instead of aborting the step.
inline constexpr double kEmbeddingNormEps = 1e-12;

/// Layer-`layer` (1-based) embedding of a tap. For layer == L the identity
/// path is used: z = Norm(t^L), logits from the final classifier.

Embedding ec_embed(const ModelBundle& bundle, const Tensor& tap, std::size_t layer);

/// Applies only the projection blocks of a module (no normalization).
Tensor ec_project(const ECModule& module, const Tensor& tap);

/// Attaches one module per stage 1..L-1 with (L - k) blocks each.
ModelBundle attach_ec_modules(Backbone backbone, std::size_t proj_dim, std::uint64_t seed,
                              BundleMetadata meta = {});

/// He-uniform initialized layer, zero bias.
Affine make_affine(std::size_t in, std::size_t out, std::uint64_t seed);

/// FNV-1a over names, shapes and value bytes of the given parameters.
std::uint64_t hash_parameters(const std::vector<NamedParameter>& params);
std::string hash_hex(std::uint64_t hash);

}  // namespace ecu

#endif  // ECU_NN_HPP
