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

#include "ecu/nn.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

#include "ecu/error.hpp"
#include "ecu/hash.hpp"
#include "ecu/ops.hpp"
#include "ecu/random.hpp"

namespace ecu {

Tensor Affine::apply(const Tensor& x) const { return affine(x, weight, bias); }

Tensor Stage::apply(const Tensor& x) const {
    Tensor y = affine.apply(x);
    return activation == Activation::relu ? relu(y) : y;
}

Affine make_affine(std::size_t in, std::size_t out, std::uint64_t seed) {
    if (in == 0 || out == 0) throw PreconditionError("make_affine: zero extent");
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * out);
    for (double& v : w) v = dist(rng);
    return Affine{Tensor({in, out}, std::move(w), true), Tensor::zeros({1, out}, true)};
}

Backbone make_backbone(const Architecture& arch, std::uint64_t seed) {
    if (arch.num_stages < 2) throw PreconditionError("make_backbone: at least 2 stages are required");
    if (arch.num_classes < 2) throw PreconditionError("make_backbone: at least 2 classes are required");
    Backbone backbone;
    std::size_t in = arch.input_dim;
    for (std::size_t s = 0; s < arch.num_stages; ++s) {
        backbone.stages.push_back(Stage{make_affine(in, arch.hidden_width, derive_seed(seed, s)), Activation::relu});
        in = arch.hidden_width;
    }
    backbone.classifier = make_affine(in, arch.num_classes, derive_seed(seed, "classifier"));
    return backbone;
}

ModelBundle::ModelBundle(Backbone backbone, std::vector<ECModule> modules, BundleMetadata meta)
    : backbone_(std::move(backbone)), modules_(std::move(modules)), meta_(std::move(meta)) {
    validate();
}

namespace {

Affine clone_affine(const Affine& a) { return Affine{a.weight.clone(), a.bias.clone()}; }

Stage clone_stage(const Stage& s) { return Stage{clone_affine(s.affine), s.activation}; }

void push_affine(std::vector<NamedParameter>& out, const std::string& prefix, const Affine& a) {
    out.push_back({prefix + ".weight", a.weight});
    out.push_back({prefix + ".bias", a.bias});
}

}  // namespace

ModelBundle ModelBundle::clone() const {
    Backbone b;
    for (const auto& s : backbone_.stages) b.stages.push_back(clone_stage(s));
    b.classifier = clone_affine(backbone_.classifier);
    std::vector<ECModule> modules;
    for (const auto& m : modules_) {
        ECModule copy;
        copy.stage = m.stage;
        for (const auto& blk : m.blocks) copy.blocks.push_back(clone_stage(blk));
        copy.aux_classifier = clone_affine(m.aux_classifier);
        copy.aux_frozen = m.aux_frozen;
        modules.push_back(std::move(copy));
    }
    return ModelBundle(std::move(b), std::move(modules), meta_);
}

const ECModule* ModelBundle::module_at(std::size_t stage) const {
    for (const auto& m : modules_) {
        if (m.stage == stage) return &m;
    }
    return nullptr;
}

std::vector<NamedParameter> ModelBundle::backbone_parameters() const {
    std::vector<NamedParameter> out;
    for (std::size_t s = 0; s < backbone_.stages.size(); ++s) {
        push_affine(out, "stage" + std::to_string(s + 1), backbone_.stages[s].affine);
    }
    push_affine(out, "classifier", backbone_.classifier);
    return out;
}

std::vector<NamedParameter> ModelBundle::ec_block_parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& m : modules_) {
        for (std::size_t b = 0; b < m.blocks.size(); ++b) {
            push_affine(out, "ec" + std::to_string(m.stage) + ".block" + std::to_string(b + 1), m.blocks[b].affine);
        }
    }
    return out;
}

std::vector<NamedParameter> ModelBundle::aux_classifier_parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& m : modules_) push_affine(out, "ec" + std::to_string(m.stage) + ".aux", m.aux_classifier);
    return out;
}

std::vector<NamedParameter> ModelBundle::parameters() const {
    std::vector<NamedParameter> out = backbone_parameters();
    for (const auto& m : modules_) {
        const std::string prefix = "ec" + std::to_string(m.stage);
        for (std::size_t b = 0; b < m.blocks.size(); ++b) {
            push_affine(out, prefix + ".block" + std::to_string(b + 1), m.blocks[b].affine);
        }
        push_affine(out, prefix + ".aux", m.aux_classifier);
    }
    return out;
}

void ModelBundle::validate() const {
    const std::size_t L = backbone_.stages.size();
    if (L < 2) throw PreconditionError("bundle: backbone needs at least 2 stages");
    for (std::size_t s = 1; s < L; ++s) {
        if (backbone_.stages[s].affine.in_dim() != backbone_.stages[s - 1].affine.out_dim()) {
            throw ShapeError("bundle: stage " + std::to_string(s + 1) + " input width does not chain");
        }
    }
    if (backbone_.classifier.in_dim() != backbone_.feature_dim()) {
        throw ShapeError("bundle: classifier input width differs from final stage width");
    }
    std::size_t previous = 0;
    for (const auto& m : modules_) {
        if (m.stage < 1 || m.stage >= L) {
            throw PreconditionError("bundle: EC module stage " + std::to_string(m.stage) + " outside [1, L-1]");
        }
        if (m.stage <= previous) throw PreconditionError("bundle: EC module stages must be strictly increasing");
        previous = m.stage;
        if (m.blocks.size() != L - m.stage) {
            throw PreconditionError("bundle: EC module at stage " + std::to_string(m.stage) + " has " +
                                    std::to_string(m.blocks.size()) + " blocks, expected " +
                                    std::to_string(L - m.stage));
        }
        std::size_t in = backbone_.stages[m.stage - 1].affine.out_dim();
        for (const auto& blk : m.blocks) {
            if (blk.affine.in_dim() != in) throw ShapeError("bundle: EC block widths do not chain");
            in = blk.affine.out_dim();
        }
        if (m.aux_classifier.in_dim() != in || m.aux_classifier.out_dim() != num_classes()) {
            throw ShapeError("bundle: aux classifier must map projection width to the class count");
        }
    }
}

ForwardResult forward_taps(const Backbone& backbone, const Tensor& x) {
    if (x.ndim() != 2 || x.cols() != backbone.input_dim()) {
        throw ShapeError("forward_taps: input " + shape_string(x.shape()) + " does not match input width " +
                         std::to_string(backbone.input_dim()));
    }
    ForwardResult result;
    Tensor h = x;
    for (const auto& stage : backbone.stages) {
        h = stage.apply(h);
        result.taps.push_back(h);
    }
    result.logits = backbone.classifier.apply(h);
    return result;
}

Tensor ec_project(const ECModule& module, const Tensor& tap) {
    Tensor h = tap;
    for (const auto& blk : module.blocks) h = blk.apply(h);
    return h;
}

Embedding ec_embed(const ModelBundle& bundle, const Tensor& tap, std::size_t layer) {
    const std::size_t L = bundle.num_stages();
    if (layer < 1 || layer > L) throw PreconditionError("ec_embed: layer " + std::to_string(layer) + " out of range");
    if (layer == L) return Embedding{l2_normalize(tap, 1, kEmbeddingNormEps), bundle.backbone().classifier.apply(tap)};
    const ECModule* module = bundle.module_at(layer);
    if (module == nullptr) throw PreconditionError("ec_embed: no EC module attached at stage " + std::to_string(layer));
    Tensor h = ec_project(*module, tap);
    return Embedding{l2_normalize(h, 1, kEmbeddingNormEps), module->aux_classifier.apply(h)};
}

ModelBundle attach_ec_modules(Backbone backbone, std::size_t proj_dim, std::uint64_t seed, BundleMetadata meta) {
    const std::size_t L = backbone.num_stages();
    const std::size_t C = backbone.num_classes();
    std::vector<ECModule> modules;
    for (std::size_t k = 1; k < L; ++k) {
        ECModule m;
        m.stage = k;
        std::size_t in = backbone.stages[k - 1].affine.out_dim();
        for (std::size_t b = 0; b < L - k; ++b) {
            m.blocks.push_back(Stage{make_affine(in, proj_dim, derive_seed(seed, 1000 * k + b)), Activation::relu});
            in = proj_dim;
        }
        m.aux_classifier = make_affine(in, C, derive_seed(seed, 1000 * k + 999));
        m.aux_frozen = true;
        modules.push_back(std::move(m));
    }
    return ModelBundle(std::move(backbone), std::move(modules), std::move(meta));
}

std::uint64_t hash_parameters(const std::vector<NamedParameter>& params) {
    Fnv1a h;
    for (const auto& p : params) {
        h.text(p.name);
        for (std::size_t extent : p.tensor.shape()) h.u64(extent);
        for (double v : p.tensor.values()) h.u64(std::bit_cast<std::uint64_t>(v));
    }
    return h.value();
}

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace ecu
