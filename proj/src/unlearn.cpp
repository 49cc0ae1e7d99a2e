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

#include "ecu/unlearn.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ecu/error.hpp"
#include "ecu/ops.hpp"
#include "ecu/random.hpp"

namespace ecu {

// ---------------------------------------------------------------------------
// Supervised training

ModelBundle train_classifier(const Dataset& train, const Architecture& arch, const TrainConfig& config,
                             const std::string& provenance, std::vector<double>* epoch_loss) {
    if (train.size() == 0) throw PreconditionError("train_classifier: empty training set");
    if (train.dim != arch.input_dim || train.num_classes != arch.num_classes) {
        throw ShapeError("train_classifier: dataset does not match the architecture");
    }
    ModelBundle bundle(make_backbone(arch, derive_seed(config.seed, "init")), {},
                       BundleMetadata{config.seed, "", provenance});
    std::vector<Tensor> params;
    for (auto& p : bundle.backbone_parameters()) params.push_back(p.tensor);
    Optimizer opt(config.optimizer, params);
    if (epoch_loss != nullptr) epoch_loss->clear();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& idx : shuffled_batches(train.size(), config.batch, derive_seed(config.seed, 1000 + epoch))) {
            const Tensor x = train.batch(idx);
            const auto y = train.batch_labels(idx);
            opt.zero_grad();
            Tape tape;
            Tensor loss;
            {
                Tape::Scope scope(tape);
                loss = softmax_cross_entropy(forward_taps(bundle, x).logits, y);
            }
            tape.backward(loss);
            opt.step();
            total += loss.item();
            ++count;
        }
        if (epoch_loss != nullptr) epoch_loss->push_back(total / static_cast<double>(count));
    }
    return bundle;
}

ModelBundle train_original(const Dataset& train, const Architecture& arch, const TrainConfig& config,
                           std::vector<double>* epoch_loss) {
    return train_classifier(train, arch, config, "original", epoch_loss);
}

ModelBundle retrain_oracle(const Dataset& retain_train, const Architecture& arch, const TrainConfig& config,
                           std::vector<double>* epoch_loss) {
    return train_classifier(retain_train, arch, config, "retrained", epoch_loss);
}

// ---------------------------------------------------------------------------
// SupCon pretraining

std::string frozen_hash(const ModelBundle& bundle) {
    auto params = bundle.backbone_parameters();
    for (auto& p : bundle.aux_classifier_parameters()) params.push_back(p);
    return hash_hex(hash_parameters(params));
}

ModelBundle supcon_pretrain(ModelBundle bundle, const Dataset& data, const PretrainConfig& config,
                            PretrainReport* report) {
    if (bundle.ec_modules().empty()) throw PreconditionError("supcon_pretrain: bundle has no EC modules");
    if (data.size() == 0) throw PreconditionError("supcon_pretrain: empty dataset");
    const std::string before = frozen_hash(bundle);
    std::vector<Tensor> blocks;
    for (auto& p : bundle.ec_block_parameters()) blocks.push_back(p.tensor);
    Optimizer opt(config.optimizer, blocks);
    std::vector<double> epoch_loss;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& idx : shuffled_batches(data.size(), config.batch, derive_seed(config.seed, 2000 + epoch))) {
            const auto y = data.batch_labels(idx);
            // Taps are computed outside the tape: the backbone is frozen.
            const ForwardResult fwd = forward_taps(bundle, data.batch(idx));
            opt.zero_grad();
            Tape tape;
            Tensor loss;
            {
                Tape::Scope scope(tape);
                std::optional<Tensor> acc;
                for (const auto& module : bundle.ec_modules()) {
                    const Tensor z = l2_normalize(ec_project(module, fwd.taps[module.stage - 1]), 1, kEmbeddingNormEps);
                    const Tensor term = supcon_loss(z, y, config.temperature);
                    acc = acc ? add(*acc, term) : term;
                }
                loss = *acc;
            }
            tape.backward(loss);
            opt.step();
            total += loss.item();
            ++count;
        }
        epoch_loss.push_back(count ? total / static_cast<double>(count) : 0.0);
    }
    const std::string after = frozen_hash(bundle);
    if (before != after) {
        throw std::runtime_error("supcon_pretrain: frozen parameters changed (hash " + before + " -> " + after + ")");
    }
    if (report != nullptr) *report = PretrainReport{before, after, std::move(epoch_loss)};
    return bundle;
}

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_layerwise_ce: return "no-layerwise-ce";
        case Variant::no_ec_modules: return "no-ec-modules";
        case Variant::plus_final_blocks: return "plus-final-blocks";
    }
    return "full";
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::full, Variant::no_layerwise_ce, Variant::no_ec_modules, Variant::plus_final_blocks}) {
        if (to_string(v) == name) return v;
    }
    throw PreconditionError("unknown variant '" + name +
                            "' (valid: full, no-layerwise-ce, no-ec-modules, plus-final-blocks)");
}

void UnlearnConfig::validate(std::size_t num_stages) const {
    if (layer_weights.size() != num_stages) {
        throw PreconditionError("unlearn config: " + std::to_string(layer_weights.size()) + " layer weights for " +
                                std::to_string(num_stages) + " stages");
    }
    bool any = false;
    for (double w : layer_weights) {
        if (!(w >= 0.0)) throw PreconditionError("unlearn config: layer weights must be non-negative");
        any = any || w > 0.0;
    }
    if (!any) throw PreconditionError("unlearn config: at least one layer weight must be positive");
    if (!(lambda_cu >= 0.0) || !(lambda_ce >= 0.0)) throw PreconditionError("unlearn config: lambdas must be non-negative");
    if (!(temperature > 0.0)) throw PreconditionError("unlearn config: temperature must be positive");
    if (omega < 1) throw PreconditionError("unlearn config: omega must be at least 1");
    if (forget_batch == 0 || retain_batch == 0) throw PreconditionError("unlearn config: zero batch size");
    if (!(grad_clip >= 0.0)) throw PreconditionError("unlearn config: grad_clip must be non-negative");
}

// ---------------------------------------------------------------------------
// Loss log

std::string LossLog::point_name(std::size_t p) const {
    if (num_stages == 0 || p < num_stages) return std::to_string(p + 1);
    return std::to_string(num_stages) + "." + std::to_string(p - num_stages);
}

void LossLog::write_csv(std::ostream& out) const {
    const std::size_t points = rows.empty() ? 0 : rows.front().cu.size();
    out << "epoch,step";
    for (std::size_t p = 0; p < points; ++p) out << ",cu_" << point_name(p);
    for (std::size_t p = 0; p < points; ++p) out << ",ce_" << point_name(p);
    out << ",total\n";
    auto put = [&out](const std::optional<double>& v) {
        out << ',';
        if (v) {
            std::ostringstream s;
            s.precision(17);
            s << *v;
            out << s.str();
        }
    };
    for (const auto& row : rows) {
        out << row.epoch << ',' << row.step;
        for (const auto& v : row.cu) put(v);
        for (const auto& v : row.ce) put(v);
        put(row.total);
        out << '\n';
    }
}

std::string LossLog::to_csv() const {
    std::ostringstream out;
    write_csv(out);
    return out.str();
}

// ---------------------------------------------------------------------------
// Objectives

namespace {

struct JointForward {
    ForwardResult fwd;
    std::size_t nf = 0;
    std::size_t nr = 0;

    Tensor forget_rows(const Tensor& t) const { return slice(t, 0, 0, nf); }
    Tensor retain_rows(const Tensor& t) const { return slice(t, 0, nf, nf + nr); }
};

// Forget and retain rows go through the network as one stacked batch.
JointForward joint_forward(const ModelBundle& bundle, const StepInput& in) {
    const std::array<Tensor, 2> parts{in.forget_x, in.retain_x};
    JointForward jf;
    jf.nf = in.forget_x.rows();
    jf.nr = in.retain_x.rows();
    jf.fwd = forward_taps(bundle, concat(parts, 0));
    return jf;
}

Tensor cu_on(const JointForward& jf, const Tensor& features, double temperature) {
    const Tensor z = l2_normalize(features, 1, kEmbeddingNormEps);
    return cu_loss_layer(jf.forget_rows(z), jf.retain_rows(z), temperature);
}

StepLoss summarize(Tensor total, const std::vector<LayerLoss>& layers) {
    StepLoss out;
    out.total = std::move(total);
    for (const auto& l : layers) {
        out.cu.push_back(l.cu ? std::optional<double>(l.cu->item()) : std::nullopt);
        out.ce.push_back(l.ce ? std::optional<double>(l.ce->item()) : std::nullopt);
    }
    return out;
}

StepLoss final_only(Tensor total, std::size_t points, std::optional<double> ce) {
    StepLoss out;
    out.total = std::move(total);
    out.cu.assign(points, std::nullopt);
    out.ce.assign(points, std::nullopt);
    out.ce.back() = ce;
    return out;
}

}  // namespace

std::vector<double> ec_point_weights(const UnlearnConfig& config) {
    std::vector<double> w = config.layer_weights;
    if (config.variant == Variant::plus_final_blocks) {
        w.push_back(config.layer_weights.back());
        w.push_back(config.layer_weights.back());
    }
    return w;
}

std::vector<LayerLoss> ec_layer_losses(const ModelBundle& bundle, const StepInput& in, const UnlearnConfig& config,
                                       const SplitSpec& split) {
    const std::size_t L = bundle.num_stages();
    const JointForward jf = joint_forward(bundle, in);
    std::vector<LayerLoss> layers;
    for (std::size_t l = 1; l <= L; ++l) {
        const Tensor& tap = jf.fwd.taps[l - 1];
        LayerLoss layer;
        if (l < L && config.variant == Variant::no_ec_modules) {
            layer.cu = cu_on(jf, tap, config.temperature);
        } else if (l == L) {
            layer.cu = cu_on(jf, tap, config.temperature);
            layer.ce = ce_loss_layer(jf.retain_rows(jf.fwd.logits), in.retain_y, split);
        } else {
            const ECModule* module = bundle.module_at(l);
            if (module == nullptr) {
                throw PreconditionError("ec objective: no EC module at stage " + std::to_string(l) +
                                        " (run EC pretraining or use variant no-ec-modules)");
            }
            const Tensor h = ec_project(*module, tap);
            layer.cu = cu_on(jf, h, config.temperature);
            if (config.variant != Variant::no_layerwise_ce) {
                layer.ce = ce_loss_layer(module->aux_classifier.apply(jf.retain_rows(h)), in.retain_y, split);
            }
        }
        layers.push_back(std::move(layer));
    }
    if (config.variant == Variant::plus_final_blocks) {
        // Column halves of stage L are the outputs of its two half-width sub-affines.
        const Tensor& last = jf.fwd.taps[L - 1];
        const std::size_t half = last.cols() / 2;
        layers.push_back(LayerLoss{cu_on(jf, slice(last, 1, 0, half), config.temperature), std::nullopt});
        layers.push_back(LayerLoss{cu_on(jf, slice(last, 1, half, last.cols()), config.temperature), std::nullopt});
    }
    return layers;
}

Objective ec_objective(const UnlearnConfig& config, const SplitSpec& split) {
    return [config, split](const ModelBundle& bundle, const StepInput& in) {
        const auto layers = ec_layer_losses(bundle, in, config, split);
        const auto weights = ec_point_weights(config);
        return summarize(total_loss(layers, weights, config.lambda_cu, config.lambda_ce), layers);
    };
}

Objective cu_objective(const UnlearnConfig& config, const SplitSpec& split) {
    return [config, split](const ModelBundle& bundle, const StepInput& in) {
        const std::size_t L = bundle.num_stages();
        const JointForward jf = joint_forward(bundle, in);
        const Tensor cu = cu_on(jf, jf.fwd.taps[L - 1], config.temperature);
        const Tensor ce = ce_loss_layer(jf.retain_rows(jf.fwd.logits), in.retain_y, split);
        StepLoss out = final_only(add(scale(cu, config.lambda_cu), scale(ce, config.lambda_ce)), L, ce.item());
        out.cu.back() = cu.item();
        return out;
    };
}

int random_label_for(const SplitSpec& split, std::uint64_t seed, std::size_t epoch, std::size_t index) {
    if (split.retain.empty()) throw PreconditionError("random_label: no retain classes");
    const std::uint64_t draw = derive_seed(derive_seed(seed, 0x524cULL + epoch), index);
    return split.retain[draw % split.retain.size()];
}

Objective random_label_objective(const SplitSpec& split, std::uint64_t seed) {
    return [split, seed](const ModelBundle& bundle, const StepInput& in) {
        std::vector<int> labels;
        for (std::size_t i = 0; i < in.forget_index.size(); ++i) {
            labels.push_back(random_label_for(split, seed, in.epoch, in.forget_index[i]));
        }
        labels.insert(labels.end(), in.retain_y.begin(), in.retain_y.end());
        const JointForward jf = joint_forward(bundle, in);
        const Tensor ce = softmax_cross_entropy(jf.fwd.logits, labels);
        return final_only(ce, bundle.num_stages(), ce.item());
    };
}

Objective gradient_ascent_objective(const SplitSpec& split) {
    return [split](const ModelBundle& bundle, const StepInput& in) {
        const JointForward jf = joint_forward(bundle, in);
        const Tensor forget_ce = softmax_cross_entropy(jf.forget_rows(jf.fwd.logits), in.forget_y);
        const Tensor retain_ce = ce_loss_layer(jf.retain_rows(jf.fwd.logits), in.retain_y, split);
        const Tensor total = sub(retain_ce, forget_ce);
        return final_only(total, bundle.num_stages(), retain_ce.item());
    };
}

Objective finetune_objective(const SplitSpec& split) {
    return [split](const ModelBundle& bundle, const StepInput& in) {
        const Tensor logits = forward_taps(bundle, in.retain_x).logits;
        const Tensor ce = ce_loss_layer(logits, in.retain_y, split);
        return final_only(ce, bundle.num_stages(), ce.item());
    };
}

Objective plugin_augment(Objective base, const UnlearnConfig& config, const SplitSpec& split) {
    return [base = std::move(base), config, split](const ModelBundle& bundle, const StepInput& in) {
        StepLoss out = base(bundle, in);
        const std::size_t L = bundle.num_stages();
        UnlearnConfig inner = config;
        inner.variant = config.variant == Variant::plus_final_blocks ? Variant::full : config.variant;
        auto layers = ec_layer_losses(bundle, in, inner, split);
        layers.resize(L - 1);
        const std::vector<double> weights(config.layer_weights.begin(), config.layer_weights.begin() + (L - 1));
        out.total = add(out.total, total_loss(layers, weights, config.lambda_cu, config.lambda_ce));
        out.cu.resize(L);
        out.ce.resize(L);
        for (std::size_t l = 0; l + 1 < L; ++l) {
            out.cu[l] = layers[l].cu ? std::optional<double>(layers[l].cu->item()) : std::nullopt;
            out.ce[l] = layers[l].ce ? std::optional<double>(layers[l].ce->item()) : std::nullopt;
        }
        return out;
    };
}

// ---------------------------------------------------------------------------
// Driver

UnlearnResult run_unlearning(ModelBundle bundle, const Dataset& forget, const Dataset& retain,
                             const UnlearnConfig& config, const Objective& objective, const std::string& method,
                             const StepObserver& observer) {
    config.validate(bundle.num_stages());
    if (forget.size() == 0 || retain.size() == 0) throw PreconditionError("unlearn: empty forget or retain set");
    for (auto& m : bundle.ec_modules()) m.aux_frozen = false;

    std::vector<Tensor> params;
    for (auto& p : bundle.parameters()) params.push_back(p.tensor);
    Optimizer opt(config.optimizer, params);
    const BatchPlan plan{config.forget_batch, config.retain_batch, config.omega, derive_seed(config.seed, "batches")};

    UnlearnResult result{std::move(bundle), {}};
    result.log.num_stages = result.bundle.num_stages();
    std::size_t global = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto steps = sample_batches(plan, forget.size(), retain.size(), epoch);
        for (std::size_t s = 0; s < steps.size(); ++s) {
            const auto& batch = steps[s];
            StepInput in{forget.batch(batch.forget), forget.batch_labels(batch.forget), retain.batch(batch.retain),
                         retain.batch_labels(batch.retain), batch.forget, epoch};
            opt.zero_grad();
            Tape tape;
            StepLoss loss;
            {
                Tape::Scope scope(tape);
                loss = objective(result.bundle, in);
            }
            if (loss.total.is_recorded()) tape.backward(loss.total);
            if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
            opt.step();
            result.log.rows.push_back(LossLogRow{epoch, s, loss.cu, loss.ce, loss.total.item()});
            if (observer) observer(global, result.bundle);
            ++global;
        }
    }
    result.bundle.metadata().provenance = "unlearned:" + method;
    return result;
}

// ---------------------------------------------------------------------------
// Methods

namespace {

std::string method_base_name(Method m) {
    switch (m) {
        case Method::ec: return "ec";
        case Method::cu: return "cu";
        case Method::rl: return "rl";
        case Method::ga: return "ga";
        case Method::finetune: return "finetune";
        case Method::plugin: return "plugin";
    }
    return "ec";
}

Objective base_objective(Method m, const UnlearnConfig& config, const SplitSpec& split) {
    switch (m) {
        case Method::ec: return ec_objective(config, split);
        case Method::cu: return cu_objective(config, split);
        case Method::rl: return random_label_objective(split, derive_seed(config.seed, "relabel"));
        case Method::ga: return gradient_ascent_objective(split);
        case Method::finetune: return finetune_objective(split);
        case Method::plugin: break;
    }
    throw PreconditionError("plugin base must be a plain method");
}

}  // namespace

std::string MethodSpec::name() const {
    if (method == Method::plugin) return "plugin:" + method_base_name(plugin_base.value_or(Method::cu));
    return method_base_name(method);
}

std::string valid_methods() { return "ec, cu, rl, ga, finetune, plugin:<cu|rl|ga|finetune>"; }

MethodSpec parse_method(const std::string& name) {
    const std::string prefix = "plugin:";
    if (name.rfind(prefix, 0) == 0) {
        const MethodSpec base = parse_method(name.substr(prefix.size()));
        if (base.method == Method::plugin || base.method == Method::ec) {
            throw PreconditionError("unknown method '" + name + "' (valid: " + valid_methods() + ")");
        }
        return MethodSpec{Method::plugin, base.method};
    }
    for (Method m : {Method::ec, Method::cu, Method::rl, Method::ga, Method::finetune}) {
        if (method_base_name(m) == name) return MethodSpec{m, std::nullopt};
    }
    throw PreconditionError("unknown method '" + name + "' (valid: " + valid_methods() + ")");
}

UnlearnResult unlearn(ModelBundle bundle, const Splits& splits, const SplitSpec& split, const MethodSpec& spec,
                      UnlearnConfig config, const StepObserver& observer) {
    Objective objective;
    const Method effective = spec.method == Method::plugin ? spec.plugin_base.value() : spec.method;
    if (effective == Method::ga && config.grad_clip == 0.0) config.grad_clip = kGradientAscentClip;
    if (spec.method == Method::plugin) {
        objective = plugin_augment(base_objective(effective, config, split), config, split);
    } else {
        objective = base_objective(spec.method, config, split);
    }
    return run_unlearning(std::move(bundle), splits.forget_train, splits.retain_train, config, objective, spec.name(),
                          observer);
}

}  // namespace ecu
