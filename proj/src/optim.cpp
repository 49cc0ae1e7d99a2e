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

#include "ecu/optim.hpp"

#include <cmath>
#include <string>

#include "ecu/error.hpp"

namespace ecu {

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
    if (!(config_.learning_rate >= 0.0)) throw PreconditionError("optimizer: learning rate must be non-negative");
    for (const auto& p : params_) {
        if (p.is_recorded()) throw PreconditionError("optimizer: parameters must be leaf tensors");
        first_.emplace_back(p.numel(), 0.0);
        if (config_.kind == OptimizerKind::adam) second_.emplace_back(p.numel(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto g = params_[i].grad();
        if (!g.empty() && g.size() != params_[i].numel()) {
            throw ShapeError("optimizer: gradient size mismatch for parameter " + std::to_string(i));
        }
        for (double v : g) {
            if (!std::isfinite(v)) throw NumericError("optimizer: non-finite gradient for parameter " + std::to_string(i));
        }
    }
    ++steps_;
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].mutable_values();
        const auto g = params_[i].grad();
        auto& m = first_[i];
        if (config_.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                double grad = g.empty() ? 0.0 : g[j];
                if (config_.weight_decay != 0.0) grad += config_.weight_decay * w[j];
                m[j] = config_.momentum * m[j] + grad;
                w[j] -= lr * m[j];
            }
        } else {
            auto& v = second_[i];
            const double t = static_cast<double>(steps_);
            const double c1 = 1.0 - std::pow(config_.beta1, t);
            const double c2 = 1.0 - std::pow(config_.beta2, t);
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double grad = g.empty() ? 0.0 : g[j];
                m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * grad;
                v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * grad * grad;
                const double mhat = m[j] / c1;
                const double vhat = v[j] / c2;
                if (config_.weight_decay != 0.0) w[j] -= lr * config_.weight_decay * w[j];
                w[j] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
            }
        }
    }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (const auto& p : params) {
            if (!p.has_grad()) continue;
            for (double& g : p.node()->grad) g *= factor;
        }
    }
    return norm;
}

}  // namespace ecu
