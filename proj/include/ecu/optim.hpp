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

#ifndef ECU_OPTIM_HPP
#define ECU_OPTIM_HPP

#include <cstddef>
#include <vector>

#include "ecu/tensor.hpp"

namespace ecu {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;  // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW-style) for adam, L2 for sgd
};

/// Updates a fixed list of leaf tensors in place from their accumulated
/// gradients. A parameter without a gradient is treated as having a zero one.
class Optimizer {
  public:
    Optimizer(OptimizerConfig config, std::vector<Tensor> params);

    void step();
    void zero_grad();

    const OptimizerConfig& config() const { return config_; }
    std::size_t steps_taken() const { return steps_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    OptimizerConfig config_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_;   // momentum / Adam m
    std::vector<std::vector<double>> second_;  // Adam v
    std::size_t steps_ = 0;
};

/// Rescales gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace ecu

#endif  // ECU_OPTIM_HPP
