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

#include "ecu/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ecu/error.hpp"

namespace ecu {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
    node_->shape = {0};
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("tensor: non-finite input value");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> values(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) throw ShapeError("rows(): tensor is not 2-D " + shape_string(shape()));
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) throw ShapeError("cols(): tensor is not 2-D " + shape_string(shape()));
    return shape()[1];
}

std::span<double> Tensor::mutable_values() {
    if (node_->tape != nullptr) throw PreconditionError("mutable_values(): tensor is a recorded op output");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

Tensor Tensor::clone() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    node->requires_grad = node_->requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::~Tape() { clear(); }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
                  const std::shared_ptr<detail::Node>& output, Rule rule) {
    output->requires_grad = true;
    output->tape = this;
    output->tape_index = entries_.size();
    entries_.push_back(Entry{op, std::move(inputs), output, std::move(rule)});
}

void Tape::clear() {
    for (auto& entry : entries_) {
        entry.output->tape = nullptr;
    }
    entries_.clear();
}

void Tape::backward(const Tensor& loss) {
    const auto& root = loss.node();
    if (root->value.size() != 1) {
        throw ShapeError("backward(): loss must be scalar, got " + shape_string(root->shape));
    }
    if (root->tape != this) throw PreconditionError("backward(): loss was not recorded on this tape");

    root->ensure_grad()[0] += 1.0;
    for (std::size_t i = root->tape_index + 1; i-- > 0;) {
        Entry& entry = entries_[i];
        if (entry.output->grad.empty()) continue;
        entry.rule(*entry.output);
        for (const auto& input : entry.inputs) {
            for (double g : input->grad) {
                if (!std::isfinite(g)) {
                    throw NumericError(std::string("backward(): non-finite gradient from op '") + entry.op + "'");
                }
            }
        }
    }
    clear();
}

void backward(const Tensor& loss) {
    Tape* tape = loss.node()->tape;
    if (tape == nullptr) throw PreconditionError("backward(): loss is detached (no recorded operations)");
    tape->backward(loss);
}

}  // namespace ecu
