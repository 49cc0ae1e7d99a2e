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

#ifndef ECU_TENSOR_HPP
#define ECU_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecu {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    Tape* tape = nullptr;  // set when the node is the output of a recorded op
    std::size_t tape_index = 0;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major array of doubles. Copies share storage; use `clone()`
/// for an independent leaf.
class Tensor {
  public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const { return node_->value; }
    /// Direct write access. Only valid on leaves (parameters, inputs).
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag);
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }
    bool is_recorded() const { return node_->tape != nullptr; }

    /// Independent leaf copy with the same requires_grad flag.
    Tensor clone() const;
    /// Constant copy (no gradient flag, no tape).
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend class Tape;
    friend Tensor make_result(Shape, std::vector<double>);

    std::shared_ptr<detail::Node> node_;
};

/// Define-by-run differentiation tape. Operations are recorded on the tape
/// that is active on the calling thread (see `Tape::Scope`) whenever any of
/// their inputs requires a gradient.
class Tape {
  public:
    using Rule = std::function<void(const detail::Node& out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    /// Makes `tape` the active tape of this thread for the scope's lifetime.
    class Scope {
      public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Tape* previous_;
    };

    static Tape* active();

    void record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
                const std::shared_ptr<detail::Node>& output, Rule rule);

    /// Propagates d(loss)/d(.) to every reachable grad-flagged node, then
    /// clears the tape.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    void clear();

  private:
    struct Entry {
        const char* op;
        std::vector<std::shared_ptr<detail::Node>> inputs;
        std::shared_ptr<detail::Node> output;
        Rule rule;
    };
    std::vector<Entry> entries_;
};

/// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

}  // namespace ecu

#endif  // ECU_TENSOR_HPP
