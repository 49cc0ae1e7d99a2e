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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "ecu/error.hpp"
#include "ecu/grad_check.hpp"
#include "ecu/ops.hpp"
#include "ecu/optim.hpp"
#include "ecu/tensor.hpp"

using namespace ecu;

namespace {

// Runs f on a grad-flagged copy of x and returns d f / d x.
std::vector<double> gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    Tensor p = x.clone();
    p.set_requires_grad(true);
    Tape tape;
    Tensor y;
    {
        Tape::Scope scope(tape);
        y = f(p);
    }
    tape.backward(y);
    if (!p.has_grad()) return std::vector<double>(p.numel(), 0.0);
    return {p.grad().begin(), p.grad().end()};
}

}  // namespace

TEST_CASE("matmul and affine match hand-computed values") {
    const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    const Tensor b = Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12});
    const Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.at(0, 0) == 58);
    CHECK(c.at(0, 1) == 64);
    CHECK(c.at(1, 0) == 139);
    CHECK(c.at(1, 1) == 154);

    const Tensor bias = Tensor::matrix(1, 2, {0.5, -1});
    const Tensor y = affine(a, b, bias);
    CHECK(y.at(1, 1) == doctest::Approx(153));
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("gradients of elementwise ops") {
    const Tensor x = Tensor::matrix(1, 3, {-1.0, 0.5, 2.0});
    const auto g_relu = gradient([](const Tensor& t) { return sum(relu(t)); }, x);
    CHECK(g_relu == std::vector<double>{0.0, 1.0, 1.0});

    const auto g_sq = gradient([](const Tensor& t) { return sum(mul(t, t)); }, x);
    CHECK(g_sq[0] == doctest::Approx(-2.0));
    CHECK(g_sq[2] == doctest::Approx(4.0));

    const auto g_mean = gradient([](const Tensor& t) { return mean(scale(t, 3.0)); }, x);
    for (double g : g_mean) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("softmax cross-entropy oracle") {
    const Tensor logits = Tensor::matrix(2, 2, {0, 0, 3, 1});
    const std::vector<int> labels{0, 1};
    const double expected = 0.5 * (std::log(2.0) + (std::log(std::exp(3.0) + std::exp(1.0)) - 1.0));
    CHECK(softmax_cross_entropy(logits, labels).item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(grad_check([&](const Tensor& t) { return softmax_cross_entropy(t, labels); }, logits) < 1e-7);
}

TEST_CASE("l2_normalize projects rows to the unit sphere") {
    const Tensor x = Tensor::matrix(2, 2, {3, 4, -1, 0});
    const Tensor z = l2_normalize(x, 1);
    CHECK(z.at(0, 0) == doctest::Approx(0.6));
    CHECK(z.at(0, 1) == doctest::Approx(0.8));
    CHECK(z.at(1, 0) == doctest::Approx(-1.0));
    CHECK(grad_check([](const Tensor& t) { return sum(mul(l2_normalize(t, 1), Tensor::matrix(2, 2, {1, 2, 3, 4}))); },
                     x) < 1e-7);
}

TEST_CASE("l2_normalize zero rows: strict mode throws, floored mode is linear") {
    const Tensor x = Tensor::matrix(2, 2, {0, 0, 1, 1});
    CHECK_THROWS_AS(l2_normalize(x, 1), PreconditionError);

    constexpr double eps = 1e-3;
    const Tensor z = l2_normalize(x, 1, eps);
    CHECK(z.at(0, 0) == 0.0);
    CHECK(z.at(0, 1) == 0.0);
    CHECK(z.at(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));

    const Tensor w = Tensor::matrix(2, 2, {2, -1, 0, 0});
    const auto g = gradient([&](const Tensor& t) { return sum(mul(l2_normalize(t, 1, eps), w)); }, x);
    CHECK(g[0] == doctest::Approx(2.0 / eps));
    CHECK(g[1] == doctest::Approx(-1.0 / eps));
}

TEST_CASE("non-finite results are rejected") {
    CHECK_THROWS_AS(log(Tensor::matrix(1, 1, {0.0})), NumericError);
    CHECK_THROWS_AS(exp(Tensor::matrix(1, 1, {1e6})), NumericError);
}

TEST_CASE("slice, concat and transpose route gradients") {
    const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    const auto g = gradient(
        [](const Tensor& t) {
            const Tensor parts[] = {slice(t, 1, 0, 1), slice(t, 1, 2, 3)};
            return sum(mul(transpose(concat(parts, 1)), Tensor::matrix(2, 2, {1, 2, 3, 4})));
        },
        x);
    CHECK(g == std::vector<double>{1, 0, 3, 2, 0, 4});
}

TEST_CASE("masked logsumexp ignores masked entries") {
    const Tensor a = Tensor::matrix(1, 3, {1, 100, 2});
    const std::vector<unsigned char> mask{1, 0, 1};
    CHECK(masked_row_logsumexp(a, mask).item() == doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0))));
}

TEST_CASE("backward is deterministic") {
    const Tensor x = Tensor::matrix(3, 3, {0.1, -0.4, 0.7, 1.2, -0.3, 0.5, 0.0, 0.9, -1.1});
    auto f = [](const Tensor& t) { return mean(exp(matmul(l2_normalize(t, 1), transpose(t)))); };
    CHECK(gradient(f, x) == gradient(f, x));
}

TEST_CASE("adam treats a missing gradient as zero") {
    Tensor moved({1, 2}, {1.0, 2.0}, true);
    Tensor idle({1, 2}, {3.0, 4.0}, true);
    Optimizer opt({OptimizerKind::adam, 0.1}, {moved, idle});
    {
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            loss = sum(moved);
        }
        tape.backward(loss);
    }
    opt.step();
    // First Adam step moves by lr * sign(g).
    CHECK(moved.values()[0] == doctest::Approx(0.9));
    CHECK(idle.values()[0] == 3.0);
    CHECK(idle.values()[1] == 4.0);
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("grad_check flags a wrong gradient") {
    // relu has a kink at zero; a point on it makes finite differences disagree.
    const Tensor x = Tensor::matrix(1, 1, {0.0});
    CHECK(grad_check([](const Tensor& t) { return sum(relu(t)); }, x) > 0.4);
}
