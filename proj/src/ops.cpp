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

#include "ecu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ecu/error.hpp"

namespace ecu {

using detail::Node;

Tensor make_result(Shape shape, std::vector<double> values) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
}

namespace {

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
}

// Records `out` when a tape is active and any input needs a gradient.
Tensor finish(const char* op, std::initializer_list<const Tensor*> inputs, Tensor out, Tape::Rule rule) {
    check_finite(op, out.node()->value);
    Tape* tape = Tape::active();
    if (tape == nullptr) return out;
    bool needs = false;
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
    if (!needs) return out;
    std::vector<std::shared_ptr<Node>> nodes;
    nodes.reserve(inputs.size());
    for (const Tensor* t : inputs) nodes.push_back(t->node());
    tape->record(op, std::move(nodes), out.node(), std::move(rule));
    return out;
}

void require_2d(const char* op, const Tensor& t) {
    if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_string(t.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    std::vector<double> out(a.numel());
    const auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    Node* an = a.node().get();
    Tensor result = make_result(a.shape(), std::move(out));
    return finish(op, {&a}, result, [an, deriv](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv(an->value[i], o.value[i]);
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    std::vector<double> out(n * m, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            const double* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
        }
    }
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish("matmul", {&a, &b}, make_result({n, m}, std::move(out)), [an, bn, n, k, m](const Node& o) {
        const double* go = o.grad.data();
        if (an->requires_grad) {
            auto& ga = an->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = bn->value.data() + p * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += go[i * m + j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = an->value[i * k + p];
                    double* gbrow = gb.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) gbrow[j] += s * go[i * m + j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish("add", {&a, &b}, make_result(a.shape(), std::move(out)), [an, bn](const Node& o) {
        for (Node* x : {an, bn}) {
            if (!x->requires_grad) continue;
            auto& g = x->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish("sub", {&a, &b}, make_result(a.shape(), std::move(out)), [an, bn](const Node& o) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    Node* an = a.node().get();
    Node* bn = b.node().get();
    return finish("mul", {&a, &b}, make_result(a.shape(), std::move(out)), [an, bn](const Node& o) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    Node* an = a.node().get();
    return finish("sum", {&a}, make_result({}, {total}), [an](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (double& x : g) x += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    double total = 0.0;
    for (double v : a.values()) total += v;
    const double n = static_cast<double>(a.numel());
    Node* an = a.node().get();
    return finish("mean", {&a}, make_result({}, {total / n}), [an, n](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (double& x : g) x += o.grad[0] / n;
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
    for (const auto& p : parts) require_2d("concat", p);
    const std::size_t other = 1 - axis;
    const std::size_t fixed = parts[0].shape()[other];
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.shape()[other] != fixed) throw ShapeError("concat: parts disagree on the non-concatenated extent");
        total += p.shape()[axis];
    }
    const std::size_t rows = axis == 0 ? total : fixed;
    const std::size_t cols = axis == 0 ? fixed : total;
    std::vector<double> out(rows * cols);
    std::vector<Node*> nodes;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t pr = p.rows(), pc = p.cols();
        for (std::size_t i = 0; i < pr; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
                const std::size_t r = axis == 0 ? offset + i : i;
                const std::size_t c = axis == 0 ? j : offset + j;
                out[r * cols + c] = p.values()[i * pc + j];
            }
        }
        offset += p.shape()[axis];
        nodes.push_back(p.node().get());
    }
    Tensor result = make_result({rows, cols}, std::move(out));
    check_finite("concat", result.node()->value);
    Tape* tape = Tape::active();
    bool needs = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
    if (tape == nullptr || !needs) return result;
    std::vector<std::shared_ptr<Node>> inputs;
    for (const auto& p : parts) inputs.push_back(p.node());
    tape->record("concat", std::move(inputs), result.node(), [nodes, axis, cols](const Node& o) {
        std::size_t offset = 0;
        for (Node* p : nodes) {
            const std::size_t pr = p->shape[0], pc = p->shape[1];
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < pr; ++i) {
                    for (std::size_t j = 0; j < pc; ++j) {
                        const std::size_t r = axis == 0 ? offset + i : i;
                        const std::size_t c = axis == 0 ? j : offset + j;
                        g[i * pc + j] += o.grad[r * cols + c];
                    }
                }
            }
            offset += p->shape[axis];
        }
    });
    return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    require_2d("slice", a);
    if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
    if (begin >= end || end > a.shape()[axis]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
    }
    const std::size_t in_cols = a.cols();
    const std::size_t rows = axis == 0 ? end - begin : a.rows();
    const std::size_t cols = axis == 0 ? in_cols : end - begin;
    const std::size_t r0 = axis == 0 ? begin : 0;
    const std::size_t c0 = axis == 0 ? 0 : begin;
    std::vector<double> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.values()[(r0 + i) * in_cols + c0 + j];
    }
    Node* an = a.node().get();
    return finish("slice", {&a}, make_result({rows, cols}, std::move(out)),
                  [an, rows, cols, r0, c0, in_cols](const Node& o) {
                      if (!an->requires_grad) return;
                      auto& g = an->ensure_grad();
                      for (std::size_t i = 0; i < rows; ++i) {
                          for (std::size_t j = 0; j < cols; ++j) g[(r0 + i) * in_cols + c0 + j] += o.grad[i * cols + j];
                      }
                  });
}

Tensor transpose(const Tensor& a) {
    require_2d("transpose", a);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.values()[i * m + j];
    }
    Node* an = a.node().get();
    return finish("transpose", {&a}, make_result({m, n}, std::move(out)), [an, n, m](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) g[i * m + j] += o.grad[j * n + i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    Node* an = a.node().get();
    return finish("reshape", {&a}, make_result(std::move(shape), std::move(out)), [an](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor expand_rows(const Tensor& a, std::size_t rows) {
    std::size_t d = 0;
    if (a.ndim() == 1) {
        d = a.shape()[0];
    } else if (a.ndim() == 2 && a.shape()[0] == 1) {
        d = a.shape()[1];
    } else {
        throw ShapeError("expand_rows: expected [d] or [1 x d], got " + shape_string(a.shape()));
    }
    std::vector<double> out(rows * d);
    for (std::size_t i = 0; i < rows; ++i) std::copy(a.values().begin(), a.values().end(), out.begin() + i * d);
    Node* an = a.node().get();
    return finish("expand_rows", {&a}, make_result({rows, d}, std::move(out)), [an, rows, d](const Node& o) {
        if (!an->requires_grad) return;
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
        }
    });
}

Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps) {
    std::size_t outer = 0, inner = 0, stride_outer = 0, stride_inner = 0;
    if (a.ndim() == 1 && axis == 0) {
        outer = 1, inner = a.numel(), stride_outer = 0, stride_inner = 1;
    } else if (a.ndim() == 2 && axis == 1) {
        outer = a.rows(), inner = a.cols(), stride_outer = a.cols(), stride_inner = 1;
    } else if (a.ndim() == 2 && axis == 0) {
        outer = a.cols(), inner = a.rows(), stride_outer = 1, stride_inner = a.cols();
    } else {
        throw ShapeError("l2_normalize: unsupported axis " + std::to_string(axis) + " for " + shape_string(a.shape()));
    }
    std::vector<double> out(a.numel());
    std::vector<double> norms(outer);
    const auto in = a.values();
    for (std::size_t s = 0; s < outer; ++s) {
        double sq = 0.0;
        for (std::size_t t = 0; t < inner; ++t) {
            const double v = in[s * stride_outer + t * stride_inner];
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0) && eps <= 0.0) throw PreconditionError("l2_normalize: zero-norm slice " + std::to_string(s));
        // Below the floor the map is the linear x / eps; a negative entry marks it.
        norms[s] = norm >= eps ? norm : -eps;
        for (std::size_t t = 0; t < inner; ++t) {
            const std::size_t idx = s * stride_outer + t * stride_inner;
            out[idx] = in[idx] / std::abs(norms[s]);
        }
    }
    Node* an = a.node().get();
    return finish("l2_normalize", {&a}, make_result(a.shape(), std::move(out)),
                  [an, norms, outer, inner, stride_outer, stride_inner](const Node& o) {
                      if (!an->requires_grad) return;
                      auto& g = an->ensure_grad();
                      for (std::size_t s = 0; s < outer; ++s) {
                          if (norms[s] < 0.0) {
                              for (std::size_t t = 0; t < inner; ++t) {
                                  const std::size_t idx = s * stride_outer + t * stride_inner;
                                  g[idx] += o.grad[idx] / -norms[s];
                              }
                              continue;
                          }
                          double dot = 0.0;
                          for (std::size_t t = 0; t < inner; ++t) {
                              const std::size_t idx = s * stride_outer + t * stride_inner;
                              dot += o.value[idx] * o.grad[idx];
                          }
                          for (std::size_t t = 0; t < inner; ++t) {
                              const std::size_t idx = s * stride_outer + t * stride_inner;
                              g[idx] += (o.grad[idx] - o.value[idx] * dot) / norms[s];
                          }
                      }
                  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_2d("softmax_cross_entropy", logits);
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    }
    if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    std::vector<double> probs(n * c);
    double total = 0.0;
    const auto in = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw PreconditionError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(c) + ")");
        }
        const double* row = in.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx) / z;
        total += -(row[y] - mx - std::log(z));
    }
    Node* ln = logits.node().get();
    std::vector<int> ys(labels.begin(), labels.end());
    return finish("softmax_cross_entropy", {&logits}, make_result({}, {total / static_cast<double>(n)}),
                  [ln, probs = std::move(probs), ys = std::move(ys), n, c](const Node& o) {
                      if (!ln->requires_grad) return;
                      auto& g = ln->ensure_grad();
                      const double s = o.grad[0] / static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                              const double target = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                              g[i * c + j] += s * (probs[i * c + j] - target);
                          }
                      }
                  });
}

Tensor masked_row_logsumexp(const Tensor& a, std::span<const unsigned char> mask) {
    require_2d("masked_row_logsumexp", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (mask.size() != n * m) throw ShapeError("masked_row_logsumexp: mask size does not match input");
    std::vector<double> out(n);
    const auto in = a.values();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            if (mask[i * m + j]) mx = std::max(mx, in[i * m + j]);
        }
        if (!std::isfinite(mx)) {
            throw PreconditionError("masked_row_logsumexp: row " + std::to_string(i) + " has no unmasked entry");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (mask[i * m + j]) z += std::exp(in[i * m + j] - mx);
        }
        out[i] = mx + std::log(z);
    }
    Node* an = a.node().get();
    std::vector<unsigned char> keep(mask.begin(), mask.end());
    return finish("masked_row_logsumexp", {&a}, make_result({n, 1}, std::move(out)),
                  [an, keep = std::move(keep), n, m](const Node& o) {
                      if (!an->requires_grad) return;
                      auto& g = an->ensure_grad();
                      for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t j = 0; j < m; ++j) {
                              if (keep[i * m + j]) g[i * m + j] += o.grad[i] * std::exp(an->value[i * m + j] - o.value[i]);
                          }
                      }
                  });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add(matmul(x, weight), expand_rows(bias, x.rows()));
}

}  // namespace ecu
