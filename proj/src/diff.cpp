// Copyright 2026 The MultiVul Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "multivul/diff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "multivul/errors.hpp"

namespace multivul::diff {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

[[noreturn]] void shape_error(Primitive kind, const Tensor& a,
                              const Tensor& b) {
  throw ContractError(std::string(primitive_name(kind)) +
                      ": shape mismatch " + a.shape_string() + " vs " +
                      b.shape_string());
}

void require_matrix(Primitive kind, const Tensor& a) {
  if (a.rank() != 2) {
    throw ContractError(std::string(primitive_name(kind)) +
                        ": expected a matrix, got shape " + a.shape_string());
  }
}

std::size_t expected_arity(Primitive kind) {
  switch (kind) {
    case Primitive::kMatmul:
    case Primitive::kAdd:
    case Primitive::kSubtract:
    case Primitive::kMultiply:
    case Primitive::kRowSquaredDistance:
      return 2;
    case Primitive::kConcatRows:
    case Primitive::kLeaf:
      return 0;  // variadic / none
    default:
      return 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : shape_{1}, values_{0.0} {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw ContractError("tensor: empty shape");
  for (std::size_t d : shape_) {
    if (d == 0) throw ContractError("tensor: zero-sized dimension");
  }
  if (product(shape_) != values_.size()) {
    throw ContractError("tensor: shape " + shape_string() + " needs " +
                        std::to_string(product(shape_)) + " values, got " +
                        std::to_string(values_.size()));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return filled(std::move(shape), 0.0);
}

Tensor Tensor::filled(std::vector<std::size_t> shape, double value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

std::size_t Tensor::rows() const noexcept {
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  return shape_.size() == 1 ? shape_[0] : values_.size() / shape_[0];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("tensor: item() on shape " + shape_string());
  }
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << 'x';
    out << shape_[i];
  }
  out << ']';
  return out.str();
}

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Tensor::zeros(value.shape())) {}

void Parameter::zero_grad() {
  auto g = grad.mutable_values();
  std::fill(g.begin(), g.end(), 0.0);
}

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSubtract: return "subtract";
    case Primitive::kMultiply: return "elementwise-multiply";
    case Primitive::kScale: return "scale-by-constant";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kRowSoftmax: return "row-softmax";
    case Primitive::kRowLogSumExp: return "row-log-sum-exp";
    case Primitive::kRowL2Normalize: return "row-l2-normalize";
    case Primitive::kMeanAll: return "mean-all";
    case Primitive::kSumAll: return "sum-all";
    case Primitive::kRowSquaredDistance: return "squared-l2-distance-rowwise";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kGelu: return "gelu";
    case Primitive::kEmbeddingLookup: return "embedding-lookup";
    case Primitive::kMeanPoolRows: return "mean-pool-rows";
    case Primitive::kConcatRows: return "concat-rows";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape

NodeId Tape::constant(Tensor value) {
  if (!value.all_finite()) throw ContractError("constant: non-finite value");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::parameter(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return it->second;
  if (!param.value.all_finite()) {
    throw ContractError("parameter " + param.name + ": non-finite value");
  }
  Node node;
  node.value = param.value;
  node.param = &param;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  bound_.emplace(&param, nodes_.size() - 1);
  return nodes_.size() - 1;
}

const Tensor& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw ContractError("tape: unknown node id");
  return nodes_[id].value;
}

NodeId Tape::apply(Primitive kind, std::span<const NodeId> inputs,
                   Attributes attrs) {
  if (kind == Primitive::kLeaf) {
    throw ContractError("apply: leaves are created by constant()/parameter()");
  }
  const std::size_t arity = expected_arity(kind);
  if (kind == Primitive::kConcatRows ? inputs.empty()
                                     : inputs.size() != arity) {
    throw ContractError(std::string(primitive_name(kind)) +
                        ": wrong number of inputs");
  }
  bool requires_grad = false;
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) {
      throw ContractError(std::string(primitive_name(kind)) +
                          ": input id does not precede node");
    }
    requires_grad = requires_grad || nodes_[in].requires_grad;
  }
  Tensor out = forward(kind, inputs, attrs);
  if (!out.all_finite()) {
    throw ContractError(std::string(primitive_name(kind)) +
                        ": non-finite result");
  }
  Node node;
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  node.attrs = std::move(attrs);
  node.value = std::move(out);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tensor Tape::forward(Primitive kind, std::span<const NodeId> inputs,
                     const Attributes& attrs) const {
  const Tensor& a = nodes_[inputs[0]].value;
  auto unary = [&](auto fn) {
    std::vector<double> out(a.size());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
    return Tensor(a.shape(), std::move(out));
  };
  auto binary = [&](auto fn) {
    const Tensor& b = nodes_[inputs[1]].value;
    if (a.shape() != b.shape()) shape_error(kind, a, b);
    std::vector<double> out(a.size());
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[i]);
    return Tensor(a.shape(), std::move(out));
  };

  switch (kind) {
    case Primitive::kMatmul: {
      const Tensor& b = nodes_[inputs[1]].value;
      require_matrix(kind, a);
      require_matrix(kind, b);
      if (a.cols() != b.rows()) shape_error(kind, a, b);
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      std::vector<double> out(n * m, 0.0);
      const double* pa = a.values().data();
      const double* pb = b.values().data();
      for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa[i * k + p];
          const double* brow = pb + p * m;
          for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
        }
      }
      return Tensor::matrix(n, m, std::move(out));
    }
    case Primitive::kAdd:
      return binary([](double x, double y) { return x + y; });
    case Primitive::kSubtract:
      return binary([](double x, double y) { return x - y; });
    case Primitive::kMultiply:
      return binary([](double x, double y) { return x * y; });
    case Primitive::kScale: {
      const double f = attrs.scale;
      return unary([f](double x) { return x * f; });
    }
    case Primitive::kExp:
      return unary([](double x) { return std::exp(x); });
    case Primitive::kLog:
      return unary([](double x) { return std::log(x); });
    case Primitive::kSigmoid:
      return unary([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    case Primitive::kGelu:
      return unary(
          [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
    case Primitive::kTranspose: {
      require_matrix(kind, a);
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> out(n * m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a(i, j);
      return Tensor::matrix(m, n, std::move(out));
    }
    case Primitive::kRowSoftmax:
    case Primitive::kRowLogSumExp: {
      require_matrix(kind, a);
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> soft(n * m);
      std::vector<double> lse(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = a.values().data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          soft[i * m + j] = std::exp(row[j] - mx);
          sum += soft[i * m + j];
        }
        for (std::size_t j = 0; j < m; ++j) soft[i * m + j] /= sum;
        lse[i] = mx + std::log(sum);
      }
      if (kind == Primitive::kRowSoftmax) {
        return Tensor::matrix(n, m, std::move(soft));
      }
      return Tensor::matrix(n, 1, std::move(lse));
    }
    case Primitive::kRowL2Normalize: {
      require_matrix(kind, a);
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> out(n * m);
      for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < m; ++j) sq += a(i, j) * a(i, j);
        if (sq == 0.0) {
          throw ContractError("row-l2-normalize: degenerate embedding (row " +
                              std::to_string(i) + " is zero)");
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a(i, j) * inv;
      }
      return Tensor::matrix(n, m, std::move(out));
    }
    case Primitive::kMeanAll:
    case Primitive::kSumAll: {
      double sum = 0.0;
      for (double v : a.values()) sum += v;
      if (kind == Primitive::kMeanAll) sum /= static_cast<double>(a.size());
      return Tensor::scalar(sum);
    }
    case Primitive::kRowSquaredDistance: {
      const Tensor& b = nodes_[inputs[1]].value;
      require_matrix(kind, a);
      if (a.shape() != b.shape()) shape_error(kind, a, b);
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> out(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double d = a(i, j) - b(i, j);
          out[i] += d * d;
        }
      return Tensor::matrix(n, 1, std::move(out));
    }
    case Primitive::kEmbeddingLookup: {
      require_matrix(kind, a);
      if (attrs.indices.empty()) {
        throw ContractError("embedding-lookup: empty index list");
      }
      const std::size_t m = a.cols();
      std::vector<double> out(attrs.indices.size() * m);
      for (std::size_t r = 0; r < attrs.indices.size(); ++r) {
        const std::size_t id = attrs.indices[r];
        if (id >= a.rows()) {
          throw ContractError("embedding-lookup: id " + std::to_string(id) +
                              " out of range for table " + a.shape_string());
        }
        std::copy_n(a.values().data() + id * m, m, out.data() + r * m);
      }
      return Tensor::matrix(attrs.indices.size(), m, std::move(out));
    }
    case Primitive::kMeanPoolRows: {
      require_matrix(kind, a);
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> out(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j] += a(i, j);
      for (double& v : out) v /= static_cast<double>(n);
      return Tensor::matrix(1, m, std::move(out));
    }
    case Primitive::kConcatRows: {
      require_matrix(kind, a);
      const std::size_t m = a.cols();
      std::size_t total = 0;
      for (NodeId id : inputs) {
        const Tensor& part = nodes_[id].value;
        require_matrix(kind, part);
        if (part.cols() != m) shape_error(kind, a, part);
        total += part.rows();
      }
      std::vector<double> out;
      out.reserve(total * m);
      for (NodeId id : inputs) {
        auto v = nodes_[id].value.values();
        out.insert(out.end(), v.begin(), v.end());
      }
      return Tensor::matrix(total, m, std::move(out));
    }
    case Primitive::kLeaf:
      break;
  }
  throw ContractError("apply: unsupported primitive");
}

void Tape::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw ContractError("backward: unknown node id");
  if (nodes_[loss].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss].value.shape_string());
  }
  std::vector<std::vector<double>> grads(loss + 1);
  grads[loss] = {1.0};
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (grads[id].empty() || !node.requires_grad) continue;
    if (node.kind == Primitive::kLeaf) {
      if (node.param != nullptr) {
        auto g = node.param->grad.mutable_values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grads[id][i];
      }
    } else {
      propagate(node, grads[id], grads);
    }
    grads[id].clear();
    grads[id].shrink_to_fit();
  }
}

void Tape::propagate(const Node& node, const std::vector<double>& up,
                     std::vector<std::vector<double>>& grads) const {
  auto sink = [&](std::size_t slot) -> double* {
    const NodeId in = node.inputs[slot];
    if (!nodes_[in].requires_grad) return nullptr;
    auto& g = grads[in];
    if (g.empty()) g.assign(nodes_[in].value.size(), 0.0);
    return g.data();
  };
  const Tensor& y = node.value;
  const Tensor& a = nodes_[node.inputs[0]].value;

  switch (node.kind) {
    case Primitive::kMatmul: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      const double* pa = a.values().data();
      const double* pb = b.values().data();
      if (double* ga = sink(0)) {
        // ga += up * b^T, with b^T materialized so the inner loop is an axpy.
        std::vector<double> bt(k * m);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < m; ++j) bt[j * k + p] = pb[p * m + j];
        for (std::size_t i = 0; i < n; ++i) {
          double* grow = ga + i * k;
          for (std::size_t j = 0; j < m; ++j) {
            const double u = up[i * m + j];
            const double* trow = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) grow[p] += u * trow[p];
          }
        }
      }
      if (double* gb = sink(1)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double s = pa[i * k + p];
            const double* urow = up.data() + i * m;
            double* grow = gb + p * m;
            for (std::size_t j = 0; j < m; ++j) grow[j] += s * urow[j];
          }
      }
      return;
    }
    case Primitive::kAdd:
    case Primitive::kSubtract: {
      const double sign = node.kind == Primitive::kAdd ? 1.0 : -1.0;
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i];
      if (double* gb = sink(1))
        for (std::size_t i = 0; i < up.size(); ++i) gb[i] += sign * up[i];
      return;
    }
    case Primitive::kMultiply: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i)
          ga[i] += up[i] * b.values()[i];
      if (double* gb = sink(1))
        for (std::size_t i = 0; i < up.size(); ++i)
          gb[i] += up[i] * a.values()[i];
      return;
    }
    case Primitive::kScale: {
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i)
          ga[i] += up[i] * node.attrs.scale;
      return;
    }
    case Primitive::kExp: {
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i)
          ga[i] += up[i] * y.values()[i];
      return;
    }
    case Primitive::kLog: {
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i)
          ga[i] += up[i] / a.values()[i];
      return;
    }
    case Primitive::kSigmoid: {
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i) {
          const double s = y.values()[i];
          ga[i] += up[i] * s * (1.0 - s);
        }
      return;
    }
    case Primitive::kGelu: {
      if (double* ga = sink(0))
        for (std::size_t i = 0; i < up.size(); ++i) {
          const double x = a.values()[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          ga[i] += up[i] * (cdf + x * pdf);
        }
      return;
    }
    case Primitive::kTranspose: {
      if (double* ga = sink(0)) {
        const std::size_t n = a.rows(), m = a.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += up[j * n + i];
      }
      return;
    }
    case Primitive::kRowSoftmax: {
      if (double* ga = sink(0)) {
        const std::size_t n = y.rows(), m = y.cols();
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += up[i * m + j] * y(i, j);
          for (std::size_t j = 0; j < m; ++j)
            ga[i * m + j] += y(i, j) * (up[i * m + j] - dot);
        }
      }
      return;
    }
    case Primitive::kRowLogSumExp: {
      if (double* ga = sink(0)) {
        const std::size_t n = a.rows(), m = a.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            ga[i * m + j] += up[i] * std::exp(a(i, j) - y(i, 0));
      }
      return;
    }
    case Primitive::kRowL2Normalize: {
      if (double* ga = sink(0)) {
        const std::size_t n = a.rows(), m = a.cols();
        for (std::size_t i = 0; i < n; ++i) {
          double sq = 0.0, dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            sq += a(i, j) * a(i, j);
            dot += y(i, j) * up[i * m + j];
          }
          const double inv = 1.0 / std::sqrt(sq);
          for (std::size_t j = 0; j < m; ++j)
            ga[i * m + j] += (up[i * m + j] - y(i, j) * dot) * inv;
        }
      }
      return;
    }
    case Primitive::kMeanAll:
    case Primitive::kSumAll: {
      if (double* ga = sink(0)) {
        double g = up[0];
        if (node.kind == Primitive::kMeanAll) g /= static_cast<double>(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
      }
      return;
    }
    case Primitive::kRowSquaredDistance: {
      const Tensor& b = nodes_[node.inputs[1]].value;
      const std::size_t n = a.rows(), m = a.cols();
      double* ga = sink(0);
      double* gb = sink(1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double d = 2.0 * up[i] * (a(i, j) - b(i, j));
          if (ga) ga[i * m + j] += d;
          if (gb) gb[i * m + j] -= d;
        }
      return;
    }
    case Primitive::kEmbeddingLookup: {
      if (double* ga = sink(0)) {
        const std::size_t m = a.cols();
        for (std::size_t r = 0; r < node.attrs.indices.size(); ++r) {
          double* dst = ga + node.attrs.indices[r] * m;
          const double* src = up.data() + r * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
        }
      }
      return;
    }
    case Primitive::kMeanPoolRows: {
      if (double* ga = sink(0)) {
        const std::size_t n = a.rows(), m = a.cols();
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += up[j] * inv;
      }
      return;
    }
    case Primitive::kConcatRows: {
      std::size_t offset = 0;
      for (std::size_t slot = 0; slot < node.inputs.size(); ++slot) {
        const std::size_t len = nodes_[node.inputs[slot]].value.size();
        if (double* g = sink(slot))
          for (std::size_t i = 0; i < len; ++i) g[i] += up[offset + i];
        offset += len;
      }
      return;
    }
    case Primitive::kLeaf:
      return;
  }
}

// ---------------------------------------------------------------------------
// Var helpers

Var constant(Tape& tape, Tensor value) {
  return Var(tape, tape.constant(std::move(value)));
}

Var bind(Tape& tape, Parameter& param) {
  return Var(tape, tape.parameter(param));
}

namespace {

Var apply1(Primitive kind, Var a, Attributes attrs = {}) {
  const NodeId in[] = {a.id()};
  return Var(a.tape(), a.tape().apply(kind, in, std::move(attrs)));
}

Var apply2(Primitive kind, Var a, Var b) {
  if (&a.tape() != &b.tape()) {
    throw ContractError(std::string(primitive_name(kind)) +
                        ": operands live on different tapes");
  }
  const NodeId in[] = {a.id(), b.id()};
  return Var(a.tape(), a.tape().apply(kind, in));
}

}  // namespace

Var matmul(Var a, Var b) { return apply2(Primitive::kMatmul, a, b); }
Var operator+(Var a, Var b) { return apply2(Primitive::kAdd, a, b); }
Var operator-(Var a, Var b) { return apply2(Primitive::kSubtract, a, b); }
Var hadamard(Var a, Var b) { return apply2(Primitive::kMultiply, a, b); }
Var scale(Var a, double factor) {
  Attributes attrs;
  attrs.scale = factor;
  return apply1(Primitive::kScale, a, std::move(attrs));
}
Var exp(Var a) { return apply1(Primitive::kExp, a); }
Var log(Var a) { return apply1(Primitive::kLog, a); }
Var transpose(Var a) { return apply1(Primitive::kTranspose, a); }
Var row_softmax(Var a) { return apply1(Primitive::kRowSoftmax, a); }
Var row_log_sum_exp(Var a) { return apply1(Primitive::kRowLogSumExp, a); }
Var row_l2_normalize(Var a) { return apply1(Primitive::kRowL2Normalize, a); }
Var mean_all(Var a) { return apply1(Primitive::kMeanAll, a); }
Var sum_all(Var a) { return apply1(Primitive::kSumAll, a); }
Var row_squared_distance(Var a, Var b) {
  return apply2(Primitive::kRowSquaredDistance, a, b);
}
Var sigmoid(Var a) { return apply1(Primitive::kSigmoid, a); }
Var gelu(Var a) { return apply1(Primitive::kGelu, a); }
Var embedding_lookup(Var table, std::vector<std::size_t> ids) {
  Attributes attrs;
  attrs.indices = std::move(ids);
  return apply1(Primitive::kEmbeddingLookup, table, std::move(attrs));
}
Var mean_pool_rows(Var a) { return apply1(Primitive::kMeanPoolRows, a); }
Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat-rows: no inputs");
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    if (&p.tape() != &parts.front().tape()) {
      throw ContractError("concat-rows: operands live on different tapes");
    }
    ids.push_back(p.id());
  }
  Tape& tape = parts.front().tape();
  return Var(tape, tape.apply(Primitive::kConcatRows, ids));
}

// ---------------------------------------------------------------------------

double grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                  double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  auto evaluate = [&]() {
    Tape tape;
    const double v = loss(tape).value().item();
    if (!std::isfinite(v)) {
      throw ContractError("grad_check: non-finite function value");
    }
    return v;
  };

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    if (!std::isfinite(out.value().item())) {
      throw ContractError("grad_check: non-finite function value");
    }
    tape.backward(out.id());
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    auto values = p->value.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate();
      values[i] = saved - step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad.values()[i];
      const double err =
          std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return worst;
}

}  // namespace multivul::diff
