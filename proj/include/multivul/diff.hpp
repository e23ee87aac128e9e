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

#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// A Tape records primitive applications in insertion order. Every input id of
// a node precedes the node, so a single reverse sweep computes all
// gradients. Parameters are bound to the tape as leaves and receive
// accumulated (+=) gradients from backward().

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace multivul::diff {

class Tensor {
 public:
  // A single zero; shape {1}.
  Tensor();
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor filled(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  // Matrix view; rank-1 tensors read as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols() + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols() + c];
  }

  std::span<const double> values() const noexcept { return values_; }
  // Only optimizers and checkpoint loading write through this.
  std::span<double> mutable_values() noexcept { return values_; }

  // Requires size() == 1.
  double item() const;

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

struct Parameter {
  Parameter(std::string name, Tensor value);

  void zero_grad();

  std::string name;
  Tensor value;
  Tensor grad;
};

enum class Primitive {
  kLeaf,
  kMatmul,
  kAdd,
  kSubtract,
  kMultiply,
  kScale,
  kExp,
  kLog,
  kTranspose,
  kRowSoftmax,
  kRowLogSumExp,
  kRowL2Normalize,
  kMeanAll,
  kSumAll,
  kRowSquaredDistance,
  kSigmoid,
  kGelu,
  kEmbeddingLookup,
  kMeanPoolRows,
  kConcatRows,
};

std::string_view primitive_name(Primitive kind);

// Non-tensor arguments of a primitive.
struct Attributes {
  double scale = 1.0;                // kScale
  std::vector<std::size_t> indices;  // kEmbeddingLookup row ids
};

using NodeId = std::size_t;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(Tensor value);
  // Binds a parameter as a leaf. Binding the same parameter twice returns
  // the same node.
  NodeId parameter(Parameter& param);

  NodeId apply(Primitive kind, std::span<const NodeId> inputs,
               Attributes attrs = {});

  const Tensor& value(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Accumulates d(loss)/d(parameter) into every bound parameter's grad.
  void backward(NodeId loss);

 private:
  struct Node {
    Primitive kind = Primitive::kLeaf;
    std::vector<NodeId> inputs;
    Attributes attrs;
    Tensor value;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Tensor forward(Primitive kind, std::span<const NodeId> inputs,
                 const Attributes& attrs) const;
  void propagate(const Node& node, const std::vector<double>& upstream,
                 std::vector<std::vector<double>>& grads) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, NodeId> bound_;
};

// Handle to a tape node with value semantics; the tape must outlive it.
class Var {
 public:
  Var(Tape& tape, NodeId id) : tape_(&tape), id_(id) {}

  Tape& tape() const noexcept { return *tape_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const { return tape_->value(id_); }

 private:
  Tape* tape_;
  NodeId id_;
};

Var constant(Tape& tape, Tensor value);
Var bind(Tape& tape, Parameter& param);

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var exp(Var a);
Var log(Var a);
Var transpose(Var a);
Var row_softmax(Var a);
Var row_log_sum_exp(Var a);
Var row_l2_normalize(Var a);
Var mean_all(Var a);
Var sum_all(Var a);
Var row_squared_distance(Var a, Var b);
Var sigmoid(Var a);
Var gelu(Var a);
Var embedding_lookup(Var table, std::vector<std::size_t> ids);
Var mean_pool_rows(Var a);
Var concat_rows(std::span<const Var> parts);

using LossBuilder = std::function<Var(Tape&)>;

// Max over all parameter coordinates of
//   |analytic - central difference| / max(1, |central difference|).
// Parameter values are restored and gradients zeroed on return.
double grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                  double step);

}  // namespace multivul::diff
