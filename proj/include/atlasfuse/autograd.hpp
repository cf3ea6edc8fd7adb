/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ATLASFUSE_AUTOGRAD_HPP_
#define ATLASFUSE_AUTOGRAD_HPP_

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// Every op returns a new Var holding its value and, when any input requires a
// gradient, a closure that pushes the output gradient back to its inputs.
// Graphs built purely from constants carry no closures, so inference runs
// through the same code paths at little extra cost.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace atlasfuse {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

namespace ad {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var parameter(Matrix value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Zero-filled when no gradient reached this node.
  Matrix grad() const;
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  // Seeds d(this)/d(this) = 1; requires a 1x1 value.
  void backward() const;

  static Var from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a 1 x c row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var mask_mul(const Var& a, const Matrix& mask);

Var relu(const Var& a);
Var abs(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// x * log(x), with 0 * log(0) = 0.
Var xlogx(const Var& a);

Var row_softmax(const Var& a);
Var log_row_softmax(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta,
               double eps = 1e-5);
// Each row divided by its Euclidean norm. With eps > 0 norms are clamped below
// at eps; otherwise a zero row throws ZeroNormRow.
Var row_normalize(const Var& a, double eps = 0.0);

Var transpose(const Var& a);
Var vstack(const std::vector<Var>& parts);
Var hstack(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Index begin, Index count);
// Row-major flattening into a single 1 x (rows*cols) row.
Var flatten_row(const Var& a);
Var col_mean(const Var& a);
Var sum(const Var& a);

}  // namespace ad
}  // namespace atlasfuse

#endif  // ATLASFUSE_AUTOGRAD_HPP_
