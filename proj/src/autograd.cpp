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
#include "atlasfuse/autograd.hpp"

#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "atlasfuse/error.hpp"

namespace atlasfuse::ad {

using detail::Node;

namespace {

bool any_requires(const std::vector<std::shared_ptr<Node>>& inputs) {
  for (const auto& in : inputs) {
    if (in->requires_grad) return true;
  }
  return false;
}

Var make(Matrix value, std::vector<std::shared_ptr<Node>> inputs,
         std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (any_requires(inputs)) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var::from_node(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

void push(Node& self, std::size_t i, const Matrix& g) {
  if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(g);
}

}  // namespace

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return from_node(std::move(node));
}

Var Var::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return from_node(std::move(node));
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) {
    return Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

void Var::backward() const {
  if (node_->value.rows() != 1 || node_->value.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "backward() needs a scalar root");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "matmul: inner dimensions " + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()));
  }
  return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& B = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      self.inputs[0]->accumulate(self.grad * B.transpose());
    }
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(A.transpose() * self.grad);
    }
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()},
              [](Node& self) {
                const Matrix& A = self.inputs[0]->value;
                const Matrix& B = self.inputs[1]->value;
                if (self.inputs[0]->requires_grad) {
                  self.inputs[0]->accumulate(self.grad.cwiseProduct(B));
                }
                if (self.inputs[1]->requires_grad) {
                  self.inputs[1]->accumulate(self.grad.cwiseProduct(A));
                }
              });
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a.node()},
              [s](Node& self) { push(self, 0, self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add_row: bias width mismatch");
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a.node(), row.node()}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(self.grad.colwise().sum());
    }
  });
}

Var mask_mul(const Var& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "mask_mul: mask shape mismatch");
  }
  return make(a.value().cwiseProduct(mask), {a.node()}, [mask](Node& self) {
    push(self, 0, self.grad.cwiseProduct(mask));
  });
}

Var relu(const Var& a) {
  return make(a.value().cwiseMax(0.0), {a.node()}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    push(self, 0, (A.array() > 0.0).select(self.grad, 0.0));
  });
}

Var abs(const Var& a) {
  return make(a.value().cwiseAbs(), {a.node()}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    push(self, 0, self.grad.cwiseProduct(A.cwiseSign()));
  });
}

Var exp(const Var& a) {
  return make(a.value().array().exp().matrix(), {a.node()}, [](Node& self) {
    push(self, 0, self.grad.cwiseProduct(self.value));
  });
}

Var log(const Var& a) {
  return make(a.value().array().log().matrix(), {a.node()}, [](Node& self) {
    push(self, 0, self.grad.cwiseQuotient(self.inputs[0]->value));
  });
}

Var xlogx(const Var& a) {
  const Matrix& x = a.value();
  Matrix out = (x.array() > 0.0).select(x.array() * x.array().log(), 0.0);
  return make(std::move(out), {a.node()}, [](Node& self) {
    const Matrix& X = self.inputs[0]->value;
    Matrix d = (X.array() > 0.0).select(X.array().log() + 1.0, 0.0);
    push(self, 0, self.grad.cwiseProduct(d));
  });
}

namespace {

Matrix stable_row_softmax(const Matrix& a) {
  if (!a.allFinite()) {
    throw Error(ErrorCode::kNonFiniteActivation, "softmax input is not finite");
  }
  Matrix out = a.colwise() - a.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

}  // namespace

Var row_softmax(const Var& a) {
  return make(stable_row_softmax(a.value()), {a.node()}, [](Node& self) {
    const Matrix& P = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(P).rowwise().sum();
    Matrix g = P.cwiseProduct(self.grad.colwise() - dots);
    push(self, 0, g);
  });
}

Var log_row_softmax(const Var& a) {
  const Matrix& x = a.value();
  if (!x.allFinite()) {
    throw Error(ErrorCode::kNonFiniteActivation, "log-softmax input is not finite");
  }
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  Matrix out = shifted.colwise() - lse;
  return make(std::move(out), {a.node()}, [](Node& self) {
    Matrix P = self.value.array().exp();
    Eigen::VectorXd gs = self.grad.rowwise().sum();
    Matrix g = self.grad - P.cwiseProduct(gs.replicate(1, P.cols()));
    push(self, 0, g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 ||
      beta.cols() != d) {
    throw Error(ErrorCode::kShapeMismatch, "layer_norm: affine width mismatch");
  }
  const Matrix& X = x.value();
  Eigen::VectorXd mean = X.rowwise().mean();
  Matrix centered = X.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) +
       eps)
          .rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);

  return make(std::move(out), {x.node(), gamma.node(), beta.node()},
              [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                const Matrix& G = self.grad;
                const Matrix& gam = self.inputs[1]->value;
                if (self.inputs[0]->requires_grad) {
                  Matrix dxhat = G.array().rowwise() * gam.row(0).array();
                  const double n = static_cast<double>(dxhat.cols());
                  Eigen::VectorXd m1 = dxhat.rowwise().sum() / n;
                  Eigen::VectorXd m2 =
                      dxhat.cwiseProduct(xhat).rowwise().sum() / n;
                  Matrix dx = dxhat.colwise() - m1;
                  dx.array() -= xhat.array().colwise() * m2.array();
                  dx.array().colwise() *= inv_std.array();
                  self.inputs[0]->accumulate(dx);
                }
                if (self.inputs[1]->requires_grad) {
                  self.inputs[1]->accumulate(G.cwiseProduct(xhat).colwise().sum());
                }
                if (self.inputs[2]->requires_grad) {
                  self.inputs[2]->accumulate(G.colwise().sum());
                }
              });
}

Var row_normalize(const Var& a, double eps) {
  Eigen::VectorXd norms = a.value().rowwise().norm();
  Eigen::VectorXd clamped = Eigen::VectorXd::Zero(norms.size());
  for (Index i = 0; i < norms.size(); ++i) {
    if (eps > 0.0 && norms(i) < eps) {
      norms(i) = eps;
      clamped(i) = 1.0;
    } else if (!(norms(i) > 0.0)) {
      throw Error(ErrorCode::kZeroNormRow,
                  "row " + std::to_string(i) + " has zero norm");
    }
  }
  Matrix out = a.value().array().colwise() / norms.array();
  return make(std::move(out), {a.node()},
              [norms = std::move(norms), clamped = std::move(clamped)](Node& self) {
                const Matrix& Y = self.value;
                Eigen::VectorXd dots = self.grad.cwiseProduct(Y).rowwise().sum();
                dots.array() *= 1.0 - clamped.array();
                Matrix g = self.grad - Y.cwiseProduct(dots.replicate(1, Y.cols()));
                g.array().colwise() /= norms.array();
                push(self, 0, g);
              });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a.node()},
              [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "vstack: empty");
  const Index cols = parts.front().cols();
  Index rows = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw Error(ErrorCode::kShapeMismatch, "vstack: column count mismatch");
    }
    rows += p.rows();
    inputs.push_back(p.node());
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make(std::move(out), std::move(inputs), [](Node& self) {
    Index at = 0;
    for (auto& in : self.inputs) {
      const Index r = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "hstack: empty");
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw Error(ErrorCode::kShapeMismatch, "hstack: row count mismatch");
    }
    cols += p.cols();
    inputs.push_back(p.node());
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make(std::move(out), std::move(inputs), [](Node& self) {
    Index at = 0;
    for (auto& in : self.inputs) {
      const Index c = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var slice_rows(const Var& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "slice_rows: range out of bounds");
  }
  return make(a.value().middleRows(begin, count), {a.node()},
              [begin, count](Node& self) {
                if (!self.inputs[0]->requires_grad) return;
                const Matrix& in = self.inputs[0]->value;
                Matrix g = Matrix::Zero(in.rows(), in.cols());
                g.middleRows(begin, count) = self.grad;
                self.inputs[0]->accumulate(g);
              });
}

Var flatten_row(const Var& a) {
  const Index r = a.rows();
  const Index c = a.cols();
  Matrix out(1, r * c);
  for (Index i = 0; i < r; ++i) out.block(0, i * c, 1, c) = a.value().row(i);
  return make(std::move(out), {a.node()}, [r, c](Node& self) {
    Matrix g(r, c);
    for (Index i = 0; i < r; ++i) g.row(i) = self.grad.block(0, i * c, 1, c);
    push(self, 0, g);
  });
}

Var col_mean(const Var& a) {
  return make(a.value().colwise().mean(), {a.node()}, [](Node& self) {
    const Index n = self.inputs[0]->value.rows();
    push(self, 0, self.grad.replicate(n, 1) / static_cast<double>(n));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a.node()}, [](Node& self) {
    const Matrix& in = self.inputs[0]->value;
    push(self, 0, Matrix::Constant(in.rows(), in.cols(), self.grad(0, 0)));
  });
}

}  // namespace atlasfuse::ad
