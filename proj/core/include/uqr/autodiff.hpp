// Copyright (c) 2026, UQR contributors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UQR_AUTODIFF_HPP_
#define UQR_AUTODIFF_HPP_

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace uqr::ad {

using Mat = Eigen::MatrixXd;

/// Handle to a tape node. Plain value; cheap to copy.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records matrix-valued operations and back-propagates adjoints in reverse
/// order. Values are immutable once recorded; gradients accumulate additively.
/// A tape serves one forward/backward cycle and is then discarded.
class Tape {
 public:
  Var leaf(Mat value);
  /// Same storage as leaf; named for inputs whose gradient nobody reads.
  Var constant(Mat value) { return leaf(std::move(value)); }
  Var scalar(double value) { return leaf(Mat::Constant(1, 1, value)); }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  int rows(Var v) const { return static_cast<int>(nodes_[v.id].value.rows()); }
  int cols(Var v) const { return static_cast<int>(nodes_[v.id].value.cols()); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and runs every backward rule once. `root`
  /// must be 1x1. Call at most once per tape.
  void backward(Var root);

  // Arithmetic. Elementwise ops require identical shapes.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a) { return scale(a, -1.0); }
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  /// a (m x n) plus a broadcast row (1 x n); the bias-add.
  Var add_row(Var a, Var row);

  // Nonlinearities, all elementwise.
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var relu(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var pow_const(Var a, double p);
  Var log(Var a);
  Var exp(Var a);
  /// Row-wise softmax; every output row sums to one.
  Var softmax_rows(Var a);
  /// Parameter-free row layer norm: (x - mean) / sqrt(var + eps) per row.
  Var layernorm_rows(Var a, double eps = 1e-6);

  // Reductions and reshaping.
  Var sum(Var a);  // 1x1
  Var mean(Var a) { return scale(sum(a), 1.0 / (static_cast<double>(rows(a)) * cols(a))); }
  Var slice_cols(Var a, int first, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> row_indices);

  // Elementwise min/max; ties route the gradient to the first argument.
  Var cwise_min(Var a, Var b);
  Var cwise_max(Var a, Var b);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  Var emplace(Mat value, std::function<void(Tape&)> backprop);
  Mat& grad_ref(Var v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace uqr::ad

#endif  // UQR_AUTODIFF_HPP_
