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

#include "uqr/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace uqr::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::emplace(Mat value, std::function<void(Tape&)> backprop) {
  Node node;
  node.grad = Mat::Zero(value.rows(), value.cols());
  node.value = std::move(value);
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) { return emplace(std::move(value), nullptr); }

void Tape::backward(Var root) {
  require(root.valid() && root.id < static_cast<int>(nodes_.size()), "backward: bad root");
  require(nodes_[root.id].value.size() == 1, "backward: root must be scalar");
  nodes_[root.id].grad(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
}

Var Tape::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add: shape mismatch");
  Var out = emplace(value(a) + value(b), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    t.grad_ref(a) += t.grad(out);
    t.grad_ref(b) += t.grad(out);
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub: shape mismatch");
  Var out = emplace(value(a) - value(b), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    t.grad_ref(a) += t.grad(out);
    t.grad_ref(b) -= t.grad(out);
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "mul: shape mismatch");
  Var out = emplace(value(a).cwiseProduct(value(b)), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    t.grad_ref(a) += t.grad(out).cwiseProduct(t.value(b));
    t.grad_ref(b) += t.grad(out).cwiseProduct(t.value(a));
  };
  return out;
}

Var Tape::div(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "div: shape mismatch");
  Var out = emplace(value(a).cwiseQuotient(value(b)), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    t.grad_ref(a) += t.grad(out).cwiseQuotient(t.value(b));
    t.grad_ref(b) -= t.grad(out).cwiseProduct(t.value(out)).cwiseQuotient(t.value(b));
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
  Var out = emplace(value(a) * value(b), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    t.grad_ref(a).noalias() += t.grad(out) * t.value(b).transpose();
    t.grad_ref(b).noalias() += t.value(a).transpose() * t.grad(out);
  };
  return out;
}

Var Tape::transpose(Var a) {
  Var out = emplace(value(a).transpose(), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) { t.grad_ref(a) += t.grad(out).transpose(); };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = emplace(value(a) * s, nullptr);
  nodes_[out.id].backprop = [a, out, s](Tape& t) { t.grad_ref(a) += t.grad(out) * s; };
  return out;
}

Var Tape::add_scalar(Var a, double s) {
  Var out = emplace(value(a).array() + s, nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) { t.grad_ref(a) += t.grad(out); };
  return out;
}

Var Tape::add_row(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row: shape mismatch");
  Mat v = value(a);
  v.rowwise() += value(row).row(0);
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, row, out](Tape& t) {
    t.grad_ref(a) += t.grad(out);
    t.grad_ref(row) += t.grad(out).colwise().sum();
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  Mat v = value(a).unaryExpr([](double x) { return stable_sigmoid(x); });
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    const Mat& y = t.value(out);
    t.grad_ref(a) += t.grad(out).cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  };
  return out;
}

Var Tape::softplus(Var a) {
  Mat v = value(a).unaryExpr([](double x) { return stable_softplus(x); });
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    const Mat s = t.value(a).unaryExpr([](double x) { return stable_sigmoid(x); });
    t.grad_ref(a) += t.grad(out).cwiseProduct(s);
  };
  return out;
}

Var Tape::relu(Var a) {
  Var out = emplace(value(a).cwiseMax(0.0), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    const Mat gate = (t.value(a).array() > 0.0).cast<double>();
    t.grad_ref(a) += t.grad(out).cwiseProduct(gate.matrix());
  };
  return out;
}

Var Tape::abs(Var a) {
  Var out = emplace(value(a).cwiseAbs(), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    const Mat sign = t.value(a).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    t.grad_ref(a) += t.grad(out).cwiseProduct(sign);
  };
  return out;
}

Var Tape::square(Var a) {
  Var out = emplace(value(a).cwiseProduct(value(a)), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    t.grad_ref(a) += 2.0 * t.grad(out).cwiseProduct(t.value(a));
  };
  return out;
}

Var Tape::pow_const(Var a, double p) {
  if (p == 2.0) return square(a);
  Mat v = value(a).unaryExpr([p](double x) { return std::pow(x, p); });
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, out, p](Tape& t) {
    const Mat d = t.value(a).unaryExpr([p](double x) { return p * std::pow(x, p - 1.0); });
    t.grad_ref(a) += t.grad(out).cwiseProduct(d);
  };
  return out;
}

Var Tape::log(Var a) {
  Var out = emplace(value(a).array().log().matrix(), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    t.grad_ref(a) += t.grad(out).cwiseQuotient(t.value(a));
  };
  return out;
}

Var Tape::exp(Var a) {
  Var out = emplace(value(a).array().exp().matrix(), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    t.grad_ref(a) += t.grad(out).cwiseProduct(t.value(out));
  };
  return out;
}

Var Tape::softmax_rows(Var a) {
  Mat v = value(a);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    const Mat& y = t.value(out);
    const Mat& g = t.grad(out);
    Mat ga(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r) = y.row(r).cwiseProduct(g.row(r).array().matrix() - Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
    t.grad_ref(a) += ga;
  };
  return out;
}

Var Tape::layernorm_rows(Var a, double eps) {
  const Mat& x = value(a);
  const Eigen::Index n = x.cols();
  Mat y(x.rows(), n);
  Mat inv_sigma(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_sigma(r, 0) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (x.row(r).array() - mu) * inv_sigma(r, 0);
  }
  Var out = emplace(std::move(y), nullptr);
  nodes_[out.id].backprop = [a, out, inv_sigma, n](Tape& t) {
    const Mat& yv = t.value(out);
    const Mat& g = t.grad(out);
    Mat ga(yv.rows(), n);
    for (Eigen::Index r = 0; r < yv.rows(); ++r) {
      const double g_mean = g.row(r).mean();
      const double gy_mean = g.row(r).cwiseProduct(yv.row(r)).mean();
      ga.row(r) = inv_sigma(r, 0) * (g.row(r).array() - g_mean - yv.row(r).array() * gy_mean);
    }
    t.grad_ref(a) += ga;
  };
  return out;
}

Var Tape::sum(Var a) {
  Var out = emplace(Mat::Constant(1, 1, value(a).sum()), nullptr);
  nodes_[out.id].backprop = [a, out](Tape& t) {
    t.grad_ref(a).array() += t.grad(out)(0, 0);
  };
  return out;
}

Var Tape::slice_cols(Var a, int first, int count) {
  require(first >= 0 && count >= 1 && first + count <= cols(a), "slice_cols: range out of bounds");
  Var out = emplace(value(a).middleCols(first, count), nullptr);
  nodes_[out.id].backprop = [a, out, first, count](Tape& t) {
    t.grad_ref(a).middleCols(first, count) += t.grad(out);
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const Eigen::Index r = value(parts[0]).rows();
  Eigen::Index total = 0;
  for (Var p : parts) {
    require(value(p).rows() == r, "concat_cols: row mismatch");
    total += value(p).cols();
  }
  Mat v(r, total);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var out = emplace(std::move(v), nullptr);
  std::vector<Var> captured = parts;
  nodes_[out.id].backprop = [captured, out](Tape& t) {
    Eigen::Index from = 0;
    for (Var p : captured) {
      const Eigen::Index w = t.value(p).cols();
      t.grad_ref(p) += t.grad(out).middleCols(from, w);
      from += w;
    }
  };
  return out;
}

Var Tape::gather_rows(Var a, std::vector<int> row_indices) {
  Mat v(static_cast<Eigen::Index>(row_indices.size()), value(a).cols());
  for (std::size_t i = 0; i < row_indices.size(); ++i) {
    require(row_indices[i] >= 0 && row_indices[i] < rows(a), "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = value(a).row(row_indices[i]);
  }
  Var out = emplace(std::move(v), nullptr);
  nodes_[out.id].backprop = [a, out, idx = std::move(row_indices)](Tape& t) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      t.grad_ref(a).row(idx[i]) += t.grad(out).row(static_cast<Eigen::Index>(i));
    }
  };
  return out;
}

Var Tape::cwise_min(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "cwise_min: shape mismatch");
  Var out = emplace(value(a).cwiseMin(value(b)), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    const Mat pick_a = (t.value(a).array() <= t.value(b).array()).cast<double>();
    t.grad_ref(a) += t.grad(out).cwiseProduct(pick_a.matrix());
    t.grad_ref(b) += t.grad(out).cwiseProduct((1.0 - pick_a.array()).matrix());
  };
  return out;
}

Var Tape::cwise_max(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "cwise_max: shape mismatch");
  Var out = emplace(value(a).cwiseMax(value(b)), nullptr);
  nodes_[out.id].backprop = [a, b, out](Tape& t) {
    const Mat pick_a = (t.value(a).array() >= t.value(b).array()).cast<double>();
    t.grad_ref(a) += t.grad(out).cwiseProduct(pick_a.matrix());
    t.grad_ref(b) += t.grad(out).cwiseProduct((1.0 - pick_a.array()).matrix());
  };
  return out;
}

}  // namespace uqr::ad
