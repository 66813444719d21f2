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

#include "uqr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uqr {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// log(sigmoid(x)) = -softplus(-x), stable on both tails.
double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

double sigmoid_focal_loss(double logit, int target, double alpha, double gamma) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("focal: alpha must be in [0,1]");
  if (gamma < 0.0) throw std::invalid_argument("focal: gamma must be >= 0");
  const double p = sigmoid(logit);
  if (target == 1) {
    return alpha * std::pow(1.0 - p, gamma) * softplus(-logit);
  }
  return (1.0 - alpha) * std::pow(p, gamma) * softplus(logit);
}

double l1_loss(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_loss: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum;
}

double box_iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const BoxXYXY& a, const BoxXYXY& b, bool* both_degenerate) {
  if (a.x2 < a.x1 || a.y2 < a.y1 || b.x2 < b.x1 || b.y2 < b.y1) {
    throw std::invalid_argument("giou: invalid box");
  }
  if (both_degenerate) *both_degenerate = false;
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double enclosing = cw * ch;
  if (enclosing <= 0.0) {
    if (both_degenerate) *both_degenerate = true;
    return 0.0;
  }
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  return iou - (enclosing - uni) / enclosing;
}

double dice_loss(const SoftMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw std::invalid_argument("dice_loss: dimension mismatch");
  }
  constexpr double kEps = 1.0;
  double dot = 0.0, pred_sum = 0.0, gt_sum = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    dot += pred.values[i] * gt.bits[i];
    pred_sum += pred.values[i];
    gt_sum += gt.bits[i];
  }
  return 1.0 - (2.0 * dot + kEps) / (pred_sum + gt_sum + kEps);
}

}  // namespace uqr
