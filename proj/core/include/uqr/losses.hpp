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

#ifndef UQR_LOSSES_HPP_
#define UQR_LOSSES_HPP_

#include <span>

#include "uqr/mask.hpp"

namespace uqr {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// Binary focal loss on one logit. target=1: -alpha (1-p)^gamma log p,
/// target=0: -(1-alpha) p^gamma log(1-p), stabilized for saturated logits.
double sigmoid_focal_loss(double logit, int target, double alpha = 0.25, double gamma = 2.0);

/// Sum (not mean) of absolute differences.
double l1_loss(std::span<const double> a, std::span<const double> b);

/// Generalized IoU in [-1, 1]: IoU - (C - U)/C with C the enclosing-box area.
/// Both boxes degenerate yields 0 (and sets *both_degenerate when given).
double giou(const BoxXYXY& a, const BoxXYXY& b, bool* both_degenerate = nullptr);

inline double giou_loss(const BoxXYXY& a, const BoxXYXY& b) { return 1.0 - giou(a, b); }

/// Dice loss 1 - (2 sum(p g) + eps) / (sum p + sum g + eps), eps = 1.
double dice_loss(const SoftMask& pred, const BinaryMask& gt);

/// Plain box IoU (used by AP evaluation).
double box_iou(const BoxXYXY& a, const BoxXYXY& b);

double sigmoid(double x);

}  // namespace uqr

#endif  // UQR_LOSSES_HPP_
