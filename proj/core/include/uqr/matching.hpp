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

#ifndef UQR_MATCHING_HPP_
#define UQR_MATCHING_HPP_

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "uqr/codec.hpp"
#include "uqr/losses.hpp"
#include "uqr/mask.hpp"

namespace uqr {

/// One annotated instance: category, normalized box, codec-space mask vector,
/// plus the raw spatial mask kept around for evaluation.
struct GroundTruthInstance {
  int category = 0;
  BoxCxCyWh box;
  MaskVector mask_vector;
  BinaryMask raw_mask;
};

/// Raw per-query outputs of one decoder layer: pre-sigmoid class scores,
/// normalized cxcywh boxes, and mask vectors. `vectors` may have zero columns
/// when the mask branch is disabled.
struct PredictionSet {
  Eigen::MatrixXd logits;   // J x S
  Eigen::MatrixXd boxes;    // J x 4
  Eigen::MatrixXd vectors;  // J x n_k (or J x 0)

  int num_queries() const { return static_cast<int>(logits.rows()); }
  int num_classes() const { return static_cast<int>(logits.cols()); }
};

/// Injective map from ground truths into predictions; pairs are
/// (gt_index, pred_index) with gt_index ascending.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
};

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double vec = 3.0;
};

/// Per-term losses, each already normalized by the number of ground truths;
/// `total` is the weighted combination.
struct LossBreakdown {
  double cls = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
  double vec = 0.0;
  double total = 0.0;
};

/// Detection matching cost, one row per ground truth, one column per
/// prediction. The vector term deliberately does not participate.
Eigen::MatrixXd pairwise_cost(const PredictionSet& pred,
                              const std::vector<GroundTruthInstance>& gts,
                              const LossWeights& weights = {}, const FocalParams& focal = {});

/// Minimum-cost one-to-one assignment of rows to columns (R <= C). Among
/// optimal assignments returns the lexicographically smallest pair sequence.
Assignment hungarian(const Eigen::MatrixXd& cost);

double assignment_cost(const Eigen::MatrixXd& cost, const Assignment& assignment);

/// Full instance loss: matched focal/L1/giou/vector terms plus background
/// focal terms for every unmatched (query, class) slot.
LossBreakdown instance_loss(const PredictionSet& pred,
                            const std::vector<GroundTruthInstance>& gts,
                            const Assignment& assignment, const LossWeights& weights = {},
                            const FocalParams& focal = {});

/// Training-log row: step,cls,l1,giou,vec,total.
void append_loss_row(std::ostream& out, long step, const LossBreakdown& loss);

}  // namespace uqr

#endif  // UQR_MATCHING_HPP_
