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

#ifndef UQR_EVAL_HPP_
#define UQR_EVAL_HPP_

#include <span>
#include <vector>

#include "uqr/model.hpp"
#include "uqr/synthetic.hpp"

namespace uqr {

/// Ground truths and detections of one image, paired for scoring.
struct ImageEval {
  std::vector<SceneInstance> gts;
  std::vector<Detection> detections;
};

/// Mean and per-category average precision at IoU 0.5 and averaged over
/// IoU in {0.50, 0.55, ..., 0.95}, for boxes and (when present) masks.
struct ApReport {
  double box_ap50 = 0.0;
  double box_ap = 0.0;
  double mask_ap50 = 0.0;
  double mask_ap = 0.0;
  std::vector<double> box_ap50_per_category;   // -1 when a category has no gt
  std::vector<double> mask_ap50_per_category;
};

/// COCO-style evaluation: greedy matching by descending score with per-gt
/// single use at each threshold, 101-point interpolated precision.
ApReport evaluate_detections(std::span<const ImageEval> images, int num_classes,
                             bool with_masks = true);

/// Average precision of one category at one IoU threshold from (score, iou
/// vs every gt) pairs; exposed for direct testing against hand-walked
/// precision/recall fixtures.
struct ScoredMatch {
  double score = 0.0;
  int image = 0;
  int gt_index = -1;  // best unmatched gt, filled during matching
  double iou = 0.0;
};

}  // namespace uqr

#endif  // UQR_EVAL_HPP_
