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

#include "uqr/eval.hpp"

#include <algorithm>
#include <cmath>

#include "uqr/losses.hpp"

namespace uqr {

namespace {

constexpr int kRecallPoints = 101;

struct Candidate {
  double score;
  int image;
  int det_index;
};

// AP for one category at one IoU threshold, via 101-point interpolation.
double category_ap(std::span<const ImageEval> images, int category, double iou_thresh,
                   bool use_mask, int* gt_count_out) {
  // Collect detections of this category, sorted by descending score with a
  // deterministic tie order (image index, then detection index).
  std::vector<Candidate> candidates;
  int gt_total = 0;
  for (int img = 0; img < static_cast<int>(images.size()); ++img) {
    for (const SceneInstance& gt : images[img].gts) {
      if (gt.category == category) ++gt_total;
    }
    const auto& dets = images[img].detections;
    for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
      if (dets[static_cast<std::size_t>(d)].category == category) {
        candidates.push_back({dets[static_cast<std::size_t>(d)].score, img, d});
      }
    }
  }
  if (gt_count_out) *gt_count_out = gt_total;
  if (gt_total == 0) return -1.0;
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.det_index < b.det_index;
  });

  std::vector<std::vector<char>> gt_used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) gt_used[i].assign(images[i].gts.size(), 0);

  std::vector<char> is_tp(candidates.size(), 0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Candidate& cand = candidates[c];
    const Detection& det = images[cand.image].detections[static_cast<std::size_t>(cand.det_index)];
    double best_iou = 0.0;
    int best_gt = -1;
    const auto& gts = images[cand.image].gts;
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
      const SceneInstance& gt = gts[static_cast<std::size_t>(g)];
      if (gt.category != category || gt_used[cand.image][static_cast<std::size_t>(g)]) continue;
      const double iou = use_mask ? mask_iou(det.mask, gt.mask) : box_iou(det.box, gt.box);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = g;
      }
    }
    if (best_gt >= 0 && best_iou >= iou_thresh) {
      is_tp[c] = 1;
      gt_used[cand.image][static_cast<std::size_t>(best_gt)] = 1;
    }
  }

  // Precision at each recall level, interpolated from the running counts.
  std::vector<double> recalls, precisions;
  int tp = 0, fp = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    is_tp[c] ? ++tp : ++fp;
    recalls.push_back(static_cast<double>(tp) / gt_total);
    precisions.push_back(static_cast<double>(tp) / (tp + fp));
  }
  double ap = 0.0;
  for (int k = 0; k < kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / (kRecallPoints - 1);
    // max precision over recall >= r; precision is not monotone, so scan all
    double best = 0.0;
    for (std::size_t i = 0; i < recalls.size(); ++i) {
      if (recalls[i] >= r) best = std::max(best, precisions[i]);
    }
    ap += best;
  }
  return ap / kRecallPoints;
}

double mean_of_valid(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (v >= 0.0) {
      sum += v;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace

ApReport evaluate_detections(std::span<const ImageEval> images, int num_classes, bool with_masks) {
  ApReport report;
  std::vector<double> box_ap_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> mask_ap_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<int> valid(static_cast<std::size_t>(num_classes), 0);
  report.box_ap50_per_category.assign(static_cast<std::size_t>(num_classes), -1.0);
  report.mask_ap50_per_category.assign(static_cast<std::size_t>(num_classes), -1.0);

  for (int cat = 0; cat < num_classes; ++cat) {
    int gt_count = 0;
    for (int t = 0; t < 10; ++t) {
      const double thresh = 0.5 + 0.05 * t;
      const double box_ap = category_ap(images, cat, thresh, false, &gt_count);
      if (box_ap < 0.0) break;
      valid[static_cast<std::size_t>(cat)] = 1;
      box_ap_sum[static_cast<std::size_t>(cat)] += box_ap;
      if (t == 0) report.box_ap50_per_category[static_cast<std::size_t>(cat)] = box_ap;
      if (with_masks) {
        const double mask_ap = category_ap(images, cat, thresh, true, nullptr);
        mask_ap_sum[static_cast<std::size_t>(cat)] += mask_ap;
        if (t == 0) report.mask_ap50_per_category[static_cast<std::size_t>(cat)] = mask_ap;
      }
    }
  }

  std::vector<double> box_ap_mean, mask_ap_mean;
  for (int cat = 0; cat < num_classes; ++cat) {
    box_ap_mean.push_back(valid[static_cast<std::size_t>(cat)] ? box_ap_sum[static_cast<std::size_t>(cat)] / 10.0 : -1.0);
    mask_ap_mean.push_back(valid[static_cast<std::size_t>(cat)] ? mask_ap_sum[static_cast<std::size_t>(cat)] / 10.0 : -1.0);
  }
  report.box_ap50 = mean_of_valid(report.box_ap50_per_category);
  report.box_ap = mean_of_valid(box_ap_mean);
  if (with_masks) {
    report.mask_ap50 = mean_of_valid(report.mask_ap50_per_category);
    report.mask_ap = mean_of_valid(mask_ap_mean);
  }
  return report;
}

}  // namespace uqr
