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

#include "uqr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace uqr {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Shortest-augmenting-path assignment (Kuhn's algorithm with potentials)
// for an R x C matrix, R <= C. Returns the column chosen for each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> col_to_row(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(cols + 1, kInf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_to_row[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != 0);
    do {
      const int j1 = way[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(rows, -1);
  for (int j = 1; j <= cols; ++j) {
    if (col_to_row[j] > 0) row_to_col[col_to_row[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Row-ordered total, the canonical cost used for all optimality comparisons.
double total_of(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col) {
  double total = 0.0;
  for (int r = 0; r < static_cast<int>(row_to_col.size()); ++r) total += cost(r, row_to_col[r]);
  return total;
}

// Optimal completion for rows [first_row, R) over the unused columns, or
// empty when infeasible. Entries of `row_to_col` before first_row are kept.
bool complete_assignment(const Eigen::MatrixXd& cost, int first_row, std::vector<int>& row_to_col,
                         const std::vector<char>& col_used) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  std::vector<int> free_cols;
  for (int c = 0; c < cols; ++c) {
    if (!col_used[c]) free_cols.push_back(c);
  }
  const int sub_rows = rows - first_row;
  if (sub_rows == 0) return true;
  if (static_cast<int>(free_cols.size()) < sub_rows) return false;
  Eigen::MatrixXd sub(sub_rows, free_cols.size());
  for (int r = 0; r < sub_rows; ++r)
    for (std::size_t c = 0; c < free_cols.size(); ++c) sub(r, c) = cost(first_row + r, free_cols[c]);
  const std::vector<int> sub_cols = solve_assignment(sub);
  for (int r = 0; r < sub_rows; ++r) row_to_col[first_row + r] = free_cols[sub_cols[r]];
  return true;
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  require(rows <= cols, "hungarian: more rows than columns");
  require(cost.allFinite(), "hungarian: costs must be finite");
  Assignment out;
  if (rows == 0) return out;

  std::vector<int> incumbent = solve_assignment(cost);
  const double best_total = total_of(cost, incumbent);

  // Lexicographic tie-break: commit the smallest column per row that still
  // admits an optimal completion. The incumbent column always qualifies, so
  // the bit-exact equality test below cannot strand a row.
  std::vector<char> col_used(cols, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < incumbent[r]; ++c) {
      if (col_used[c]) continue;
      std::vector<int> candidate = incumbent;
      candidate[r] = c;
      std::vector<char> forced = col_used;
      forced[c] = 1;
      if (!complete_assignment(cost, r + 1, candidate, forced)) continue;
      if (total_of(cost, candidate) == best_total) {
        incumbent = candidate;
        break;
      }
    }
    col_used[incumbent[r]] = 1;
  }

  out.pairs.reserve(rows);
  for (int r = 0; r < rows; ++r) out.pairs.emplace_back(r, incumbent[r]);
  return out;
}

double assignment_cost(const Eigen::MatrixXd& cost, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [r, c] : assignment.pairs) total += cost(r, c);
  return total;
}

Eigen::MatrixXd pairwise_cost(const PredictionSet& pred, const std::vector<GroundTruthInstance>& gts,
                              const LossWeights& weights, const FocalParams& focal) {
  const int num_gt = static_cast<int>(gts.size());
  const int num_pred = pred.num_queries();
  Eigen::MatrixXd cost(num_gt, num_pred);
  for (int j = 0; j < num_gt; ++j) {
    const auto& gt = gts[j];
    require(gt.category >= 0 && gt.category < pred.num_classes(), "pairwise_cost: category out of range");
    const BoxXYXY gt_xyxy = to_xyxy(gt.box, 1.0, 1.0);
    for (int i = 0; i < num_pred; ++i) {
      const double logit = pred.logits(i, gt.category);
      const double cls_cost = sigmoid_focal_loss(logit, 1, focal.alpha, focal.gamma) -
                              sigmoid_focal_loss(logit, 0, focal.alpha, focal.gamma);
      double l1 = 0.0;
      l1 += std::abs(gt.box.cx - pred.boxes(i, 0));
      l1 += std::abs(gt.box.cy - pred.boxes(i, 1));
      l1 += std::abs(gt.box.w - pred.boxes(i, 2));
      l1 += std::abs(gt.box.h - pred.boxes(i, 3));
      const BoxCxCyWh pb{pred.boxes(i, 0), pred.boxes(i, 1), pred.boxes(i, 2), pred.boxes(i, 3)};
      const double g = giou(gt_xyxy, to_xyxy(pb, 1.0, 1.0));
      cost(j, i) = weights.cls * cls_cost + weights.l1 * l1 + weights.giou * (1.0 - g);
    }
  }
  return cost;
}

LossBreakdown instance_loss(const PredictionSet& pred, const std::vector<GroundTruthInstance>& gts,
                            const Assignment& assignment, const LossWeights& weights,
                            const FocalParams& focal) {
  const int num_gt = static_cast<int>(gts.size());
  const int num_pred = pred.num_queries();
  const int num_classes = pred.num_classes();
  require(static_cast<int>(assignment.pairs.size()) == num_gt, "instance_loss: assignment does not cover all gts");

  std::vector<int> pred_target(num_pred, -1);  // matched category per query
  std::vector<int> gt_of_pred(num_pred, -1);
  std::vector<char> gt_seen(num_gt, 0);
  for (const auto& [j, i] : assignment.pairs) {
    require(j >= 0 && j < num_gt && i >= 0 && i < num_pred, "instance_loss: assignment index out of range");
    require(!gt_seen[j] && pred_target[i] < 0, "instance_loss: assignment not injective");
    gt_seen[j] = 1;
    pred_target[i] = gts[j].category;
    gt_of_pred[i] = j;
  }

  const double norm = std::max(1, num_gt);
  LossBreakdown out;
  for (int i = 0; i < num_pred; ++i) {
    for (int s = 0; s < num_classes; ++s) {
      const int target = pred_target[i] == s ? 1 : 0;
      out.cls += sigmoid_focal_loss(pred.logits(i, s), target, focal.alpha, focal.gamma);
    }
  }
  for (const auto& [j, i] : assignment.pairs) {
    const auto& gt = gts[j];
    out.l1 += std::abs(gt.box.cx - pred.boxes(i, 0)) + std::abs(gt.box.cy - pred.boxes(i, 1)) +
              std::abs(gt.box.w - pred.boxes(i, 2)) + std::abs(gt.box.h - pred.boxes(i, 3));
    const BoxCxCyWh pb{pred.boxes(i, 0), pred.boxes(i, 1), pred.boxes(i, 2), pred.boxes(i, 3)};
    out.giou += 1.0 - giou(to_xyxy(gt.box, 1.0, 1.0), to_xyxy(pb, 1.0, 1.0));
    if (pred.vectors.cols() > 0) {
      require(static_cast<int>(gt.mask_vector.coeffs.size()) == static_cast<int>(pred.vectors.cols()),
              "instance_loss: mask vector dimension mismatch");
      for (int k = 0; k < static_cast<int>(pred.vectors.cols()); ++k) {
        out.vec += std::abs(gt.mask_vector.coeffs[static_cast<std::size_t>(k)] - pred.vectors(i, k));
      }
    }
  }
  out.cls /= norm;
  out.l1 /= norm;
  out.giou /= norm;
  out.vec /= norm;
  out.total = weights.cls * out.cls + weights.l1 * out.l1 + weights.giou * out.giou + weights.vec * out.vec;
  return out;
}

void append_loss_row(std::ostream& out, long step, const LossBreakdown& loss) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g", step, loss.cls, loss.l1,
                loss.giou, loss.vec, loss.total);
  out << buf << '\n';
}

}  // namespace uqr
